"""Central finite-difference gradient checks shared by the unit and acceptance suites."""

import numpy as np

from radar_ood.nn import (
    Conv2D,
    Dense,
    Flatten,
    MaxPool2D,
    Reshape,
    ReLU,
    Sequential,
    Sigmoid,
    TConv2D,
    Upsample2D,
    backward,
    bce_grad,
    bce_loss,
)

STEP = 1e-5
TOL = 1e-4


def rel_error(a, b) -> float:
    a, b = np.ravel(a), np.ravel(b)
    scale = max(np.linalg.norm(a), np.linalg.norm(b))
    return 0.0 if scale == 0 else float(np.linalg.norm(a - b) / scale)


def numeric_grad(f, x):
    g = np.zeros_like(x)
    for i in np.ndindex(x.shape):
        old = x[i]
        x[i] = old + STEP
        hi = f()
        x[i] = old - STEP
        lo = f()
        x[i] = old
        g[i] = (hi - lo) / (2 * STEP)
    return g


def check_layer(layer, x, params, rng) -> float:
    """Worst relative error over the input and every parameter, for L = <layer(x), R>."""
    y, cache = layer.forward(x, params)
    r = rng.standard_normal(y.shape)
    grads = {}
    dx = layer.backward(r, cache, params, grads, need_input_grad=True)

    def loss():
        return float(np.sum(layer.forward(x, params)[0] * r))

    worst = rel_error(dx, numeric_grad(loss, x))
    for name in layer.param_names:
        worst = max(worst, rel_error(grads[name], numeric_grad(loss, params[name])))
    return worst


def _params(layer, rng):
    return {k: rng.standard_normal(s) * 0.5 for k, s in layer.param_shapes().items()}


def _spread(rng, shape):
    # distinct values with gaps far above the FD step, so no max switches sides
    n = int(np.prod(shape))
    return (rng.permutation(n).reshape(shape) + rng.uniform(0.2, 0.8, shape)) / n


def _away_from_zero(rng, shape):
    return rng.choice([-1.0, 1.0], shape) * rng.uniform(0.05, 1.0, shape)


def draw(kind: str, rng):
    """(layer, input, params) for one random small-shape case of ``kind``."""
    n = int(rng.integers(1, 3))
    h, w = 2 * int(rng.integers(1, 4)), 2 * int(rng.integers(1, 4))
    c = int(rng.integers(1, 4))
    if kind in ("conv", "tconv"):
        c_out = int(rng.integers(1, 5))
        layer = Conv2D("l", c, c_out) if kind == "conv" else TConv2D("l", c, c_out)
        return layer, rng.standard_normal((n, h, w, c)), _params(layer, rng)
    if kind == "dense":
        layer = Dense("l", int(rng.integers(1, 10)), int(rng.integers(1, 10)))
        return layer, rng.standard_normal((n, layer.n_in)), _params(layer, rng)
    if kind == "maxpool":
        return MaxPool2D(), _spread(rng, (n, h, w, c)), {}
    if kind == "upsample":
        return Upsample2D(), rng.standard_normal((n, h, w, c)), {}
    if kind == "relu":
        return ReLU(), _away_from_zero(rng, (n, h, w, c)), {}
    if kind == "sigmoid":
        return Sigmoid(), rng.standard_normal((n, h, w, c)) * 3, {}
    if kind == "flatten":
        return Flatten(), rng.standard_normal((n, h, w, c)), {}
    if kind == "reshape":
        return Reshape(target=(w, h * c)), rng.standard_normal((n, h * w * c)), {}
    raise KeyError(kind)


LAYER_KINDS = ("conv", "tconv", "dense", "maxpool", "upsample", "relu", "sigmoid", "flatten", "reshape")


def check_bce(rng) -> float:
    shape = (int(rng.integers(1, 4)), int(rng.integers(1, 6)))
    p = rng.uniform(0.05, 0.95, shape)
    t = rng.uniform(0, 1, shape)
    return rel_error(bce_grad(p, t), numeric_grad(lambda: bce_loss(p, t), p))


def tiny_network(filters: int = 2) -> Sequential:
    """8x8 autoencoder with every layer kind, for whole-network checks."""
    return Sequential(
        [
            Conv2D("c1", 1, filters),
            ReLU(),
            MaxPool2D(),
            Flatten(),
            Dense("d1", 16 * filters, 6),
            Dense("d2", 6, 16 * filters),
            Reshape(target=(4, 4, filters)),
            Upsample2D(),
            TConv2D("t1", filters, filters),
            ReLU(),
            TConv2D("t2", filters, 1),
            Sigmoid(),
        ]
    )


def check_network(rng, filters: int = 2) -> float:
    net = tiny_network(filters)
    params = _params(net, rng)
    x = rng.uniform(0, 1, (2, 8, 8, 1))
    _, grads = backward(net, params, x, x)
    worst = 0.0
    for name, p in params.items():
        num = numeric_grad(lambda: bce_loss(net.forward(x, params, keep_cache=False)[0], x), p)
        worst = max(worst, rel_error(grads[name], num))
    return worst


def run_suite(draws: int = 20, seed: int = 0) -> dict[str, float]:
    """Worst relative error per layer kind over ``draws`` random cases."""
    rng = np.random.default_rng(seed)
    worst = {}
    for kind in LAYER_KINDS:
        worst[kind] = max(check_layer(*draw(kind, rng), rng) for _ in range(draws))
    worst["bce"] = max(check_bce(rng) for _ in range(draws))
    worst["network"] = max(check_network(rng) for _ in range(draws))
    return worst
