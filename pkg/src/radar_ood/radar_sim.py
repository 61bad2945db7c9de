"""Point-scatterer FMCW simulator producing raw ADC frames.

Every scene is a pure function of its seed: trajectories are closed-form in the
frame index and the per-frame noise stream comes from a counter-based split of
the scene seed, so frames can be generated in any order.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0
MIN_RANGE = 0.1


class SceneError(ValueError):
    """Raised for scenes that cannot be simulated (bad geometry, no targets)."""


class SceneLabel(enum.IntEnum):
    ID_WALK = 0
    OOD_FAN = 1
    OOD_TOY_CAR = 2
    OOD_PENDULUM = 3
    OOD_ROBOT_VACUUM = 4

    @property
    def is_id(self) -> bool:
        return self is SceneLabel.ID_WALK


OOD_LABELS = (
    SceneLabel.OOD_FAN,
    SceneLabel.OOD_TOY_CAR,
    SceneLabel.OOD_PENDULUM,
    SceneLabel.OOD_ROBOT_VACUUM,
)


@dataclass(frozen=True)
class RadarConfig:
    n_tx: int = 1
    n_rx: int = 3
    f_s: float = 2e6
    n_c: int = 64
    n_s: int = 128
    t_f: float = 0.050
    t_c: float = 391.55e-6
    f_min: float = 60.1e9
    f_max: float = 61.1e9
    bandwidth: float = 1e9
    c: float = SPEED_OF_LIGHT

    def __post_init__(self):
        for name in ("f_s", "t_f", "t_c", "f_min", "f_max", "bandwidth", "c"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")
        for name in ("n_c", "n_s"):
            n = getattr(self, name)
            if n < 2 or n & (n - 1):
                raise ValueError(f"{name} must be a power of two, got {n}")
        if self.n_rx < 1 or self.n_tx < 1:
            raise ValueError("antenna counts must be >= 1")
        if not np.isclose(self.bandwidth, self.f_max - self.f_min, rtol=1e-9, atol=0.0):
            raise ValueError("bandwidth must equal f_max - f_min")
        if self.n_c * self.t_c > self.t_f:
            raise ValueError("chirp train does not fit in the frame period")

    @property
    def chirp_duration(self) -> float:
        """Active (sampled) ramp time; idle time fills the rest of t_c."""
        return self.n_s / self.f_s

    @property
    def slope(self) -> float:
        return self.bandwidth / self.chirp_duration

    @property
    def range_resolution(self) -> float:
        return self.c / (2.0 * self.bandwidth)

    @property
    def max_range(self) -> float:
        # beat frequency must stay below Nyquist
        return self.f_s / 2.0 * self.c / (2.0 * self.slope)

    @property
    def velocity_resolution(self) -> float:
        return self.c / (2.0 * self.f_min * self.t_c * self.n_c)

    def range_bin(self, r: float) -> float:
        """Fractional fast-time FFT bin of a target at range ``r``."""
        return 2.0 * self.slope * r / self.c * self.n_s / self.f_s

    def doppler_bin(self, v: float) -> float:
        """Fractional Doppler bin offset from zero-Doppler for radial velocity ``v``."""
        return 2.0 * self.f_min * v * self.t_c * self.n_c / self.c

    @property
    def frame_shape(self) -> tuple[int, int, int]:
        return (self.n_rx, self.n_c, self.n_s)


# -- trajectories -----------------------------------------------------------
# All trajectories are frozen dataclasses evaluated at a frame index, so scenes
# pickle cleanly and stay pure functions of their parameters.


@dataclass(frozen=True)
class ConstantTrajectory:
    value: float

    def __call__(self, frame_idx):
        return np.full(np.shape(frame_idx), self.value, dtype=float)[()]


@dataclass(frozen=True)
class SinusoidRange:
    """center + sum_i amp_i * sin(2*pi*freq_i*t + phase_i), t = frame_idx * t_f."""

    center: float
    amps: tuple[float, ...]
    freqs: tuple[float, ...]
    phases: tuple[float, ...]
    t_f: float

    def __call__(self, frame_idx):
        t = np.asarray(frame_idx, dtype=float) * self.t_f
        r = np.full(np.shape(t), self.center, dtype=float)
        for a, f, p in zip(self.amps, self.freqs, self.phases):
            r = r + a * np.sin(2 * np.pi * f * t + p)
        return r[()]

    def velocity(self) -> "SinusoidVelocity":
        return SinusoidVelocity(self.amps, self.freqs, self.phases, self.t_f)


@dataclass(frozen=True)
class SinusoidVelocity:
    amps: tuple[float, ...]
    freqs: tuple[float, ...]
    phases: tuple[float, ...]
    t_f: float

    def __call__(self, frame_idx):
        t = np.asarray(frame_idx, dtype=float) * self.t_f
        v = np.zeros(np.shape(t))
        for a, f, p in zip(self.amps, self.freqs, self.phases):
            v = v + a * 2 * np.pi * f * np.cos(2 * np.pi * f * t + p)
        return v[()]


@dataclass(frozen=True)
class BounceRange:
    """Constant-speed back-and-forth motion between ``lo`` and ``hi`` (triangle wave)."""

    lo: float
    hi: float
    speed: float
    offset: float  # distance travelled at t=0, in [0, 2*(hi-lo))
    t_f: float

    def _phase(self, frame_idx):
        span = self.hi - self.lo
        d = self.offset + self.speed * np.asarray(frame_idx, dtype=float) * self.t_f
        return np.mod(d, 2 * span), span

    def __call__(self, frame_idx):
        d, span = self._phase(frame_idx)
        return (self.lo + np.where(d < span, d, 2 * span - d))[()]

    def velocity(self) -> "BounceVelocity":
        return BounceVelocity(self)


@dataclass(frozen=True)
class BounceVelocity:
    path: BounceRange

    def __call__(self, frame_idx):
        d, span = self.path._phase(frame_idx)
        return np.where(d < span, self.path.speed, -self.path.speed)[()]


@dataclass(frozen=True)
class MicroDoppler:
    """Sinusoidal radial-velocity modulation: amplitude * sin(2*pi*frequency*t + phase)."""

    amplitude: float
    frequency: float
    phase: float

    def displacement(self, t0, dt):
        """Range offset accumulated over [t0, t0 + dt]."""
        w = 2 * np.pi * self.frequency
        return self.amplitude / w * (np.cos(w * t0 + self.phase) - np.cos(w * (t0 + dt) + self.phase))


@dataclass(frozen=True)
class Scatterer:
    range_trajectory: Callable
    radial_velocity_trajectory: Callable
    amplitude: float = 1.0
    micro_doppler: MicroDoppler | None = None
    role: str = "body"

    def __post_init__(self):
        if self.amplitude < 0:
            raise SceneError("scatterer amplitude must be >= 0")

    def chirp_ranges(self, config: RadarConfig, frame_idx: int) -> np.ndarray:
        """Range at the start of every chirp of frame ``frame_idx``, shape (n_c,)."""
        t_slow = np.arange(config.n_c) * config.t_c
        r = float(self.range_trajectory(frame_idx)) + float(self.radial_velocity_trajectory(frame_idx)) * t_slow
        if self.micro_doppler is not None:
            r = r + self.micro_doppler.displacement(frame_idx * config.t_f, t_slow)
        return r


def static_scatterer(r: float, amplitude: float) -> Scatterer:
    return Scatterer(ConstantTrajectory(r), ConstantTrajectory(0.0), amplitude, None, "static")


@dataclass(frozen=True)
class Scene:
    label: SceneLabel
    scatterers: tuple[Scatterer, ...]
    noise_std: float = 0.0
    seed: int = 0
    clutter: tuple[Scatterer, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "label", SceneLabel(self.label))
        object.__setattr__(self, "scatterers", tuple(self.scatterers))
        object.__setattr__(self, "clutter", tuple(self.clutter))
        if self.noise_std < 0:
            raise SceneError("noise_std must be >= 0")
        if self.label is SceneLabel.ID_WALK and self.scatterers:
            roles = [s.role for s in self.scatterers]
            if roles.count("torso") != 1 or not 2 <= roles.count("limb") <= 4 or len(roles) != roles.count("torso") + roles.count("limb"):
                raise SceneError("walking scene needs one torso and 2-4 limb scatterers")


@dataclass
class AdcFrameSet:
    config: RadarConfig
    frames: np.ndarray  # (n_frames, n_rx, n_c, n_s)
    labels: np.ndarray  # uint8 label codes
    scene_seeds: np.ndarray  # uint64, per frame
    seed: int = 0

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.uint8)
        self.scene_seeds = np.asarray(self.scene_seeds, dtype=np.uint64)
        n = len(self.labels)
        if self.frames.shape != (n, *self.config.frame_shape):
            raise ValueError(f"frames shape {self.frames.shape} does not match config {self.config.frame_shape} x {n}")
        if len(self.scene_seeds) != n:
            raise ValueError("one scene seed per frame required")

    def __len__(self) -> int:
        return len(self.labels)


# -- signal model -------------------------------------------------------------


def _check_ranges(r: np.ndarray, config: RadarConfig) -> None:
    if np.any(r <= MIN_RANGE) or np.any(r >= config.max_range):
        raise SceneError(
            f"scatterer range {float(np.min(r)):.3f}..{float(np.max(r)):.3f} m outside "
            f"({MIN_RANGE}, {config.max_range:.3f}) m"
        )


def _chirp_block(scatterer: Scatterer, config: RadarConfig, frame_idx: int, chirps: np.ndarray) -> np.ndarray:
    r = scatterer.chirp_ranges(config, frame_idx)[chirps]
    _check_ranges(r, config)
    if scatterer.amplitude == 0:
        return np.zeros((len(chirps), config.n_s))
    t = np.arange(config.n_s) / config.f_s
    f_b = 2.0 * config.slope * r / config.c
    # carrier term gives the chirp-to-chirp Doppler phase 4*pi*f_min*v*t_c/c
    phase = 2.0 * np.pi * (f_b[:, None] * t[None, :] + (2.0 * config.f_min / config.c) * r[:, None])
    return scatterer.amplitude * np.cos(phase)


def beat_signal(scatterer: Scatterer, config: RadarConfig, frame_idx: int, chirp_idx: int) -> np.ndarray:
    """Noise-free IF samples of one chirp for one scatterer, length ``n_s``."""
    if not 0 <= chirp_idx < config.n_c:
        raise IndexError(f"chirp index {chirp_idx} out of range")
    return _chirp_block(scatterer, config, frame_idx, np.array([chirp_idx]))[0]


def frame_signal(scatterers: Sequence[Scatterer], config: RadarConfig, frame_idx: int) -> np.ndarray:
    """Noise-free (n_c, n_s) IF matrix, the sum of all scatterer returns."""
    chirps = np.arange(config.n_c)
    out = np.zeros((config.n_c, config.n_s))
    for s in scatterers:
        out += _chirp_block(s, config, frame_idx, chirps)
    return out


def frame_rng(seed: int, frame_idx: int) -> np.random.Generator:
    """Independent stream for frame ``frame_idx`` of the scene seeded with ``seed``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=(int(frame_idx),))))


def simulate_frame(scene: Scene, config: RadarConfig, frame_idx: int) -> np.ndarray:
    if not scene.scatterers:
        raise SceneError("scene has no scatterers")
    sig = frame_signal(scene.scatterers + scene.clutter, config, frame_idx)
    frame = np.broadcast_to(sig, config.frame_shape).copy()
    if scene.noise_std > 0:
        frame += scene.noise_std * frame_rng(scene.seed, frame_idx).standard_normal(config.frame_shape)
    return frame


def simulate_scene(scene: Scene, config: RadarConfig, n_frames: int) -> AdcFrameSet:
    if n_frames < 1:
        raise ValueError("n_frames must be >= 1")
    if not scene.scatterers:
        raise SceneError("scene has no scatterers")
    frames = np.empty((n_frames, *config.frame_shape))
    for k in range(n_frames):
        frames[k] = simulate_frame(scene, config, k)
    return AdcFrameSet(
        config=config,
        frames=frames,
        labels=np.full(n_frames, int(scene.label), dtype=np.uint8),
        scene_seeds=np.full(n_frames, scene.seed, dtype=np.uint64),
        seed=scene.seed,
    )


def concat_frame_sets(parts: Sequence[AdcFrameSet], seed: int = 0) -> AdcFrameSet:
    if not parts:
        raise ValueError("nothing to concatenate")
    config = parts[0].config
    for p in parts[1:]:
        if p.config != config or p.frames.shape[1:] != parts[0].frames.shape[1:]:
            raise ValueError("frame dimensions differ between scenes")
    return AdcFrameSet(
        config=config,
        frames=np.concatenate([p.frames for p in parts]),
        labels=np.concatenate([p.labels for p in parts]),
        scene_seeds=np.concatenate([p.scene_seeds for p in parts]),
        seed=seed,
    )


def build_dataset(recipe: Sequence[tuple[Scene, int]], config: RadarConfig, seed: int = 0) -> AdcFrameSet:
    if not recipe:
        raise ValueError("recipe is empty")
    return concat_frame_sets([simulate_scene(scene, config, n) for scene, n in recipe], seed=seed)


# -- scene generators -----------------------------------------------------------


def noise_std_for_snr(config: RadarConfig, snr_db: float, amplitude: float = 1.0) -> float:
    """ADC noise std giving peak-to-noise ratio ``snr_db`` in one range-Doppler cell.

    Accounts for both window gains, the slow-time mean removal and the
    coherent average over receivers.
    """
    from .dsp import RDI_SIDELOBE_DB, chebyshev_window

    ws = chebyshev_window(config.n_s, RDI_SIDELOBE_DB)
    wc = chebyshev_window(config.n_c, RDI_SIDELOBE_DB)
    peak = 0.5 * amplitude * ws.sum() * wc.sum()
    noise_per_unit_var = (ws**2).sum() * (wc**2).sum() * (1 - 1 / config.n_c) / config.n_rx
    return float(peak / np.sqrt(noise_per_unit_var * 10 ** (snr_db / 10)))


def scene_seed(dataset_seed: int, *key: int) -> int:
    return int(np.random.SeedSequence(int(dataset_seed), spawn_key=tuple(int(k) for k in key)).generate_state(1, np.uint64)[0])


def _smooth_path(rng, lo, hi, v_max, t_f, n_terms=3):
    """Random sum of sinusoids confined to [lo, hi] with |velocity| <= v_max."""
    center = rng.uniform(lo + 0.3 * (hi - lo), hi - 0.3 * (hi - lo))
    room = min(center - lo, hi - center)
    freqs = rng.uniform(0.05, 0.4, n_terms)
    weights = rng.dirichlet(np.ones(n_terms))
    # amplitude budget limited by both the range box and the speed cap
    scale = min(room, v_max / float(np.sum(weights * 2 * np.pi * freqs)))
    amps = tuple(float(a) for a in weights * scale * rng.uniform(0.7, 1.0))
    phases = tuple(float(p) for p in rng.uniform(0, 2 * np.pi, n_terms))
    return SinusoidRange(float(center), amps, tuple(float(f) for f in freqs), phases, t_f)


def _room_clutter(rng, config: RadarConfig, n: int) -> tuple[Scatterer, ...]:
    ranges = rng.uniform(0.5, 0.9 * config.max_range, n)
    amps = rng.uniform(0.5, 2.0, n)
    return tuple(static_scatterer(float(r), float(a)) for r, a in zip(ranges, amps))


def _walk(rng, config):
    path = _smooth_path(rng, 1.0, 5.0, 1.5, config.t_f)
    vel = path.velocity()
    torso = Scatterer(path, vel, 1.0, None, "torso")
    limbs = []
    for _ in range(int(rng.integers(2, 5))):
        md = MicroDoppler(float(rng.uniform(0.5, 2.0)), float(rng.uniform(0.5, 2.0)), float(rng.uniform(0, 2 * np.pi)))
        limbs.append(Scatterer(path, vel, float(rng.uniform(0.2, 0.5)), md, "limb"))
    return [torso, *limbs]


def _fan(rng, config):
    r = ConstantTrajectory(float(rng.uniform(1.0, 5.0)))
    still = ConstantTrajectory(0.0)
    n_blades = int(rng.integers(3, 6))
    rot = float(rng.uniform(10.0, 20.0))
    tip = float(rng.uniform(1.5, 3.0))
    phase0 = float(rng.uniform(0, 2 * np.pi))
    blades = [
        Scatterer(r, still, float(rng.uniform(0.3, 0.6)), MicroDoppler(tip, rot, phase0 + 2 * np.pi * b / n_blades), "blade")
        for b in range(n_blades)
    ]
    return [Scatterer(r, still, float(rng.uniform(0.5, 1.0)), None, "body"), *blades]


def _toy_car(rng, config):
    lo = float(rng.uniform(0.8, 1.5))
    hi = float(rng.uniform(4.0, 6.0))
    path = BounceRange(lo, hi, float(rng.uniform(1.5, 3.0)), float(rng.uniform(0, 2 * (hi - lo))), config.t_f)
    return [Scatterer(path, path.velocity(), float(rng.uniform(0.6, 1.0)), None, "body")]


def _pendulum(rng, config):
    center = float(rng.uniform(1.0, 5.0))
    out = []
    for _ in range(int(rng.integers(1, 4))):
        f = float(rng.uniform(0.3, 1.0))
        a = float(rng.uniform(0.05, 0.3))
        path = SinusoidRange(center + float(rng.uniform(-0.2, 0.2)), (a,), (f,), (float(rng.uniform(0, 2 * np.pi)),), config.t_f)
        out.append(Scatterer(path, path.velocity(), float(rng.uniform(0.3, 1.0)), None, "body"))
    return out


def _robot_vacuum(rng, config):
    path = _smooth_path(rng, 0.8, 5.0, 0.5, config.t_f)
    return [Scatterer(path, path.velocity(), float(rng.uniform(0.5, 1.0)), None, "body")]


_GENERATORS = {
    SceneLabel.ID_WALK: _walk,
    SceneLabel.OOD_FAN: _fan,
    SceneLabel.OOD_TOY_CAR: _toy_car,
    SceneLabel.OOD_PENDULUM: _pendulum,
    SceneLabel.OOD_ROBOT_VACUUM: _robot_vacuum,
}


def make_scene(
    label: SceneLabel,
    seed: int,
    config: RadarConfig | None = None,
    snr_db: float | None = 20.0,
    n_clutter: int = 2,
) -> Scene:
    """Draw a random scene of kind ``label``; all parameters derive from ``seed``.

    The noise level puts the scene's typical range-Doppler peak ``snr_db``
    above the noise; ``snr_db=None`` gives a noiseless scene.
    """
    config = config or RadarConfig()
    label = SceneLabel(label)
    rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(0xA11CE,)))
    scatterers = _GENERATORS[label](rng, config)
    clutter = _room_clutter(rng, config, n_clutter)
    noise = 0.0 if snr_db is None else noise_std_for_snr(config, snr_db, peak_amplitude(scatterers, config))
    return Scene(label, tuple(scatterers), noise, int(seed), clutter)


def peak_amplitude(scatterers: Sequence[Scatterer], config: RadarConfig, n_frames: int = 8) -> float:
    """Median noiseless RD peak over the first frames, as an equivalent point-target amplitude.

    Scaling noise by this keeps the per-frame peak SNR the same for every scene
    kind, so the normalized noise floor carries no class information.
    """
    from .dsp import RDI_SIDELOBE_DB, chebyshev_window, range_doppler_map

    unit = 0.5 * chebyshev_window(config.n_s, RDI_SIDELOBE_DB).sum() * chebyshev_window(config.n_c, RDI_SIDELOBE_DB).sum()
    peaks = []
    for k in range(n_frames):
        sig = frame_signal(scatterers, config, k)
        peaks.append(np.abs(range_doppler_map(np.broadcast_to(sig, config.frame_shape))).max())
    peak = float(np.median(peaks)) / unit
    return peak if peak > 0 else 1.0


@dataclass(frozen=True)
class SplitSpec:
    """Frame counts for the desk-scale benchmark."""

    train_id: int = 2000
    val_id: int = 500
    test_id: int = 500
    test_ood: int = 600
    frames_per_scene: int = 50
    ood_labels: tuple[SceneLabel, ...] = field(default=OOD_LABELS)


SPLITS = ("train", "val", "test")


def _chunks(total: int, per: int) -> list[int]:
    sizes = [per] * (total // per)
    if total % per:
        sizes.append(total % per)
    return sizes


def split_recipes(
    dataset_seed: int,
    spec: SplitSpec = SplitSpec(),
    config: RadarConfig | None = None,
    snr_db: float | None = 20.0,
) -> dict[str, list[tuple[Scene, int]]]:
    """Recipes for train/val/test with disjoint scene seeds.

    OOD frames are spread evenly across ``spec.ood_labels``; only the test
    split contains OOD scenes.
    """
    config = config or RadarConfig()
    recipes: dict[str, list[tuple[Scene, int]]] = {}
    counts = {"train": [(SceneLabel.ID_WALK, spec.train_id)], "val": [(SceneLabel.ID_WALK, spec.val_id)], "test": [(SceneLabel.ID_WALK, spec.test_id)]}
    n_ood = len(spec.ood_labels)
    if spec.test_ood and n_ood:
        base, extra = divmod(spec.test_ood, n_ood)
        counts["test"] += [(lab, base + (i < extra)) for i, lab in enumerate(spec.ood_labels)]
    for split_idx, split in enumerate(SPLITS):
        recipe = []
        for label, total in counts[split]:
            for j, n in enumerate(_chunks(total, spec.frames_per_scene)):
                s = scene_seed(dataset_seed, split_idx, int(label), j)
                recipe.append((make_scene(label, s, config, snr_db), n))
        recipes[split] = recipe
    seen: set[int] = set()
    for recipe in recipes.values():
        seeds = {scene.seed for scene, _ in recipe}
        if seeds & seen or len(seeds) != len(recipe):
            raise SceneError("scene seeds collide across splits")
        seen |= seeds
    return recipes
