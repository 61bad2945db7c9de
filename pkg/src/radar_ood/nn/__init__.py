"""Numpy layer engine: layers, BCE loss, Adam."""

from .layers import (
    Conv2D,
    Dense,
    Flatten,
    Layer,
    MaxPool2D,
    Reshape,
    ReLU,
    Sequential,
    Sigmoid,
    TConv2D,
    Upsample2D,
    bce_grad,
    bce_loss,
    conv2d,
    conv2d_forward,
    dense_forward,
    maxpool2d,
    maxpool2d_forward,
    tconv2d,
    tconv2d_forward,
    upsample2d,
    upsample2d_forward,
)
from .optim import AdamState, adam_step

__all__ = [
    "adam_step",
    "AdamState",
    "backward",
    "bce_grad",
    "bce_loss",
    "Conv2D",
    "conv2d",
    "conv2d_forward",
    "Dense",
    "dense_forward",
    "Flatten",
    "Layer",
    "MaxPool2D",
    "maxpool2d",
    "maxpool2d_forward",
    "ReLU",
    "Reshape",
    "Sequential",
    "Sigmoid",
    "TConv2D",
    "tconv2d",
    "tconv2d_forward",
    "Upsample2D",
    "upsample2d",
    "upsample2d_forward",
]


def backward(network: Sequential, params, x, target):
    """Forward + BCE + reverse pass; returns (loss, gradients for every parameter)."""
    y, caches = network.forward(x, params)
    loss = bce_loss(y, target)
    grads, _ = network.backward(bce_grad(y, target), caches, params)
    return loss, grads
