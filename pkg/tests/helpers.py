"""Shared test utilities (independent reference implementations)."""

import numpy as np

from hcdyna import nn


def zero_net(layer_sizes, output_activation="linear"):
    sizes = list(layer_sizes)
    weights = [np.zeros((a, b)) for a, b in zip(sizes[:-1], sizes[1:])]
    biases = [np.zeros(b) for b in sizes[1:]]
    return nn.MLP(sizes, weights, biases, output_activation)


def rel_err(a, b):
    denom = max(np.abs(a).max(), np.abs(b).max(), 1e-12)
    return np.abs(a - b).max() / denom


def away_from_kinks(net, x, margin):
    """True when every hidden pre-activation is at least `margin` from 0."""
    h = np.asarray(x, dtype=float)[None, :]
    for i in range(len(net.weights) - 1):
        z = h @ net.weights[i] + net.biases[i]
        if np.abs(z).min() < margin:
            return False
        h = np.maximum(z, 0.0)
    return True


def fd_param_gradient(net, x, action, h=1e-6):
    """Central finite differences of y[action] over every parameter."""
    gw = [np.zeros_like(w) for w in net.weights]
    gb = [np.zeros_like(b) for b in net.biases]
    for arrs, grads in ((net.weights, gw), (net.biases, gb)):
        for arr, g in zip(arrs, grads):
            flat, gflat = arr.ravel(), g.ravel()
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + h
                hi = nn.forward(net, x)[action]
                flat[i] = orig - h
                lo = nn.forward(net, x)[action]
                flat[i] = orig
                gflat[i] = (hi - lo) / (2 * h)
    return nn.Gradients(gw, gb)


def fd_input_gradient(net, x, action, h=1e-5):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        out[i] = (nn.forward(net, x + e)[action] - nn.forward(net, x - e)[action]) / (2 * h)
    return out


def batch_covariance(states):
    """The plain batch formula: mean of outer products minus outer of means."""
    states = np.asarray(states, dtype=float)
    mean = states.mean(axis=0)
    outer = np.einsum("ni,nj->ij", states, states) / states.shape[0]
    return outer - np.outer(mean, mean)
