"""Independent reference computations used by the tests.

Nothing here calls into the vectorised code paths it is used to check.
"""

import math

import numpy as np


def naive_mlp(widths, params, x, hidden="relu", output="identity"):
    """Scalar-loop forward pass over the documented flat parameter layout."""
    params = list(map(float, params))
    h = list(map(float, x))
    offset = 0
    n_layers = len(widths) - 1
    for layer in range(n_layers):
        n_in, n_out = widths[layer], widths[layer + 1]
        W = [params[offset + i * n_out: offset + (i + 1) * n_out] for i in range(n_in)]
        offset += n_in * n_out
        b = params[offset: offset + n_out]
        offset += n_out
        z = []
        for j in range(n_out):
            acc = b[j]
            for i in range(n_in):
                acc += h[i] * W[i][j]
            z.append(acc)
        kind = output if layer == n_layers - 1 else hidden
        if kind == "relu":
            z = [max(v, 0.0) for v in z]
        elif kind == "tanh":
            z = [math.tanh(v) for v in z]
        h = z
    return np.array(h)


def central_difference(f, x, step=1e-5, refinements=3):
    """Central differences, with a kink guard.

    A ReLU kink within ``step`` of the evaluation point makes the estimate
    jump when the step shrinks; such coordinates are re-estimated with a
    10x smaller step (up to ``refinements`` times) until two consecutive
    estimates agree.
    """
    x = np.array(x, dtype=np.float64)
    g = np.empty_like(x)

    def one(i, h):
        orig = x[i]
        x[i] = orig + h
        up = f(x)
        x[i] = orig - h
        down = f(x)
        x[i] = orig
        return (up - down) / (2.0 * h)

    for i in range(x.size):
        h = step
        est = one(i, h)
        for _ in range(refinements):
            finer = one(i, h / 10.0)
            if abs(finer - est) <= 1e-3 * max(abs(finer), abs(est), 1e-6):
                break
            h /= 10.0
            est = finer
        g[i] = est
    return g


def max_relative_error(analytic, numeric, floor=1e-6):
    a, n = np.asarray(analytic), np.asarray(numeric)
    return float(np.max(np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)))


def scalar_log_mean_exp(values):
    m = max(values)
    return m + math.log(sum(math.exp(v - m) for v in values) / len(values))
