"""Shared independent oracles used across the test suite."""

import math

import numpy as np

from fedssl.nn import ParamVector, loss_value


def finite_difference_gradient(model, terms, step=1e-5):
    """Central finite differences of the composite loss, one coordinate at a time."""
    base = model.params.values
    out = np.zeros(base.size)
    for i in range(base.size):
        up = base.copy()
        up[i] += step
        down = base.copy()
        down[i] -= step
        f_up = loss_value(model.with_params(ParamVector(up, model.params.shapes)), terms)
        f_down = loss_value(model.with_params(ParamVector(down, model.params.shapes)), terms)
        out[i] = (f_up - f_down) / (2.0 * step)
    return out


def max_relative_error(analytic, reference, floor=1e-3):
    """Worst-coordinate relative error with a small absolute floor."""
    analytic = np.asarray(analytic, dtype=float)
    reference = np.asarray(reference, dtype=float)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(reference)), floor)
    return float(np.max(np.abs(analytic - reference) / denom))


def straight_line_forward(layer_dims, flat_params, inputs):
    """Re-implementation of the dense forward pass with explicit loops."""
    x = [list(row) for row in np.atleast_2d(inputs)]
    offset = 0
    n_layers = len(layer_dims) - 1
    for layer in range(n_layers):
        d_in, d_out = layer_dims[layer], layer_dims[layer + 1]
        w = [
            [flat_params[offset + r * d_out + c] for c in range(d_out)]
            for r in range(d_in)
        ]
        offset += d_in * d_out
        b = [flat_params[offset + c] for c in range(d_out)]
        offset += d_out
        nxt = []
        for row in x:
            z = [sum(row[r] * w[r][c] for r in range(d_in)) + b[c] for c in range(d_out)]
            if layer < n_layers - 1:
                nxt.append([max(v, 0.0) for v in z])
            else:
                m = max(z)
                e = [math.exp(v - m) for v in z]
                s = sum(e)
                nxt.append([v / s for v in e])
        x = nxt
    return np.array(x)
