"""Compiled inner loops for the two simulation backends.

Both loops advance steps ``m0 .. m1-1`` in place and return
``(status, step)``; status 0 means the chunk finished, 1 divergence at
``step``, 2 a corrupted (non-PSD) order-parameter state at ``step``.

Per-step randomness is addressed by step index: the input (or the sampled
potentials) of step m starts at counter ``m << 32`` of its stream, and the
dropout mask of step m at counter ``m << 32`` of the mask stream.

The per-step error written to ``errs[m % len(errs)]`` is the squared error
of the network's evaluation output on the fresh input, using pre-update
weights: the full student for SGD, the p-rescaled (or paper-literal) output
for dropout.
"""
from __future__ import annotations

import math

import numba as nb
import numpy as np

from tsdrop.learning import g, mask_core, step_core
from tsdrop.orderparams import thermo_core
from tsdrop.rng import fill_normal, fill_sign

SHIFT = np.uint64(32)


@nb.njit(inline="always")
def _eval_error(d, y, v, w_prev, selected, prev_out, p, dropout, literal, delta):
    if not dropout:
        return 0.5 * delta * delta
    t_out = 0.0
    for n in range(d.shape[0]):
        t_out += v[n] * g(d[n])
    s_out = 0.0
    for i in range(y.shape[0]):
        if literal and not selected[i]:
            s_out += w_prev[i] * prev_out[i]
        else:
            s_out += w_prev[i] * g(y[i])
    diff = t_out - p * s_out
    return 0.5 * diff * diff


@nb.njit(nogil=True, cache=True)
def direct_chunk(J, w, B, v, Q, R, prev_out, errs, in_key, mask_key, m0, m1, scale,
                 rademacher, dropout, p, n_keep, bernoulli, literal_inference, w_literal,
                 xi, d, y, f, w_incr, w_prev, selected, order):
    K = J.shape[0]
    M = B.shape[0]
    window = errs.shape[0]
    for m in range(m0, m1):
        base = np.uint64(m) << SHIFT
        if rademacher:
            fill_sign(in_key, base, xi)
        else:
            fill_normal(in_key, base, xi)
        norm_sq = 0.0
        for k in range(xi.shape[0]):
            norm_sq += xi[k] * xi[k]
        if dropout:
            mask_core(mask_key, base, p, n_keep, bernoulli, order, selected)
        for i in range(K):
            w_prev[i] = w[i]
        delta = step_core(J, w, B, v, xi, scale, selected, w_literal, d, y, f, w_incr)
        err = _eval_error(d, y, v, w_prev, selected, prev_out, p, dropout, literal_inference, delta)
        for i in range(K):
            prev_out[i] = g(y[i])
        errs[m % window] = err
        for i in range(K):
            for n in range(M):
                R[i, n] += scale * (f[i] * d[n])
        for i in range(K):
            for j in range(i, K):
                Q[i, j] = (Q[i, j] + scale * (f[i] * y[j] + f[j] * y[i])) + scale * scale * norm_sq * (f[i] * f[j])
                if j != i:
                    Q[j, i] = Q[i, j]
        if not math.isfinite(err):
            return 1, m
        for i in range(K):
            if not (math.isfinite(w[i]) and math.isfinite(Q[i, i]) and math.isfinite(y[i])):
                return 1, m
    return 0, m1


@nb.njit(nogil=True, cache=True)
def thermo_chunk(Q, R, T, w, v, prev_out, errs, step_key, mask_key, m0, m1, scale, eta,
                 dropout, p, n_keep, bernoulli, literal_inference, w_literal,
                 C, z, d, y, f, w_incr, w_prev, selected, order):
    K = Q.shape[0]
    window = errs.shape[0]
    for m in range(m0, m1):
        base = np.uint64(m) << SHIFT
        if dropout:
            mask_core(mask_key, base, p, n_keep, bernoulli, order, selected)
        for i in range(K):
            w_prev[i] = w[i]
        status, delta, _ = thermo_core(Q, R, T, w, v, step_key, base, scale, eta, selected,
                                       w_literal, C, z, d, y, f, w_incr)
        if status != 0:
            return status, m
        err = _eval_error(d, y, v, w_prev, selected, prev_out, p, dropout, literal_inference, delta)
        for i in range(K):
            prev_out[i] = g(y[i])
        errs[m % window] = err
        if not math.isfinite(err):
            return 1, m
        for i in range(K):
            if not (math.isfinite(w[i]) and math.isfinite(Q[i, i])):
                return 1, m
    return 0, m1
