"""Distance kernels for the two scorers, forward and backward.

Entity rows hold ``[re_1..re_d, im_1..im_d]``.  Rotational kernels take the
relation as ``[cos θ | sin θ]`` rows (computed once per batch by the caller)
and emit gradients with respect to the phases θ.  Translational relations
are rows of length ``2d`` laid out like entities.

Every kernel exists as a vectorised numpy function and a loop function
compiled by numba.  ``backward`` kernels accumulate ``coef[i] * d dist_i``
into the gradient buffers in place.
"""
import math

import numpy as np

from .._accel import njit, resolve_backend

TINY = 1e-300


# -- numpy ------------------------------------------------------------------


def rotate_distance_np(ent, rot, h, r, t):
    d = rot.shape[1] // 2
    c = rot[r, :d]
    s = rot[r, d:]
    eh = ent[h]
    et = ent[t]
    u = eh[:, :d] * c - eh[:, d:] * s - et[:, :d]
    v = eh[:, :d] * s + eh[:, d:] * c - et[:, d:]
    return np.sqrt(np.sum(u * u + v * v, axis=1))


def rotate_backward_np(ent, rot, h, r, t, dist, coef, g_ent, g_rel):
    d = rot.shape[1] // 2
    c = rot[r, :d]
    s = rot[r, d:]
    eh = ent[h]
    et = ent[t]
    a = eh[:, :d] * c - eh[:, d:] * s
    b = eh[:, :d] * s + eh[:, d:] * c
    u = a - et[:, :d]
    v = b - et[:, d:]
    k = np.where(dist > TINY, coef / np.maximum(dist, TINY), 0.0)[:, None]
    gu = k * u
    gv = k * v
    np.add.at(g_ent, h, np.concatenate([gu * c + gv * s, gv * c - gu * s], axis=1))
    np.add.at(g_ent, t, -np.concatenate([gu, gv], axis=1))
    np.add.at(g_rel, r, gv * a - gu * b)


def transe_distance_np(ent, trans, h, r, t):
    diff = ent[h] + trans[r] - ent[t]
    return np.sqrt(np.sum(diff * diff, axis=1))


def transe_backward_np(ent, trans, h, r, t, dist, coef, g_ent, g_rel):
    diff = ent[h] + trans[r] - ent[t]
    k = np.where(dist > TINY, coef / np.maximum(dist, TINY), 0.0)[:, None]
    g = k * diff
    np.add.at(g_ent, h, g)
    np.add.at(g_ent, t, -g)
    np.add.at(g_rel, r, g)


# -- numba ------------------------------------------------------------------


@njit
def rotate_distance_nb(ent, rot, h, r, t):
    n = h.shape[0]
    d = rot.shape[1] // 2
    out = np.empty(n)
    for i in range(n):
        hi, ri, ti = h[i], r[i], t[i]
        acc = 0.0
        for k in range(d):
            c = rot[ri, k]
            s = rot[ri, d + k]
            hre = ent[hi, k]
            him = ent[hi, d + k]
            u = hre * c - him * s - ent[ti, k]
            v = hre * s + him * c - ent[ti, d + k]
            acc += u * u + v * v
        out[i] = math.sqrt(acc)
    return out


@njit
def rotate_backward_nb(ent, rot, h, r, t, dist, coef, g_ent, g_rel):
    n = h.shape[0]
    d = rot.shape[1] // 2
    for i in range(n):
        if dist[i] <= TINY:
            continue
        kk = coef[i] / dist[i]
        if kk == 0.0:
            continue
        hi, ri, ti = h[i], r[i], t[i]
        for k in range(d):
            c = rot[ri, k]
            s = rot[ri, d + k]
            hre = ent[hi, k]
            him = ent[hi, d + k]
            a = hre * c - him * s
            b = hre * s + him * c
            gu = kk * (a - ent[ti, k])
            gv = kk * (b - ent[ti, d + k])
            g_ent[hi, k] += gu * c + gv * s
            g_ent[hi, d + k] += gv * c - gu * s
            g_ent[ti, k] -= gu
            g_ent[ti, d + k] -= gv
            g_rel[ri, k] += gv * a - gu * b


@njit
def transe_distance_nb(ent, trans, h, r, t):
    n = h.shape[0]
    w = ent.shape[1]
    out = np.empty(n)
    for i in range(n):
        hi, ri, ti = h[i], r[i], t[i]
        acc = 0.0
        for k in range(w):
            x = ent[hi, k] + trans[ri, k] - ent[ti, k]
            acc += x * x
        out[i] = math.sqrt(acc)
    return out


@njit
def transe_backward_nb(ent, trans, h, r, t, dist, coef, g_ent, g_rel):
    n = h.shape[0]
    w = ent.shape[1]
    for i in range(n):
        if dist[i] <= TINY:
            continue
        kk = coef[i] / dist[i]
        if kk == 0.0:
            continue
        hi, ri, ti = h[i], r[i], t[i]
        for k in range(w):
            g = kk * (ent[hi, k] + trans[ri, k] - ent[ti, k])
            g_ent[hi, k] += g
            g_ent[ti, k] -= g
            g_rel[ri, k] += g


@njit
def adagrad_rows_nb(param, accum, grad, rows, lr, eps):
    w = param.shape[1]
    for j in range(rows.shape[0]):
        i = rows[j]
        for k in range(w):
            g = grad[i, k]
            accum[i, k] += g * g
            param[i, k] -= lr * g / (math.sqrt(accum[i, k]) + eps)
            grad[i, k] = 0.0


def adagrad_rows_np(param, accum, grad, rows, lr, eps):
    g = grad[rows]
    accum[rows] += g * g
    param[rows] -= lr * g / (np.sqrt(accum[rows]) + eps)
    grad[rows] = 0.0


_TABLE = {
    ("rotate", "numpy"): (rotate_distance_np, rotate_backward_np, adagrad_rows_np),
    ("rotate", "numba"): (rotate_distance_nb, rotate_backward_nb, adagrad_rows_nb),
    ("transe", "numpy"): (transe_distance_np, transe_backward_np, adagrad_rows_np),
    ("transe", "numba"): (transe_distance_nb, transe_backward_nb, adagrad_rows_nb),
}


def kernels(scorer, backend=None):
    """Return ``(distance, backward, adagrad)`` for ``scorer`` on ``backend``."""
    backend = resolve_backend(backend)
    try:
        return _TABLE[(scorer, backend)]
    except KeyError:
        raise ValueError(f"unknown scorer {scorer!r}") from None
