"""Hot loops with a numba path and a pure-numpy fallback.

Set ``PIECELAB_NO_NUMBA=1`` before import to force the numpy versions.
Both paths share signatures and are checked against each other in the tests.
"""
from __future__ import annotations

import os

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and os.environ.get("PIECELAB_NO_NUMBA", "0") not in ("1", "true", "yes")


# ---------------------------------------------------------------- numpy path

def _cos_int_np(c, phi, a, b):
    # int_a^b cos(c x + phi) dx, stable for c -> 0
    h = 0.5 * (b - a)
    mid = 0.5 * (a + b)
    out = 2.0 * h * np.cos(c * mid + phi) * np.sinc(c * h / np.pi)
    return np.where(b > a, out, 0.0)


def same_table_np(length, us, ws, nmax):
    k = np.arange(nmax + 1) * np.pi / length
    A = k[:, None, None]
    B = k[None, :, None]
    U = us[None, None, :]
    a = np.maximum(0.0, -U)
    b = np.minimum(length, length - U)
    G = 0.5 * (_cos_int_np(A + B, A * U, a, b) + _cos_int_np(A - B, A * U, a, b))
    return (G * ws).sum(-1)


def pair_table_np(l1, l2, d, us, ws, n1max, n2max):
    A = (np.arange(n1max + 1) * np.pi / l1)[:, None, None]
    B = (np.arange(n2max + 1) * np.pi / l2)[None, :, None]
    U = us[None, None, :]
    lo = np.maximum(-l1, d - U)
    hi = np.minimum(0.0, d + l2 - U)
    G = 0.5 * (_cos_int_np(A + B, A * l1 + B * (U - d), lo, hi)
               + _cos_int_np(A - B, A * l1 - B * (U - d), lo, hi))
    return (G * ws).sum(-1)


def assemble_same_np(C, n, length):
    p, q = np.triu_indices(n, 1)
    p = p + 1
    q = q + 1
    P, Q = p[:, None], q[:, None]
    R, S = p[None, :], q[None, :]

    def V(P, Q, R, S):
        dpr, spr = np.abs(P - R), P + R
        dqs, sqs = np.abs(Q - S), Q + S
        return C[dpr, dqs] - C[dpr, sqs] - C[spr, dqs] + C[spr, sqs]

    return (V(P, Q, R, S) - V(P, Q, S, R)) / length**2


def assemble_pair_np(C, n1, n2, l1, l2):
    p = np.repeat(np.arange(1, n1 + 1), n2)
    q = np.tile(np.arange(1, n2 + 1), n1)
    P, Q = p[:, None], q[:, None]
    R, S = p[None, :], q[None, :]
    dpr, spr = np.abs(P - R), P + R
    dqs, sqs = np.abs(Q - S), Q + S
    return (C[dpr, dqs] - C[dpr, sqs] - C[spr, dqs] + C[spr, sqs]) / (l1 * l2)


def chain_breaks_np(lefts, rights, long_idx, reach):
    # True where consecutive long pieces do NOT interact
    if len(long_idx) < 2:
        return np.ones(0, dtype=np.bool_)
    dist = lefts[long_idx[1:]] - rights[long_idx[:-1]]
    if reach <= 0.0:
        return np.ones(len(dist), dtype=np.bool_)
    return dist > reach


def pattern_count_np(lengths, gaps, lo, hi, glo, ghi):
    r = len(lo)
    m = len(lengths) - r + 1
    if m <= 0:
        return 0
    ok = np.ones(m, dtype=np.bool_)
    for k in range(r):
        seg = lengths[k:k + m]
        ok &= (seg >= lo[k]) & (seg <= hi[k])
    for k in range(r - 1):
        seg = gaps[k:k + m]
        ok &= (seg >= glo[k]) & (seg <= ghi[k])
    return int(ok.sum())


# ---------------------------------------------------------------- numba path

if HAVE_NUMBA:

    @njit(cache=True)
    def _cos_int_nb(c, phi, a, b):
        if b <= a:
            return 0.0
        h = 0.5 * (b - a)
        x = c * h
        s = 1.0 if abs(x) < 1e-300 else np.sin(x) / x
        return 2.0 * h * np.cos(c * (a + b) * 0.5 + phi) * s

    @njit(cache=True)
    def same_table_nb(length, us, ws, nmax):
        # int_a^b cos(c x + k_i u) dx = Im[e^{i(c b + k_i u)} - e^{i(c a + k_i u)}] / c,
        # with c = k_i +- k_j >= pi/length unless c = 0
        out = np.zeros((nmax + 1, nmax + 1))
        k = np.arange(nmax + 1) * np.pi / length
        for t in range(us.shape[0]):
            u = us[t]
            a = max(0.0, -u)
            b = min(length, length - u)
            if b <= a:
                continue
            ea = np.exp(1j * k * a)
            eb = np.exp(1j * k * b)
            eu = np.exp(1j * k * u)
            w = 0.5 * ws[t]
            for i in range(nmax + 1):
                pa = ea[i] * eu[i]
                pb = eb[i] * eu[i]
                for j in range(nmax + 1):
                    cp = k[i] + k[j]
                    if cp == 0.0:
                        g = (b - a) * eu[i].real
                    else:
                        g = (pb * eb[j] - pa * ea[j]).imag / cp
                    cm = k[i] - k[j]
                    if i == j:
                        g += (b - a) * eu[i].real
                    else:
                        g += (pb * eb[j].conjugate() - pa * ea[j].conjugate()).imag / cm
                    out[i, j] += w * g
        return out

    @njit(cache=True)
    def pair_table_nb(l1, l2, d, us, ws, n1max, n2max):
        out = np.zeros((n1max + 1, n2max + 1))
        ka = np.arange(n1max + 1) * np.pi / l1
        kb = np.arange(n2max + 1) * np.pi / l2
        Pa = np.exp(1j * ka * l1)
        for t in range(us.shape[0]):
            u = us[t]
            lo = max(-l1, d - u)
            hi = min(0.0, d + l2 - u)
            if hi <= lo:
                continue
            w = hi - lo
            ea_lo = np.exp(1j * ka * lo)
            ea_hi = np.exp(1j * ka * hi)
            eb_lo = np.exp(1j * kb * lo)
            eb_hi = np.exp(1j * kb * hi)
            Pb = np.exp(1j * kb * (u - d))
            for i in range(n1max + 1):
                pa = ka[i] * l1
                for j in range(n2max + 1):
                    pb = kb[j] * (u - d)
                    cp = ka[i] + kb[j]
                    cm = ka[i] - kb[j]
                    # closed antiderivative unless c * width is small (then the sinc form)
                    if abs(cp) * w < 1e-2:
                        g = _cos_int_nb(cp, pa + pb, lo, hi)
                    else:
                        g = (Pa[i] * Pb[j] * (ea_hi[i] * eb_hi[j] - ea_lo[i] * eb_lo[j])).imag / cp
                    if abs(cm) * w < 1e-2:
                        g += _cos_int_nb(cm, pa - pb, lo, hi)
                    else:
                        g += (Pa[i] * Pb[j].conjugate()
                              * (ea_hi[i] * eb_hi[j].conjugate() - ea_lo[i] * eb_lo[j].conjugate())).imag / cm
                    out[i, j] += 0.5 * g * ws[t]
        return out

    @njit(cache=True)
    def assemble_same_nb(C, n, length):
        m = n * (n - 1) // 2
        ps = np.empty(m, dtype=np.int64)
        qs = np.empty(m, dtype=np.int64)
        c = 0
        for p in range(1, n + 1):
            for q in range(p + 1, n + 1):
                ps[c] = p
                qs[c] = q
                c += 1
        W = np.empty((m, m))
        inv = 1.0 / length**2
        for i in range(m):
            p, q = ps[i], qs[i]
            for j in range(i, m):
                r, s = ps[j], qs[j]
                v1 = (C[abs(p - r), abs(q - s)] - C[abs(p - r), q + s]
                      - C[p + r, abs(q - s)] + C[p + r, q + s])
                v2 = (C[abs(p - s), abs(q - r)] - C[abs(p - s), q + r]
                      - C[p + s, abs(q - r)] + C[p + s, q + r])
                W[i, j] = (v1 - v2) * inv
                W[j, i] = W[i, j]
        return W

    @njit(cache=True)
    def assemble_pair_nb(C, n1, n2, l1, l2):
        m = n1 * n2
        W = np.empty((m, m))
        inv = 1.0 / (l1 * l2)
        for i in range(m):
            p = i // n2 + 1
            q = i % n2 + 1
            for j in range(i, m):
                r = j // n2 + 1
                s = j % n2 + 1
                v = (C[abs(p - r), abs(q - s)] - C[abs(p - r), q + s]
                     - C[p + r, abs(q - s)] + C[p + r, q + s])
                W[i, j] = v * inv
                W[j, i] = W[i, j]
        return W

    @njit(cache=True)
    def chain_breaks_nb(lefts, rights, long_idx, reach):
        k = long_idx.shape[0]
        if k < 2:
            return np.ones(0, dtype=np.bool_)
        out = np.empty(k - 1, dtype=np.bool_)
        for j in range(k - 1):
            dist = lefts[long_idx[j + 1]] - rights[long_idx[j]]
            out[j] = reach <= 0.0 or dist > reach
        return out

    @njit(cache=True)
    def pattern_count_nb(lengths, gaps, lo, hi, glo, ghi):
        r = lo.shape[0]
        m = lengths.shape[0] - r + 1
        cnt = 0
        for s in range(max(m, 0)):
            ok = True
            for k in range(r):
                x = lengths[s + k]
                if x < lo[k] or x > hi[k]:
                    ok = False
                    break
            if ok:
                for k in range(r - 1):
                    g = gaps[s + k]
                    if g < glo[k] or g > ghi[k]:
                        ok = False
                        break
            if ok:
                cnt += 1
        return cnt


# ---------------------------------------------------------------- dispatch

if USE_NUMBA:
    same_table = same_table_nb
    pair_table = pair_table_nb
    assemble_same = assemble_same_nb
    assemble_pair = assemble_pair_nb
    chain_breaks = chain_breaks_nb
    _pattern_count = pattern_count_nb
else:
    same_table = same_table_np
    pair_table = pair_table_np
    assemble_same = assemble_same_np
    assemble_pair = assemble_pair_np
    chain_breaks = chain_breaks_np
    _pattern_count = pattern_count_np


def pattern_count(lengths, gaps, lo, hi, glo, ghi) -> int:
    args = [np.ascontiguousarray(x, dtype=np.float64) for x in (lengths, gaps, lo, hi, glo, ghi)]
    return int(_pattern_count(*args))
