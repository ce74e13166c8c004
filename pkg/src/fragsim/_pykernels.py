"""Pure numpy implementations of the compiled kernels (same signatures)."""

from __future__ import annotations

import numpy as np

RX, RY, CRZ = 0, 1, 2


def apply_terms(psi, out, diag, xmasks, zmasks, coefs):
    idx = np.arange(psi.shape[0], dtype=np.int64)
    out[:] = diag * psi
    for x, z, c in zip(xmasks, zmasks, coefs):
        src = idx ^ x
        sign = 1.0 - 2.0 * (np.bitwise_count(src & z) & 1)
        out += c * sign * psi[src]


def _pairs(dim, m0):
    idx = np.arange(dim, dtype=np.int64)
    lo = idx[(idx & m0) == 0]
    return lo, lo | m0


def _apply_gate(psi, kind, m0, m1, theta):
    c, s = np.cos(0.5 * theta), np.sin(0.5 * theta)
    if kind == CRZ:
        idx = np.arange(psi.shape[0], dtype=np.int64)
        ctrl = (idx & m0) != 0
        tgt = (idx & m1) != 0
        psi[ctrl & ~tgt] *= c - 1j * s
        psi[ctrl & tgt] *= c + 1j * s
        return
    lo, hi = _pairs(psi.shape[0], m0)
    a0, a1 = psi[lo].copy(), psi[hi].copy()
    if kind == RX:
        psi[lo] = c * a0 - 1j * s * a1
        psi[hi] = -1j * s * a0 + c * a1
    else:
        psi[lo] = c * a0 - s * a1
        psi[hi] = s * a0 + c * a1


def _generator_im(lam, phi, kind, m0, m1):
    if kind == CRZ:
        idx = np.arange(phi.shape[0], dtype=np.int64)
        ctrl = (idx & m0) != 0
        sign = np.where((idx & m1) != 0, -1.0, 1.0)
        acc = np.sum(np.conj(lam[ctrl]) * sign[ctrl] * phi[ctrl])
        return 0.5 * acc.imag
    lo, hi = _pairs(phi.shape[0], m0)
    l0, l1 = np.conj(lam[lo]), np.conj(lam[hi])
    if kind == RX:
        acc = np.sum(l0 * phi[hi] + l1 * phi[lo])
    else:
        acc = np.sum(-1j * l0 * phi[hi] + 1j * l1 * phi[lo])
    return 0.5 * acc.imag


def circuit_forward(psi, kinds, m0s, m1s, pidx, params):
    for k, m0, m1, p in zip(kinds, m0s, m1s, pidx):
        _apply_gate(psi, k, m0, m1, params[p])


def circuit_adjoint(phi, lam, kinds, m0s, m1s, pidx, params, grad):
    for g in range(len(kinds) - 1, -1, -1):
        k, m0, m1, th = kinds[g], m0s[g], m1s[g], params[pidx[g]]
        grad[pidx[g]] += 2.0 * _generator_im(lam, phi, k, m0, m1)
        _apply_gate(phi, k, m0, m1, -th)
        _apply_gate(lam, k, m0, m1, -th)
