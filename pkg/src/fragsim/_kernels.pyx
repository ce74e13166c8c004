# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled statevector kernels.

Every function here has a numpy twin in ``_pykernels`` with the same
signature; ``fragsim.kernels`` picks one at import time.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport cos, sin

cnp.import_array()

ctypedef double complex cplx

cdef extern from *:
    int __builtin_popcountll(unsigned long long) nogil

# gate kinds shared with the Python side
cdef enum:
    RX = 0
    RY = 1
    CRZ = 2


def apply_terms(const cplx[::1] psi, cplx[::1] out, const double[::1] diag,
                const cnp.int64_t[::1] xmasks, const cnp.int64_t[::1] zmasks,
                const cplx[::1] coefs):
    """out = diag * psi + sum_t coefs[t] P_t psi, written in place."""
    cdef Py_ssize_t dim = psi.shape[0]
    cdef Py_ssize_t nt = xmasks.shape[0]
    cdef Py_ssize_t b, t
    cdef unsigned long long src, x, z
    cdef cplx c
    with nogil:
        for b in range(dim):
            out[b] = diag[b] * psi[b]
        for t in range(nt):
            x = <unsigned long long>xmasks[t]
            z = <unsigned long long>zmasks[t]
            c = coefs[t]
            for b in range(dim):
                src = (<unsigned long long>b) ^ x
                if __builtin_popcountll(src & z) & 1:
                    out[b] = out[b] - c * psi[src]
                else:
                    out[b] = out[b] + c * psi[src]


cdef inline void _apply_gate(cplx[::1] psi, int kind, unsigned long long m0,
                             unsigned long long m1, double theta) noexcept nogil:
    cdef Py_ssize_t dim = psi.shape[0]
    cdef Py_ssize_t b
    cdef double c = cos(0.5 * theta)
    cdef double s = sin(0.5 * theta)
    cdef cplx a0, a1
    cdef cplx ph0, ph1
    if kind == RX:
        for b in range(dim):
            if (<unsigned long long>b) & m0:
                continue
            a0 = psi[b]
            a1 = psi[b | m0]
            psi[b] = c * a0 - 1j * s * a1
            psi[b | m0] = -1j * s * a0 + c * a1
    elif kind == RY:
        for b in range(dim):
            if (<unsigned long long>b) & m0:
                continue
            a0 = psi[b]
            a1 = psi[b | m0]
            psi[b] = c * a0 - s * a1
            psi[b | m0] = s * a0 + c * a1
    else:
        ph0 = c - 1j * s
        ph1 = c + 1j * s
        for b in range(dim):
            if (<unsigned long long>b) & m0:
                if (<unsigned long long>b) & m1:
                    psi[b] = psi[b] * ph1
                else:
                    psi[b] = psi[b] * ph0


cdef inline double _generator_im(const cplx[::1] lam, const cplx[::1] phi, int kind,
                                 unsigned long long m0, unsigned long long m1) noexcept nogil:
    # Im <lam| G |phi> with G the gate generator (X/2, Y/2, |1><1| x Z/2)
    cdef Py_ssize_t dim = phi.shape[0]
    cdef Py_ssize_t b
    cdef cplx acc = 0
    cdef cplx l0, l1
    if kind == RX:
        for b in range(dim):
            if (<unsigned long long>b) & m0:
                continue
            l0 = lam[b].conjugate()
            l1 = lam[b | m0].conjugate()
            acc = acc + l0 * phi[b | m0] + l1 * phi[b]
    elif kind == RY:
        for b in range(dim):
            if (<unsigned long long>b) & m0:
                continue
            l0 = lam[b].conjugate()
            l1 = lam[b | m0].conjugate()
            acc = acc - 1j * l0 * phi[b | m0] + 1j * l1 * phi[b]
    else:
        for b in range(dim):
            if (<unsigned long long>b) & m0:
                if (<unsigned long long>b) & m1:
                    acc = acc - lam[b].conjugate() * phi[b]
                else:
                    acc = acc + lam[b].conjugate() * phi[b]
    return 0.5 * acc.imag


def circuit_forward(cplx[::1] psi, const int[::1] kinds, const cnp.int64_t[::1] m0s,
                    const cnp.int64_t[::1] m1s, const cnp.int64_t[::1] pidx,
                    const double[::1] params):
    """Apply the gate list to psi in place."""
    cdef Py_ssize_t g, ng = kinds.shape[0]
    with nogil:
        for g in range(ng):
            _apply_gate(psi, kinds[g], <unsigned long long>m0s[g],
                        <unsigned long long>m1s[g], params[pidx[g]])


def circuit_adjoint(cplx[::1] phi, cplx[::1] lam, const int[::1] kinds,
                    const cnp.int64_t[::1] m0s, const cnp.int64_t[::1] m1s,
                    const cnp.int64_t[::1] pidx, const double[::1] params,
                    double[::1] grad):
    """Reverse sweep of the adjoint method.

    ``phi`` is the circuit output and ``lam`` is H applied to it; both are
    consumed. Derivatives are accumulated into ``grad``.
    """
    cdef Py_ssize_t g, ng = kinds.shape[0]
    cdef unsigned long long m0, m1
    cdef double th
    with nogil:
        for g in range(ng - 1, -1, -1):
            m0 = <unsigned long long>m0s[g]
            m1 = <unsigned long long>m1s[g]
            th = params[pidx[g]]
            grad[pidx[g]] += 2.0 * _generator_im(lam, phi, kinds[g], m0, m1)
            _apply_gate(phi, kinds[g], m0, m1, -th)
            _apply_gate(lam, kinds[g], m0, m1, -th)
