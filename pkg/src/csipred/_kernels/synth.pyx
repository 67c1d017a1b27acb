# cython: boundscheck=False, wraparound=False, cdivision=True
"""Cython sum-of-paths channel synthesis (hot kernel).

Same contract as synth_np.synthesize; see that module for the formula.
Results agree with the numpy kernel to floating-point reduction order.
"""

import numpy as np

from libc.math cimport cos, sin

BACKEND = "cython"

cdef double TWO_PI = 6.283185307179586476925286766559


def synthesize(double[::1] times,
               double complex[::1] gains,
               double[::1] dopplers,
               double complex[:, ::1] delay_phase,
               double complex[:, ::1] a_rx,
               double complex[:, ::1] a_tx):
    cdef Py_ssize_t n_t = times.shape[0]
    cdef Py_ssize_t n_sub = delay_phase.shape[0]
    cdef Py_ssize_t n_paths = delay_phase.shape[1]
    cdef Py_ssize_t n_rx = a_rx.shape[1]
    cdef Py_ssize_t n_tx = a_tx.shape[1]

    out_arr = np.zeros((n_t, n_sub, n_rx, n_tx), dtype=np.complex128)
    outer_arr = np.empty((n_paths, n_rx, n_tx), dtype=np.complex128)

    cdef double complex[:, :, :, ::1] out = out_arr
    cdef double complex[:, :, ::1] outer = outer_arr
    cdef double complex g, w, contrib
    cdef double phase
    cdef Py_ssize_t t, p, k, r, m

    for p in range(n_paths):
        for r in range(n_rx):
            for m in range(n_tx):
                outer[p, r, m] = a_rx[p, r] * a_tx[p, m].conjugate()

    with nogil:
        for t in range(n_t):
            for p in range(n_paths):
                phase = TWO_PI * dopplers[p] * times[t]
                g = gains[p] * (cos(phase) + 1j * sin(phase))
                for k in range(n_sub):
                    w = g * delay_phase[k, p]
                    for r in range(n_rx):
                        for m in range(n_tx):
                            out[t, k, r, m] = out[t, k, r, m] + w * outer[p, r, m]
    return out_arr
