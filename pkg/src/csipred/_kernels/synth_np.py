"""Pure-numpy sum-of-paths channel synthesis (fallback kernel)."""

import numpy as np

BACKEND = "numpy"

# Time steps per chunk; bounds the (chunk, K, P) temporary to a few MB.
_CHUNK = 256


def synthesize(times, gains, dopplers, delay_phase, a_rx, a_tx):
    """Accumulate per-path contributions into channel tensors for all times.

    H[t, k] = sum_p gains[p] * exp(j 2 pi dopplers[p] * times[t])
              * delay_phase[k, p] * outer(a_rx[p], conj(a_tx[p]))

    Parameters
    ----------
    times : (T,) float64 seconds
    gains : (P,) complex128 per-path gains
    dopplers : (P,) float64 per-path Doppler shifts in Hz
    delay_phase : (K, P) complex128, exp(-j 2 pi f_k tau_p)
    a_rx : (P, Nr) complex128 receive steering vectors
    a_tx : (P, Nt) complex128 transmit steering vectors

    Returns
    -------
    (T, K, Nr, Nt) complex128
    """
    n_t = times.shape[0]
    n_sub, n_paths = delay_phase.shape
    n_rx = a_rx.shape[1]
    n_tx = a_tx.shape[1]

    outer = a_rx[:, :, None] * np.conj(a_tx)[:, None, :]  # (P, Nr, Nt)
    outer_flat = outer.reshape(n_paths, n_rx * n_tx)

    out = np.empty((n_t, n_sub, n_rx, n_tx), dtype=np.complex128)
    for lo in range(0, n_t, _CHUNK):
        hi = min(lo + _CHUNK, n_t)
        rot = np.exp(2j * np.pi * np.outer(times[lo:hi], dopplers)) * gains  # (C, P)
        weights = rot[:, None, :] * delay_phase[None, :, :]  # (C, K, P)
        chunk = weights.reshape(-1, n_paths) @ outer_flat
        out[lo:hi] = chunk.reshape(hi - lo, n_sub, n_rx, n_tx)
    return out
