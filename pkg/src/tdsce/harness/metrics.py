"""Figures of merit: normalized MSE, the BER receiver chain and analytic BER."""
import math

import numpy as np

from ..signal import ofdm_demodulate, qpsk_demap


def mse(est_dense, truth_dense):
    """``||est - truth||^2 / ||truth||^2`` over equal-length dense views."""
    est_dense = np.asarray(est_dense)
    truth_dense = np.asarray(truth_dense)
    if est_dense.shape != truth_dense.shape:
        raise ValueError("dimension mismatch")
    ref = float(np.sum(np.abs(truth_dense) ** 2))
    if ref == 0:
        raise ValueError("all-zero truth")
    return float(np.sum(np.abs(est_dense - truth_dense) ** 2)) / ref


def demodulate(received, h_est, k, pn, length=None, eps=1e-12):
    """Hard-decision bits of data block ``k`` given an estimated CIR
    (a :class:`ChannelEstimate` or a dense vector).

    The PN tail is removed from the head of the data window, the data
    block's own tail (found at the start of the next guard, after removing
    that guard's PN head) is folded back to restore a circular convolution,
    and each subcarrier is zero-forced.  ``length`` bounds the CIR length
    used for the folding (default: last nonzero tap + 1).  Returns
    ``(bits, regularized)`` where ``regularized`` flags near-zero bins.
    """
    h = np.asarray(getattr(h_est, "dense", h_est), dtype=np.complex128)
    M, N = received.M, received.N
    if length is None:
        nz = np.flatnonzero(h)
        length = int(nz[-1]) + 1 if nz.size else 1
    length = max(1, min(int(length), M))
    h = h[:length]
    c = np.asarray(pn.values, dtype=np.complex128)
    conv = np.convolve(c, h)
    n_fold = length - 1
    data = np.array(received.data_window(k), dtype=np.complex128)
    if n_fold:
        data[:n_fold] -= conv[M:M + n_fold]
        start = received.guard_end(k) + N
        nxt = received.samples[start:start + n_fold] - conv[:n_fold]
        data[:n_fold] += nxt
    Y = ofdm_demodulate(data)
    H = np.fft.fft(h, N)
    small = np.abs(H) < eps
    H = np.where(small, eps, H)
    return qpsk_demap(Y / H), bool(small.any())


def qpsk_ber_theory(snr_db):
    """Bit error rate of Gray QPSK on AWGN at symbol SNR ``snr_db``."""
    rho = 10.0 ** (snr_db / 10.0)
    return 0.5 * math.erfc(math.sqrt(rho / 2.0))
