"""Hot inner loops, compiled with numba when available.

Every kernel exists twice: a ``*_numpy`` reference written with array
operations and a ``*_jit`` loop version compiled by ``numba.njit``.  The
public names (``sparse_channel``, ``sos_fading``) point at the jit path
unless numba is missing or ``TDSCE_DISABLE_NUMBA=1`` is set in the
environment, in which case they fall back to numpy.  Both paths must agree
to rounding error; ``tests/test_kernels.py`` checks that and
``benchmarks/bench_kernels.py`` times them against each other.
"""
import os

import numpy as np

try:
    from numba import njit
    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAS_NUMBA = False

USE_NUMBA = HAS_NUMBA and os.environ.get("TDSCE_DISABLE_NUMBA", "0") not in ("1", "true", "yes")


def _jit_opts():
    return dict(cache=True, nogil=True, fastmath=False)


# ---------------------------------------------------------------------------
# time-varying sparse tapped-delay-line channel
# ---------------------------------------------------------------------------

def sparse_channel_numpy(s, delays, gains, frame_len):
    """Full linear convolution of ``s`` with a per-frame sparse CIR.

    Output sample ``n`` uses the taps of frame ``min(n // frame_len, F-1)``
    where ``F = gains.shape[0]``.  Output length is ``len(s) + max(delays)``.
    """
    s = np.asarray(s, dtype=np.complex128)
    delays = np.asarray(delays, dtype=np.int64)
    gains = np.asarray(gains, dtype=np.complex128)
    n_out = s.size + int(delays.max())
    frame = np.minimum(np.arange(n_out) // frame_len, gains.shape[0] - 1)
    out = np.zeros(n_out, dtype=np.complex128)
    for p in range(delays.size):
        d = int(delays[p])
        shifted = np.zeros(n_out, dtype=np.complex128)
        shifted[d:d + s.size] = s
        out += gains[frame, p] * shifted
    return out


def sos_fading_numpy(t, fd, alpha, phi_c, phi_s):
    """Sum-of-sinusoids Rayleigh gains, one column per tap.

    ``alpha``, ``phi_c`` and ``phi_s`` have shape ``(taps, oscillators)``.
    Returns complex array ``(len(t), taps)`` with unit mean power per tap.
    """
    t = np.asarray(t, dtype=np.float64)
    n_osc = alpha.shape[1]
    w = 2.0 * np.pi * fd
    arg_c = w * t[:, None, None] * np.cos(alpha)[None] + phi_c[None]
    arg_s = w * t[:, None, None] * np.sin(alpha)[None] + phi_s[None]
    xc = np.cos(arg_c).sum(axis=2)
    xs = np.sin(arg_s).sum(axis=2)
    return (xc + 1j * xs) / np.sqrt(n_osc)


if HAS_NUMBA:

    @njit(**_jit_opts())
    def sparse_channel_jit(s, delays, gains, frame_len):
        n_in = s.shape[0]
        n_taps = delays.shape[0]
        dmax = 0
        for p in range(n_taps):
            if delays[p] > dmax:
                dmax = delays[p]
        n_out = n_in + dmax
        n_frames = gains.shape[0]
        out = np.zeros(n_out, dtype=np.complex128)
        for n in range(n_out):
            f = n // frame_len
            if f >= n_frames:
                f = n_frames - 1
            acc = 0.0 + 0.0j
            for p in range(n_taps):
                m = n - delays[p]
                if 0 <= m < n_in:
                    acc += gains[f, p] * s[m]
            out[n] = acc
        return out

    @njit(**_jit_opts())
    def sos_fading_jit(t, fd, alpha, phi_c, phi_s):
        n_t = t.shape[0]
        n_taps, n_osc = alpha.shape
        w = 2.0 * np.pi * fd
        out = np.empty((n_t, n_taps), dtype=np.complex128)
        scale = 1.0 / np.sqrt(n_osc)
        for p in range(n_taps):
            for k in range(n_t):
                xc = 0.0
                xs = 0.0
                for n in range(n_osc):
                    xc += np.cos(w * t[k] * np.cos(alpha[p, n]) + phi_c[p, n])
                    xs += np.sin(w * t[k] * np.sin(alpha[p, n]) + phi_s[p, n])
                out[k, p] = (xc + 1j * xs) * scale
        return out

else:  # pragma: no cover
    sparse_channel_jit = sparse_channel_numpy
    sos_fading_jit = sos_fading_numpy


def sparse_channel(s, delays, gains, frame_len):
    s = np.ascontiguousarray(s, dtype=np.complex128)
    delays = np.ascontiguousarray(delays, dtype=np.int64)
    gains = np.ascontiguousarray(np.atleast_2d(gains), dtype=np.complex128)
    if USE_NUMBA:
        return sparse_channel_jit(s, delays, gains, int(frame_len))
    return sparse_channel_numpy(s, delays, gains, int(frame_len))


def sos_fading(t, fd, alpha, phi_c, phi_s):
    t = np.ascontiguousarray(t, dtype=np.float64)
    args = (np.ascontiguousarray(alpha, dtype=np.float64),
            np.ascontiguousarray(phi_c, dtype=np.float64),
            np.ascontiguousarray(phi_s, dtype=np.float64))
    if USE_NUMBA:
        return sos_fading_jit(t, float(fd), *args)
    return sos_fading_numpy(t, float(fd), *args)
