"""Shared numeric kernels: FFT, circular correlation, Toeplitz operators,
least squares, top-k support selection and operation counting.

Operation counts are a model, not a measurement: every kernel adds the
number of complex multiplications a textbook implementation performs
(radix-2 FFT, Householder QR, dense or sparse mat-vec) to an optional
:class:`OpCounter`.  Only multiplications feed the complexity comparisons.
"""
from dataclasses import dataclass

import numpy as np


class SingularSystemError(ValueError):
    """Least-squares system without full column rank."""


@dataclass
class OpCounter:
    complex_mults: int = 0
    complex_adds: int = 0

    def add(self, mults=0, adds=0):
        self.complex_mults += int(mults)
        self.complex_adds += int(adds)

    def merge(self, other):
        self.add(other.complex_mults, other.complex_adds)

    def copy(self):
        return OpCounter(self.complex_mults, self.complex_adds)


def _count(counter, mults, adds=0):
    if counter is not None:
        counter.add(mults, adds)


def fft_cost(n):
    """Complex multiplications of a radix-2 FFT of length ``n``."""
    if n <= 1:
        return 0
    return (n // 2) * int(np.ceil(np.log2(n)))


def as_complex_vector(x, name="x"):
    x = np.asarray(x, dtype=np.complex128)
    if x.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    if x.size == 0:
        raise ValueError("empty vector")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} contains non-finite values")
    return x


def fft(x, inverse=False, counter=None):
    """DFT of ``x``; the inverse carries the ``1/len`` scaling."""
    x = as_complex_vector(x)
    _count(counter, fft_cost(x.size), x.size * int(np.ceil(np.log2(max(x.size, 2)))))
    return np.fft.ifft(x) if inverse else np.fft.fft(x)


def circular_correlate(c, r, counter=None):
    """``u[l] = sum_m conj(c[m]) * r[(m + l) mod M]`` computed with FFTs."""
    c = as_complex_vector(c, "c")
    r = as_complex_vector(r, "r")
    if c.size != r.size:
        raise ValueError("dimension mismatch")
    return _circular_correlate_unchecked(c, r, counter)


def _circular_correlate_unchecked(c, r, counter=None):
    m = c.shape[-1]
    _count(counter, 3 * fft_cost(m) + m)
    return np.fft.ifft(np.conj(np.fft.fft(c)) * np.fft.fft(r, axis=-1), axis=-1)


def circular_correlate_many(c, rows, counter=None):
    """Row-wise :func:`circular_correlate` of a 2-D batch against one ``c``."""
    c = as_complex_vector(c, "c")
    rows = np.atleast_2d(np.asarray(rows, dtype=np.complex128))
    if rows.shape[1] != c.size:
        raise ValueError("dimension mismatch")
    m = c.size
    _count(counter, fft_cost(m) + rows.shape[0] * (2 * fft_cost(m) + m))
    return np.fft.ifft(np.conj(np.fft.fft(c))[None, :] * np.fft.fft(rows, axis=1), axis=1)


def _next_pow2(n):
    return 1 << max(0, int(n - 1).bit_length())


class ToeplitzOperator:
    """Implicit ``rows x cols`` Toeplitz matrix ``T[i, j] = t[i - j]``.

    ``first_col`` holds ``t[0..rows-1]`` and ``first_row`` holds
    ``t[0], t[-1], ..., t[-(cols-1)]``.
    """

    def __init__(self, first_col, first_row):
        first_col = as_complex_vector(first_col, "first_col")
        first_row = as_complex_vector(first_row, "first_row")
        if first_col[0] != first_row[0]:
            raise ValueError("first_col[0] must equal first_row[0]")
        self.first_col = first_col
        self.first_row = first_row
        self.rows = first_col.size
        self.cols = first_row.size
        # t[-(cols-1)] ... t[rows-1]; output row i of a full convolution of x
        # with this sequence sits at index i + cols - 1.
        self._seq = np.concatenate([first_row[:0:-1], first_col])
        # wrap-around of a length-n circular convolution stays clear of the
        # rows we keep as long as n >= rows + cols - 1
        self._nfft = _next_pow2(self._seq.size)
        self._spec = None

    @classmethod
    def from_pn(cls, c, L):
        """Operator over the IBI-free samples: ``rows = M - L + 1``, entry ``c[L-1+i-j]``."""
        c = as_complex_vector(c, "c")
        M = c.size
        if not 1 <= L <= M:
            raise ValueError(f"L={L} outside [1, {M}]")
        first_col = c[L - 1:M]
        first_row = c[L - 1::-1]
        return cls(first_col, first_row)

    @property
    def shape(self):
        return (self.rows, self.cols)

    def dense(self):
        i = np.arange(self.rows)[:, None]
        j = np.arange(self.cols)[None, :]
        return self._seq[i - j + self.cols - 1]

    def columns(self, idx):
        """Dense sub-matrix made of the columns listed in ``idx``."""
        idx = np.asarray(idx, dtype=np.int64)
        i = np.arange(self.rows)[:, None]
        return self._seq[i - idx[None, :] + self.cols - 1]

    def _spectrum(self, counter):
        if self._spec is None:
            self._spec = np.fft.fft(self._seq, self._nfft)
        _count(counter, fft_cost(self._nfft))
        return self._spec

    def matvec(self, x, counter=None):
        x = np.asarray(x, dtype=np.complex128)
        if x.shape != (self.cols,):
            raise ValueError("dimension mismatch")
        n = self._nfft
        spec = self._spectrum(None)
        _count(counter, 2 * fft_cost(n) + n)
        full = np.fft.ifft(np.fft.fft(x, n) * spec)
        return full[self.cols - 1:self.cols - 1 + self.rows]

    def rmatvec(self, y, counter=None):
        y = np.asarray(y, dtype=np.complex128)
        if y.shape != (self.rows,):
            raise ValueError("dimension mismatch")
        n = self._nfft
        spec = self._spectrum(None)
        _count(counter, 2 * fft_cost(n) + n)
        # x[j] = sum_i conj(t[i-j]) y[i]: correlate y against the sequence.
        buf = np.zeros(n, dtype=np.complex128)
        buf[self.cols - 1:self.cols - 1 + self.rows] = y
        corr = np.fft.ifft(np.fft.fft(buf) * np.conj(spec))
        return corr[:self.cols]

    def matvec_sparse(self, idx, vals, counter=None):
        """``T @ x`` for ``x`` supported on ``idx``; costs ``rows * len(idx)``."""
        idx = np.asarray(idx, dtype=np.int64)
        if idx.size == 0:
            return np.zeros(self.rows, dtype=np.complex128)
        _count(counter, self.rows * idx.size, self.rows * max(idx.size - 1, 0))
        return self.columns(idx) @ np.asarray(vals, dtype=np.complex128)


def toeplitz_apply(op, x, adjoint=False, counter=None):
    return op.rmatvec(x, counter) if adjoint else op.matvec(x, counter)


def least_squares(A, y, counter=None, rcond=1e-10):
    """``argmin_x ||y - A x||_2`` through a Householder QR factorization.

    ``A`` is a 2-D array or a list of column vectors.  Raises
    :class:`SingularSystemError` when ``A`` lacks full column rank.
    """
    if isinstance(A, (list, tuple)):
        A = np.column_stack([as_complex_vector(a, "column") for a in A])
    A = np.asarray(A, dtype=np.complex128)
    y = as_complex_vector(y, "y")
    if A.ndim != 2 or A.shape[0] != y.size:
        raise ValueError("dimension mismatch")
    g, s = A.shape
    if s == 0:
        return np.zeros(0, dtype=np.complex128)
    if s > g:
        raise SingularSystemError("singular system")
    q, r = np.linalg.qr(A)
    d = np.abs(np.diag(r))
    if d.min() <= rcond * max(d.max(), np.linalg.norm(A)):
        raise SingularSystemError("singular system")
    _count(counter, qr_solve_cost(g, s))
    # r is upper triangular; solve without forming an explicit inverse
    return _back_substitute(r, q.conj().T @ y)


def qr_solve_cost(g, s):
    """Multiplications for Householder QR of ``g x s`` plus ``Q^H y`` and
    back substitution."""
    qr = 2 * (g * s * s - s ** 3 // 3)
    return max(qr, 0) + g * s + s * (s + 1) // 2


def _back_substitute(r, b):
    n = r.shape[0]
    x = np.zeros(n, dtype=np.complex128)
    for i in range(n - 1, -1, -1):
        x[i] = (b[i] - r[i, i + 1:] @ x[i + 1:]) / r[i, i]
    return x


def independent_columns(A, rcond=1e-10):
    """Indices of a maximal linearly independent subset of ``A``'s columns,
    picked by column-pivoted QR and returned in ascending order."""
    from scipy.linalg import qr

    A = np.asarray(A, dtype=np.complex128)
    if A.shape[1] == 0:
        return np.zeros(0, dtype=np.int64)
    _, r, piv = qr(A, mode="economic", pivoting=True)
    d = np.abs(np.diag(r))
    if d.size == 0 or d[0] == 0:
        return np.zeros(0, dtype=np.int64)
    rank = int(np.sum(d > rcond * d[0]))
    return np.sort(piv[:rank])


def top_k_support(x, k):
    """Indices of the ``k`` largest ``|x[i]|`` in ascending order.

    Ties go to the smaller index.
    """
    x = np.asarray(x)
    if not 1 <= k <= x.size:
        raise ValueError(f"k={k} outside [1, {x.size}]")
    order = np.argsort(-np.abs(x), kind="stable")
    return np.sort(order[:k])


def hard_threshold(x, k):
    """Keep the ``k`` largest-magnitude entries of ``x`` and zero the rest."""
    out = np.zeros_like(x)
    if k <= 0:
        return out
    keep = top_k_support(x, min(k, x.size))
    out[keep] = x[keep]
    return out
