"""Sparse channel estimation for TDS-OFDM.

The proposed chain has four steps:

1. overlap-add the received TS with its tail and correlate with the PN over
   many symbols to get coarse delays ``D0``, a channel length ``L_hat`` and
   a sparsity level ``S`` (:func:`coarse_delays`);
2. correlate a shorter average to get complex coarse gains
   (:func:`coarse_gains`);
3. run prior-aided iterative hard thresholding on the IBI-free region of
   the TS (:func:`pa_iht`);
4. refit the gains on the detected support by least squares
   (:func:`ml_refine`).

Baselines: classical IHT, CoSaMP, a prior-assisted CoSaMP scheme whose
coarse stage only looks at the TS main windows (:func:`mcosamp_estimate`)
and the dual-PN correlation estimator (:func:`dpn_estimate`).
"""
from dataclasses import dataclass, field, replace

import numpy as np

from .numerics import (OpCounter, SingularSystemError, ToeplitzOperator, fft_cost,
                       independent_columns, least_squares, qr_solve_cost, top_k_support)

# (lower SNR bound in dB, b); the last band whose bound is <= SNR applies
DEFAULT_B_TABLE = ((-np.inf, 3), (10.0, 2), (30.0, 1))


class PnFilter:
    """Normalized circular correlator against the PN.

    ``matched`` computes ``c (x) r / M``, which leaves the periodic
    autocorrelation sidelobes of ``c`` on every tap.  ``inverse`` divides by
    the PN spectrum instead (spectral nulls are zeroed), which removes the
    sidelobes at the cost of some noise gain.  Both cost one forward and
    one inverse FFT per row.
    """

    def __init__(self, pn, mode="inverse", null_tol=1e-6):
        if mode not in ("matched", "inverse"):
            raise ValueError(f"unknown PN filter {mode!r}")
        c = np.asarray(getattr(pn, "values", pn), dtype=np.complex128)
        self.c = c
        self.M = c.size
        self.mode = mode
        C = np.fft.fft(c)
        if mode == "matched":
            self._W = np.conj(C) / self.M
        else:
            ok = np.abs(C) ** 2 > null_tol * self.M
            self._W = np.where(ok, 1.0 / np.where(ok, C, 1.0), 0.0)
        # only the inverse filter's output is a CIR whose nulls can be refilled
        self.null_bins = np.flatnonzero(self._W == 0) if mode == "inverse" else np.zeros(0, int)

    def __call__(self, rows, counter=None):
        rows = np.asarray(rows, dtype=np.complex128)
        if rows.shape[-1] != self.M:
            raise ValueError("dimension mismatch")
        n_rows = 1 if rows.ndim == 1 else rows.shape[0]
        if counter is not None:
            counter.add(n_rows * (2 * fft_cost(self.M) + self.M))
        return np.fft.ifft(np.fft.fft(rows, axis=-1) * self._W, axis=-1)

    def complete(self, u, L, counter=None):
        """Restore the components of a filtered CIR ``u`` lost in the PN's
        spectral nulls, using that the true CIR vanishes beyond lag ``L``."""
        if self.null_bins.size == 0 or L >= self.M:
            return u
        n = np.arange(self.M)
        E = np.exp(2j * np.pi * np.outer(n, self.null_bins) / self.M)
        beta = np.linalg.lstsq(E[L:], -u[L:], rcond=None)[0]
        if counter is not None:
            counter.add((self.M - L + self.M) * self.null_bins.size)
        return u + E @ beta


def _as_filter(pn, pn_filter):
    return pn_filter if isinstance(pn_filter, PnFilter) else PnFilter(pn, pn_filter)


def b_for_snr(snr_db, table=DEFAULT_B_TABLE):
    """Sparsity margin ``b`` for a given SNR: larger at low SNR, within [0, 5]."""
    b = table[0][1]
    for lower, value in table:
        if snr_db >= lower:
            b = value
    if not 0 <= b <= 5:
        raise ValueError("b must lie in [0, 5]")
    return int(b)


def default_a(max_delay):
    return max(1, int(round(0.1 * max_delay)))


@dataclass(frozen=True)
class EthRule:
    """Detection threshold ``max(k_sigma * 1.4826 * median|h|, floor_frac * max|h|)``.

    The median runs over lags ``>= guard``; for a sparse profile it tracks
    the noise floor.
    """
    k_sigma: float = 3.0
    floor_frac: float = 0.05
    guard: int = 0

    def __call__(self, h_mag):
        h_mag = np.abs(np.asarray(h_mag))
        sigma = 1.4826 * np.median(h_mag[self.guard:])
        return float(max(self.k_sigma * sigma, self.floor_frac * h_mag.max()))


@dataclass
class CoarsePriors:
    D0: np.ndarray
    h_bar: np.ndarray
    h_bar_prime: np.ndarray
    L_hat: int
    G_hat: int
    S0: int
    S: int
    E_th: float
    a: int
    b: int
    guard_limited: bool = False

    def __post_init__(self):
        if self.G_hat + self.L_hat != self.h_bar.size + 1:
            raise ValueError("G_hat + L_hat must equal M + 1")
        if not self.S >= self.S0 >= 1:
            raise ValueError("need S >= S0 >= 1")


@dataclass
class Measurement:
    y_bar: np.ndarray
    phi: ToeplitzOperator
    averaged_over: int
    under_observed: bool = False

    @property
    def G_hat(self):
        return self.phi.rows

    @property
    def L_hat(self):
        return self.phi.cols


@dataclass
class ChannelEstimate:
    support: np.ndarray
    gains: np.ndarray
    M: int
    iterations_used: int = 0
    op_count: OpCounter = field(default_factory=OpCounter)
    status: str = "ok"
    residual: float = np.nan
    dense_override: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self.support = np.asarray(self.support, dtype=np.int64)
        self.gains = np.asarray(self.gains, dtype=np.complex128)
        if self.support.shape != self.gains.shape:
            raise ValueError("support and gains differ in length")

    @property
    def dense(self):
        if self.dense_override is not None:
            return self.dense_override
        h = np.zeros(self.M, dtype=np.complex128)
        h[self.support] = self.gains
        return h

    @classmethod
    def from_vector(cls, x, M, **kw):
        x = np.asarray(x, dtype=np.complex128)
        idx = np.flatnonzero(x)
        return cls(support=idx, gains=x[idx], M=M, **kw)


# ---------------------------------------------------------------------------
# Steps 1 and 2: coarse acquisition
# ---------------------------------------------------------------------------

def overlap_add_ts(received, k, tail_len=None):
    """TS main window of symbol ``k`` plus its following tail window.

    ``tail_len`` keeps only the first ``tail_len`` tail samples (the rest is
    zeroed); the default uses the full ``M``-sample tail.
    """
    M = received.M
    tail_len = M if tail_len is None else int(tail_len)
    if not 0 <= tail_len <= M:
        raise ValueError("tail_len outside [0, M]")
    out = np.array(received.ts_window(k), dtype=np.complex128)
    out[:tail_len] += received.tail_window(k, tail_len)
    return out


def _windowed_estimates(filt, windows, R, counter):
    """Filtered average of every run of ``R`` consecutive windows.

    Filtering is linear, so each run is summed in the time domain first and
    filtered once.
    """
    M = windows.shape[1]
    csum = np.concatenate([np.zeros((1, M), complex), np.cumsum(windows, axis=0)])
    return filt((csum[R:] - csum[:-R]) / R, counter)


def coarse_delays(received, pn, params, i, a=None, b=2, eth_rule=None, counter=None,
                  pn_filter="inverse"):
    """Coarse delay set, channel length and sparsity level for symbol ``i``.

    The ``2 R_d - R_g1`` magnitude profiles, each averaging ``R_g1``
    overlap-added TS windows, are averaged into ``h_bar``; lags at or above
    the threshold form ``D0``.  ``h_bar_prime`` of the result is left at
    zero; :func:`acquire_priors` fills it.
    """
    eth_rule = eth_rule or EthRule()
    filt = _as_filter(pn, pn_filter)
    M = filt.M
    ks = range(i - params.R_d + 1, i + params.R_d)
    windows = np.stack([overlap_add_ts(received, k) for k in ks])
    h_tilde = _windowed_estimates(filt, windows, params.R_g1, counter)
    h_bar = np.abs(h_tilde).mean(axis=0)
    E_th = eth_rule(h_bar)
    D0 = np.flatnonzero((h_bar >= E_th) & (h_bar > 0))
    if D0.size == 0:
        raise ValueError("no paths detected")
    a = default_a(D0[-1]) if a is None else int(a)
    L_hat = int(D0[-1]) + a
    guard_limited = L_hat > M
    L_hat = min(L_hat, M)
    S0 = int(D0.size)
    return CoarsePriors(D0=D0, h_bar=h_bar, h_bar_prime=np.zeros(M, complex), L_hat=L_hat,
                        G_hat=M - L_hat + 1, S0=S0, S=S0 + int(b), E_th=E_th, a=a, b=int(b),
                        guard_limited=guard_limited)


def coarse_gains(received, pn, params, i, L_hat, counter=None, pn_filter="inverse"):
    """Complex coarse gains from ``2 R_g2`` overlap-added TS windows whose
    tails are truncated to ``L_hat`` samples."""
    filt = _as_filter(pn, pn_filter)
    ks = range(i - params.R_g2 + 1, i + params.R_g2 + 1)
    acc = np.zeros(filt.M, dtype=np.complex128)
    for k in ks:
        acc += overlap_add_ts(received, k, L_hat)
    return filt.complete(filt(acc / (2 * params.R_g2), counter), L_hat, counter)


def acquire_priors(received, pn, params, i, b=2, a=None, eth_rule=None, L_hat=None,
                   counter=None, pn_filter="inverse"):
    """Steps 1 and 2 together.  ``L_hat`` forces the channel length (and so
    the IBI-free size ``G = M - L_hat + 1``); coarse delays beyond it are
    dropped."""
    pri = coarse_delays(received, pn, params, i, a=a, b=b, eth_rule=eth_rule, counter=counter,
                        pn_filter=pn_filter)
    if L_hat is not None:
        M = pri.h_bar.size
        if not 1 <= L_hat <= M:
            raise ValueError(f"L_hat={L_hat} outside [1, {M}]")
        D0 = pri.D0[pri.D0 < L_hat]
        if D0.size == 0:
            D0 = np.array([int(np.argmax(pri.h_bar[:L_hat]))])
        pri = replace(pri, D0=D0, L_hat=int(L_hat), G_hat=M - int(L_hat) + 1, S0=int(D0.size),
                      S=int(D0.size) + pri.b, guard_limited=False)
    pri.h_bar_prime = coarse_gains(received, pn, params, i, pri.L_hat, counter, pn_filter)
    return pri


def build_measurement(received, pn, priors, params, i):
    """Average of the last ``G_hat`` TS samples over ``2 R_g2`` symbols and
    the matching ``G_hat x L_hat`` Toeplitz operator built from the PN."""
    G = priors.G_hat
    if G < 1:
        raise ValueError("G_hat must be at least 1")
    ks = range(i - params.R_g2 + 1, i + params.R_g2 + 1)
    y = np.zeros(G, dtype=np.complex128)
    for k in ks:
        y += received.ibi_free(k, G)
    y /= 2 * params.R_g2
    phi = ToeplitzOperator.from_pn(pn.values, priors.L_hat)
    return Measurement(y_bar=y, phi=phi, averaged_over=2 * params.R_g2,
                       under_observed=G < priors.S)


# ---------------------------------------------------------------------------
# Steps 3 and 4
# ---------------------------------------------------------------------------

def _residual(meas, support, vals, counter):
    return meas.y_bar - meas.phi.matvec_sparse(support, vals, counter)


def pa_iht(meas, priors, max_iters=20, tol=None, counter=None):
    """Prior-aided iterative hard thresholding (support detection).

    Starts from the coarse gains on ``D0``; every iteration picks the ``S``
    largest entries of the gradient step, writes the coarse gains there and
    prunes back to ``S`` entries.  Iteration continues while the residual
    falls by more than ``tol``; the first non-improving iterate is rejected.
    Gains of the result are the coarse gains (refitting is
    :func:`ml_refine`'s job).
    """
    counter = counter if counter is not None else OpCounter()
    L = meas.L_hat
    S = min(priors.S, L)
    hp = priors.h_bar_prime[:L]
    tol = 1e-8 * np.linalg.norm(meas.y_bar) if tol is None else tol
    x = np.zeros(L, dtype=np.complex128)
    D0 = priors.D0[priors.D0 < L]
    x[D0] = hp[D0]
    supp = np.flatnonzero(x)
    r = _residual(meas, supp, x[supp], counter)
    u = np.linalg.norm(r)
    it = 0
    while it < max_iters and u >= tol:
        it += 1
        z = x + meas.phi.rmatvec(r, counter)
        gamma = top_k_support(z, S)
        x_new = x.copy()
        x_new[gamma] = hp[gamma]
        nz = np.flatnonzero(x_new)
        if nz.size > S:
            keep = nz[top_k_support(x_new[nz], S)]
            pruned = np.zeros_like(x_new)
            pruned[keep] = x_new[keep]
            x_new = pruned
        supp_new = np.flatnonzero(x_new)
        r_new = _residual(meas, supp_new, x_new[supp_new], counter)
        u_new = np.linalg.norm(r_new)
        if u_new < tol or u - u_new > tol:
            x, r, u = x_new, r_new, u_new
            continue
        break
    supp = np.flatnonzero(x)
    return ChannelEstimate(support=supp, gains=x[supp], M=priors.h_bar.size, iterations_used=it,
                           op_count=counter, residual=float(u))


def ml_refine(meas, D, M=None, rank_by=None, counter=None):
    """Least-squares gains on support ``D``; zero elsewhere.

    When ``|D| > G_hat`` only the ``G_hat`` entries with the largest
    ``|rank_by|`` (or the first ones when ``rank_by`` is None) are kept and
    the estimate is flagged ``under-observed``.
    """
    counter = counter if counter is not None else OpCounter()
    M = meas.phi.cols if M is None else M
    D = np.sort(np.asarray(D, dtype=np.int64))
    status = "ok"
    if D.size > meas.G_hat:
        status = "under-observed"
        if rank_by is None:
            D = D[:meas.G_hat]
        else:
            D = np.sort(D[top_k_support(np.asarray(rank_by)[D], meas.G_hat)])
    if D.size == 0:
        return ChannelEstimate(support=D, gains=np.zeros(0, complex), M=M, op_count=counter,
                               status=status, residual=float(np.linalg.norm(meas.y_bar)))
    try:
        g = least_squares(meas.phi.columns(D), meas.y_bar, counter)
    except SingularSystemError as exc:
        raise SingularSystemError("singular support") from exc
    res = np.linalg.norm(_residual(meas, D, g, None))
    return ChannelEstimate(support=D, gains=g, M=M, op_count=counter, status=status,
                           residual=float(res))


def crlb(S, G, R_g2, snr_linear):
    """Closed-form bound ``S / (2 R_g2 G rho)`` on the estimation error."""
    if min(S, G, R_g2) <= 0 or snr_linear <= 0:
        raise ValueError("crlb arguments must be positive")
    return S / (2.0 * R_g2 * G * snr_linear)


@dataclass
class PaIhtResult:
    estimate: ChannelEstimate
    detection: ChannelEstimate
    priors: CoarsePriors
    measurement: Measurement


def pa_iht_pipeline(received, pn, params, i, b=2, a=None, eth_rule=None, L_hat=None,
                    max_iters=20, tol=None, pn_filter="inverse"):
    """All four steps of the proposed estimator for symbol ``i``."""
    counter = OpCounter()
    pri = acquire_priors(received, pn, params, i, b=b, a=a, eth_rule=eth_rule, L_hat=L_hat,
                         counter=counter, pn_filter=pn_filter)
    meas = build_measurement(received, pn, pri, params, i)
    det = pa_iht(meas, pri, max_iters=max_iters, tol=tol, counter=counter)
    try:
        est = ml_refine(meas, det.support, M=pn.M, rank_by=pri.h_bar_prime, counter=counter)
    except SingularSystemError:
        # too few independent rows to refit: keep the coarse gains
        est = replace(det, status="rank-deficient")
    est.iterations_used = det.iterations_used
    if meas.under_observed and est.status == "ok":
        est.status = "under-observed"
    return PaIhtResult(estimate=est, detection=det, priors=pri, measurement=meas)


# ---------------------------------------------------------------------------
# baselines
# ---------------------------------------------------------------------------

def iht_classic(meas, S, max_iters=50, tol=None, M=None, counter=None):
    """Unit-step iterative hard thresholding from zero.  Reports status
    ``diverged`` once the residual exceeds ``1e6 * ||y||``."""
    if S < 1:
        raise ValueError("S must be at least 1")
    counter = counter if counter is not None else OpCounter()
    L = meas.L_hat
    S = min(S, L)
    ynorm = np.linalg.norm(meas.y_bar)
    tol = 1e-8 * ynorm if tol is None else tol
    x = np.zeros(L, dtype=np.complex128)
    r = meas.y_bar.copy()
    u = ynorm
    status = "ok"
    it = 0
    while it < max_iters and u >= tol:
        it += 1
        z = x + meas.phi.rmatvec(r, counter)
        keep = top_k_support(z, S)
        x = np.zeros(L, dtype=np.complex128)
        x[keep] = z[keep]
        r = _residual(meas, keep, x[keep], counter)
        u = np.linalg.norm(r)
        if not np.isfinite(u) or u > 1e6 * ynorm:
            status = "diverged"
            break
    return ChannelEstimate.from_vector(x, pn_len(meas, M), iterations_used=it, op_count=counter,
                                       status=status, residual=float(u))


def pn_len(meas, M):
    return meas.phi.cols if M is None else M


def _ls_on(meas, T, counter):
    """Least squares on columns ``T``; linearly dependent columns (and any
    beyond ``G``) are dropped first."""
    A = meas.phi.columns(T)
    try:
        return T, least_squares(A, meas.y_bar, counter)
    except SingularSystemError:
        keep = independent_columns(A)
        counter.add(qr_solve_cost(A.shape[0], min(A.shape)))
        T = T[keep]
        return T, least_squares(A[:, keep], meas.y_bar, counter)


def cosamp(meas, S, max_iters=None, warm_support=None, tol=None, M=None, counter=None):
    """CoSaMP with an optional warm-start support.

    Each iteration merges the ``2S`` largest proxy entries with the current
    support, fits by least squares, keeps the ``S`` largest and refits.
    Without a warm start it runs ``max_iters`` (default ``S``) iterations or
    until the residual drops below ``tol``; with one it also stops as soon
    as the residual stops decreasing.
    """
    if S < 1:
        raise ValueError("S must be at least 1")
    counter = counter if counter is not None else OpCounter()
    L = meas.L_hat
    S = min(S, L)
    max_iters = S if max_iters is None else max_iters
    ynorm = np.linalg.norm(meas.y_bar)
    tol = 1e-8 * ynorm if tol is None else tol
    x = np.zeros(L, dtype=np.complex128)
    if warm_support is not None and len(warm_support):
        T = np.sort(np.asarray(warm_support, dtype=np.int64))
        T = T[T < L]
        T, g = _ls_on(meas, T, counter)
        x[T] = g
    supp = np.flatnonzero(x)
    r = _residual(meas, supp, x[supp], counter)
    u = np.linalg.norm(r)
    it = 0
    while it < max_iters and u >= tol:
        it += 1
        proxy = meas.phi.rmatvec(r, counter)
        omega = top_k_support(proxy, min(2 * S, L))
        T = np.union1d(omega, np.flatnonzero(x))
        T, b = _ls_on(meas, T, counter)
        keep = top_k_support(b, min(S, b.size))
        T_new, g = _ls_on(meas, T[keep], counter)
        x_new = np.zeros(L, dtype=np.complex128)
        x_new[T_new] = g
        r_new = _residual(meas, T_new, g, counter)
        u_new = np.linalg.norm(r_new)
        if warm_support is not None and u_new >= u:
            break
        x, r, u = x_new, r_new, u_new
    return ChannelEstimate.from_vector(x, pn_len(meas, M), iterations_used=it, op_count=counter,
                                       residual=float(u))


@dataclass
class McosampResult:
    estimate: ChannelEstimate
    D0: np.ndarray
    S0: int
    S: int
    L_hat: int


def mcosamp_estimate(received, pn, i, b=2, a=None, eth_rule=None, L_hat=None, S=None,
                     pn_filter="inverse"):
    """Prior-assisted CoSaMP scheme.

    Coarse delays come from the TS main windows only (no tail, so no
    overlap-add) of the two TSs around data block ``i``; the measurement
    averages the IBI-free regions of the same two TSs.  CoSaMP is then
    warm-started on the coarse support and run for ``S - S0`` iterations.
    """
    eth_rule = eth_rule or EthRule()
    counter = OpCounter()
    filt = _as_filter(pn, pn_filter)
    c, M = filt.c, filt.M
    mains = np.stack([received.ts_window(k) for k in (i, i + 1)])
    h_m = np.abs(filt(mains, counter)).mean(axis=0)
    D0 = np.flatnonzero(h_m >= eth_rule(h_m))
    if D0.size == 0:
        D0 = np.array([int(np.argmax(h_m))])
    if L_hat is None:
        a = default_a(D0[-1]) if a is None else int(a)
        L_hat = min(int(D0[-1]) + a, M)
    D0 = D0[D0 < L_hat]
    if D0.size == 0:
        D0 = np.array([int(np.argmax(h_m[:L_hat]))])
    S0 = int(D0.size)
    S = S0 + int(b) if S is None else int(S)
    G = M - L_hat + 1
    y = 0.5 * (received.ibi_free(i, G) + received.ibi_free(i + 1, G))
    meas = Measurement(y_bar=y, phi=ToeplitzOperator.from_pn(c, L_hat), averaged_over=2,
                       under_observed=G < S)
    est = cosamp(meas, S, max_iters=max(1, S - S0), warm_support=D0, M=M, counter=counter)
    return McosampResult(estimate=est, D0=D0, S0=S0, S=S, L_hat=L_hat)


def dpn_estimate(received, pn, i, R=1, eth_rule=None, threshold=True, pn_filter="inverse"):
    """Dual-PN correlation estimate for symbol ``i``.

    The second PN of each guard only sees the first PN as interference, so
    it is a clean circular convolution with the channel; its correlation
    with the PN (averaged over symbols ``i - R + 1 .. i``) is the estimate.
    With ``threshold`` the dense output keeps only lags at or above the
    detection threshold; otherwise every lag is kept and ``support`` still
    lists the detected taps.
    """
    if not received.dual_pn:
        raise ValueError("dual-PN framing required")
    if R < 1:
        raise ValueError("R must be at least 1")
    eth_rule = eth_rule or EthRule()
    counter = OpCounter()
    filt = _as_filter(pn, pn_filter)
    M = filt.M
    acc = np.zeros(M, dtype=np.complex128)
    for k in range(i - R + 1, i + 1):
        acc += received.ts_window(k)
    h = filt(acc / R, counter)
    D = np.flatnonzero(np.abs(h) >= eth_rule(h))
    if threshold:
        return ChannelEstimate(support=D, gains=h[D], M=M, op_count=counter)
    return ChannelEstimate(support=D, gains=h[D], M=M, op_count=counter, dense_override=h,
                           status="unthresholded")
