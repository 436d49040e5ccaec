"""Fast invariant checks that need no test runner."""
import numpy as np

from ..channel import SparseCir, add_awgn, propagate, unit_noise
from ..estimator import CoarsePriors, Measurement, ml_refine, pa_iht
from ..numerics import ToeplitzOperator, circular_correlate, least_squares
from ..signal import FrameConfig, generate_pn, random_transmission
from .metrics import demodulate, mse


def _check_correlation(rng):
    a = rng.standard_normal(64) + 1j * rng.standard_normal(64)
    b = rng.standard_normal(64) + 1j * rng.standard_normal(64)
    direct = np.array([np.sum(np.conj(a) * np.roll(b, -k)) for k in range(64)])
    got = circular_correlate(a, b)
    return np.linalg.norm(got - direct) <= 1e-9 * np.linalg.norm(direct)


def _check_toeplitz(rng):
    c = generate_pn(256).values
    op = ToeplitzOperator.from_pn(c, 40)
    x = rng.standard_normal(40) + 1j * rng.standard_normal(40)
    return np.allclose(op.matvec(x), op.dense() @ x, rtol=0, atol=1e-9 * np.linalg.norm(x) * 16)


def _check_least_squares(rng):
    A = rng.standard_normal((30, 5)) + 1j * rng.standard_normal((30, 5))
    y = rng.standard_normal(30) + 1j * rng.standard_normal(30)
    x = least_squares(A, y)
    ref = np.linalg.solve(A.conj().T @ A, A.conj().T @ y)
    return np.linalg.norm(x - ref) <= 1e-9 * np.linalg.norm(ref)


def _check_pn():
    c = generate_pn(256).values
    return set(np.unique(c)) == {-1.0, 1.0} and abs(int(c[:255].sum())) == 1


def _check_noiseless_recovery(rng):
    M, L = 256, 60
    pn = generate_pn(M)
    op = ToeplitzOperator.from_pn(pn.values, L)
    D = np.sort(rng.choice(L, 4, replace=False))
    g = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    h = np.zeros(L, complex)
    h[D] = g
    y = op.matvec(h)
    hp = np.zeros(M, complex)
    hp[:L] = h + 0.01 * (rng.standard_normal(L) + 1j * rng.standard_normal(L))
    pri = CoarsePriors(D0=D[:2], h_bar=np.abs(hp), h_bar_prime=hp, L_hat=L, G_hat=M - L + 1,
                       S0=2, S=4, E_th=0.0, a=1, b=2)
    meas = Measurement(y_bar=y, phi=op, averaged_over=1)
    det = pa_iht(meas, pri)
    est = ml_refine(meas, det.support, M=M)
    full = np.zeros(M, complex)
    full[:L] = h
    return mse(est.dense, full) < 1e-10


def _check_demodulation(rng):
    cfg = FrameConfig(symbols_per_run=3)
    pn = generate_pn(cfg)
    tx = random_transmission(cfg, pn, rng)
    cir = SparseCir(np.array([0, 5, 40]), np.array([1.0, 0.5j, -0.3]), 0)
    clean = propagate(tx.samples, [cir] * 3, cfg.M, cfg.N)
    rx = add_awgn(clean, np.inf, unit_noise(clean.size, rng), cfg.M, cfg.N, num_frames=3)
    bits, _ = demodulate(rx, cir.dense(cfg.M), 1, pn)
    return np.array_equal(bits, tx.bits[2 * cfg.N:4 * cfg.N])


CHECKS = {
    "circular correlation vs direct summation": _check_correlation,
    "Toeplitz apply vs dense mat-vec": _check_toeplitz,
    "least squares vs normal equations": _check_least_squares,
    "PN sequence balance": lambda rng: _check_pn(),
    "noiseless sparse recovery": _check_noiseless_recovery,
    "noiseless demodulation with perfect CSI": _check_demodulation,
}


def run_selftest(seed=0, out=print):
    """Run every check; returns the number of failures."""
    failures = 0
    for name, fn in CHECKS.items():
        ok = bool(fn(np.random.default_rng(seed)))
        failures += not ok
        out(f"{'PASS' if ok else 'FAIL'}  {name}")
    return failures
