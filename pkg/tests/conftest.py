import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=50, deadline=None)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def static_stream(delays, gains, K=4, M=256, N=2048, random_data=False, rng=None, snr_db=np.inf,
                  dual_pn=False):
    """Received stream of ``K`` frames through a fixed sparse channel."""
    from tdsce.channel import SparseCir, add_awgn, propagate, unit_noise
    from tdsce.signal import FrameConfig, generate_pn, random_transmission

    rng = rng if rng is not None else np.random.default_rng(0)
    cfg = FrameConfig(M=M, N=N, symbols_per_run=K, dual_pn=dual_pn)
    pn = generate_pn(cfg)
    tx = random_transmission(cfg, pn, rng)
    samples = tx.samples
    if not random_data:
        samples = samples.reshape(K, cfg.frame_len).copy()
        samples[:, cfg.guard_len:] = 0
        samples = samples.ravel()
    cir = SparseCir(np.asarray(delays), np.asarray(gains, dtype=complex), 0)
    clean = propagate(samples, [cir] * K, M, N, dual_pn)
    rx = add_awgn(clean, snr_db, unit_noise(clean.size, rng), M, N, dual_pn, K)
    return rx, pn, cir


_ACCEPTANCE = []


@pytest.fixture
def acceptance():
    """``report(criterion, ok, detail)`` records one pass/fail line."""
    def report(criterion, ok, detail):
        line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'}  {detail}"
        _ACCEPTANCE.append(line)
        print(line)
        return ok
    return report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
