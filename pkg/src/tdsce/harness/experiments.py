"""Monte-Carlo experiment drivers.

Each trial owns the RNG stream ``SeedSequence(seed, spawn_key=(trial,))``,
so results do not depend on execution order or worker count.  Within a
trial one fading realization and one unit-variance noise realization per
stream are reused across the SNR grid (common random numbers).
"""
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from ..channel import (FadingProcess, add_awgn, coherence_params, load_profile, propagate,
                       quantize_profile, unit_noise)
from ..estimator import (ChannelEstimate, EthRule, PnFilter, cosamp, crlb, dpn_estimate,
                         iht_classic, mcosamp_estimate, pa_iht_pipeline)
from ..numerics import OpCounter, SingularSystemError
from ..signal import FrameConfig, generate_pn, random_transmission
from .metrics import demodulate, mse

RECOVERY_MSE = 1e-2


@dataclass
class Setup:
    """Everything a trial needs that does not depend on the trial index."""
    cfg: object
    profile: object
    template: object
    params: object
    pn: object
    pn_filter: object
    eth_rule: object
    i: int
    K: int


def make_setup(cfg):
    M, N = cfg.frame.M, cfg.frame.N
    profile = load_profile(cfg.profile_name)
    template = quantize_profile(profile)
    params = coherence_params(profile, M, N, cap_R_d=cfg.cap_R_d, R_g1_static=cfg.R_g1_static)
    params = params.with_overrides(**asdict(cfg.r_overrides))
    pn = generate_pn(M, taps=tuple(cfg.pn.taps), seed_state=cfg.pn.seed_state)
    eth = EthRule(k_sigma=cfg.eth.k_sigma, floor_frac=cfg.eth.floor_frac, guard=cfg.eth.guard)
    return Setup(cfg=cfg, profile=profile, template=template, params=params, pn=pn,
                 pn_filter=PnFilter(pn, cfg.pn_filter), eth_rule=eth, i=params.R_d,
                 K=2 * params.R_d + 2)


class Stream:
    """One noiseless transmission plus a reusable unit noise realization."""

    def __init__(self, setup, fading, dual_pn, tx_seed, noise_seed):
        M, N = setup.cfg.frame.M, setup.cfg.frame.N
        self.frame = FrameConfig(M=M, N=N, dual_pn=dual_pn, symbols_per_run=setup.K)
        period = self.frame.frame_len / setup.profile.fs_hz
        self.cirs = fading.cirs(setup.K, symbol_period_s=period)
        self.tx = random_transmission(self.frame, setup.pn, np.random.default_rng(tx_seed))
        self.clean = propagate(self.tx.samples, self.cirs, M, N, dual_pn)
        self.noise = unit_noise(self.clean.size, np.random.default_rng(noise_seed))

    def received(self, snr_db):
        f = self.frame
        return add_awgn(self.clean, snr_db, self.noise, f.M, f.N, f.dual_pn, f.symbols_per_run)

    def truth(self, k):
        return self.cirs[k]

    def bits(self, k):
        n = self.frame.bits_per_symbol
        return self.tx.bits[k * n:(k + 1) * n]


def draw_streams(setup, seed, trial, dual):
    """Single-PN stream (and optionally a dual-PN stream sampling the same
    fading process) for one trial."""
    ss = np.random.SeedSequence(seed, spawn_key=(trial,))
    fade, tx1, n1, tx2, n2 = ss.spawn(5)
    fp = FadingProcess(setup.template, setup.params.f_d_hz, 1.0, np.random.default_rng(fade))
    single = Stream(setup, fp, False, tx1, n1)
    return single, (Stream(setup, fp, True, tx2, n2) if dual else None)


def _zero(M):
    return ChannelEstimate(support=np.zeros(0, np.int64), gains=np.zeros(0, np.complex128), M=M,
                           status="failed")


def _record(estimator, point, est, cir, M, **extra):
    truth = cir.dense(M)
    e = mse(est.dense, truth)
    rec = {"point": point, "estimator": estimator, "mse": e,
           "support_exact": bool(np.array_equal(np.sort(est.support), np.sort(cir.delays))),
           "mults": est.op_count.complex_mults, "adds": est.op_count.complex_adds,
           "status": est.status}
    rec.update(extra)
    return rec


def _pa(setup, rx, snr_db, L_hat=None):
    cfg = setup.cfg
    try:
        return pa_iht_pipeline(rx, setup.pn, setup.params, setup.i, b=cfg.b_for(snr_db), a=cfg.a,
                               eth_rule=setup.eth_rule, L_hat=L_hat, max_iters=cfg.max_iters,
                               pn_filter=setup.pn_filter)
    except (ValueError, SingularSystemError):
        return None


def _mc(setup, rx, snr_db, L_hat=None):
    cfg = setup.cfg
    try:
        return mcosamp_estimate(rx, setup.pn, setup.i, b=cfg.b_for(snr_db), a=cfg.a,
                                eth_rule=setup.eth_rule, L_hat=L_hat,
                                pn_filter=setup.pn_filter).estimate
    except (ValueError, SingularSystemError):
        return _zero(cfg.frame.M)


def _dpn(setup, rx):
    cfg = setup.cfg
    return dpn_estimate(rx, setup.pn, setup.i, R=cfg.dpn_R, eth_rule=setup.eth_rule,
                        threshold=cfg.dpn_threshold, pn_filter=setup.pn_filter)


# ---------------------------------------------------------------------------
# per-trial bodies
# ---------------------------------------------------------------------------

def trial_recovery(setup, trial):
    cfg, M = setup.cfg, setup.cfg.frame.M
    snr = float(cfg.snr_grid_db[0])
    single, _ = draw_streams(setup, cfg.seed, trial, dual=False)
    rx = single.received(snr)
    cir = single.truth(setup.i)
    out = []
    for G in cfg.g_grid:
        L_hat = M - int(G) + 1
        res = _pa(setup, rx, snr, L_hat=L_hat)
        for name in cfg.estimators:
            if name == "pa_iht":
                est = res.estimate if res else _zero(M)
            elif name in ("cosamp", "iht"):
                if res is None:
                    est = _zero(M)
                elif name == "cosamp":
                    est = cosamp(res.measurement, res.priors.S, M=M, counter=OpCounter())
                else:
                    est = iht_classic(res.measurement, res.priors.S, M=M, counter=OpCounter())
            elif name == "mcosamp":
                est = _mc(setup, rx, snr, L_hat=L_hat)
            else:
                continue
            out.append(_record(name, int(G), est, cir, M))
    return out


def trial_mse(setup, trial):
    cfg, M = setup.cfg, setup.cfg.frame.M
    single, dual = draw_streams(setup, cfg.seed, trial, dual="dpn" in cfg.estimators)
    cir = single.truth(setup.i)
    out = []
    for snr in cfg.snr_grid_db:
        snr = float(snr)
        rx = single.received(snr)
        res = _pa(setup, rx, snr) if {"pa_iht", "crlb"} & set(cfg.estimators) else None
        for name in cfg.estimators:
            if name == "pa_iht":
                out.append(_record(name, snr, res.estimate if res else _zero(M), cir, M))
            elif name == "mcosamp":
                out.append(_record(name, snr, _mc(setup, rx, snr), cir, M))
            elif name == "dpn":
                out.append(_record(name, snr, _dpn(setup, dual.received(snr)),
                                   dual.truth(setup.i), M))
            elif name == "crlb" and res is not None:
                bound = crlb(res.priors.S, res.priors.G_hat, setup.params.R_g2,
                             10.0 ** (snr / 10.0))
                out.append({"point": snr, "estimator": "crlb", "mse": bound,
                            "support_exact": False, "mults": 0, "adds": 0, "status": "bound"})
    return out


def _ber_record(name, snr, stream, rx, h, k, pn, est=None):
    bits, flagged = demodulate(rx, h, k, pn)
    ref = stream.bits(k)
    errs = int(np.count_nonzero(bits != ref))
    ops = est.op_count if est is not None else OpCounter()
    return {"point": snr, "estimator": name, "bits_errored": errs, "bits_total": int(ref.size),
            "regularized": flagged, "mults": ops.complex_mults, "adds": ops.complex_adds}


def trial_ber(setup, trial):
    cfg, M, i, pn = setup.cfg, setup.cfg.frame.M, setup.i, setup.pn
    single, dual = draw_streams(setup, cfg.seed, trial, dual="dpn" in cfg.estimators)
    out = []
    for snr in cfg.snr_grid_db:
        snr = float(snr)
        rx = single.received(snr)
        out.append(_ber_record("perfect_csi", snr, single, rx, single.truth(i).dense(M), i, pn))
        for name in cfg.estimators:
            if name == "pa_iht":
                res = _pa(setup, rx, snr)
                est = res.estimate if res else _zero(M)
                out.append(_ber_record(name, snr, single, rx, est.dense, i, pn, est))
            elif name == "mcosamp":
                est = _mc(setup, rx, snr)
                out.append(_ber_record(name, snr, single, rx, est.dense, i, pn, est))
            elif name == "dpn":
                rxd = dual.received(snr)
                est = _dpn(setup, rxd)
                out.append(_ber_record(name, snr, dual, rxd, est.dense, i, pn, est))
    return out


def snapshot(setup, trial=None):
    """Dense true and estimated CIRs of one trial at the first grid SNR."""
    cfg, M = setup.cfg, setup.cfg.frame.M
    trial = cfg.snapshot_trial if trial is None else trial
    snr = float(cfg.snr_grid_db[0])
    single, dual = draw_streams(setup, cfg.seed, trial, dual="dpn" in cfg.estimators)
    rx = single.received(snr)
    cir = single.truth(setup.i)
    out = {"truth": (cir.dense(M), OpCounter())}
    for name in cfg.estimators:
        if name == "pa_iht":
            res = _pa(setup, rx, snr)
            est = res.estimate if res else _zero(M)
        elif name == "mcosamp":
            est = _mc(setup, rx, snr)
        elif name == "dpn":
            est = _dpn(setup, dual.received(snr))
        else:
            continue
        out[name] = (est.dense, est.op_count)
    return cir, out


TRIAL_BODIES = {"recovery_vs_g": trial_recovery, "mse_vs_snr": trial_mse,
                "ber_vs_snr": trial_ber}


def _worker(args):
    cfg, trial = args
    return TRIAL_BODIES[cfg.experiment](make_setup(cfg), trial)


def run_trials(cfg, workers=1):
    """Per-trial record lists in trial-index order."""
    if workers <= 1:
        setup = make_setup(cfg)
        body = TRIAL_BODIES[cfg.experiment]
        return [body(setup, t) for t in range(cfg.trials)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_worker, [(cfg, t) for t in range(cfg.trials)],
                             chunksize=max(1, cfg.trials // (4 * workers))))


def _group(per_trial):
    groups = {}
    for recs in per_trial:
        for r in recs:
            groups.setdefault((r["point"], r["estimator"]), []).append(r)
    return groups


def _mean(xs):
    return float(np.mean(xs)) if xs else float("nan")


def _summary(recs):
    m = np.array([r["mse"] for r in recs])
    return {"trials": len(recs), "mean_mse": float(m.mean()),
            "mse_db": float(10 * np.log10(m.mean())) if m.mean() > 0 else float("-inf"),
            "recovery_prob": float(np.mean(m < RECOVERY_MSE)),
            "support_exact_rate": float(np.mean([r["support_exact"] for r in recs])),
            "mean_complex_mults": _mean([r["mults"] for r in recs]),
            "mean_complex_adds": _mean([r["adds"] for r in recs])}


def run_recovery_vs_g(cfg, workers=1):
    """Rows ``{G, estimator, recovery_prob, ...}`` with ``L_hat = M - G + 1``
    forced for every estimator."""
    if cfg.experiment != "recovery_vs_g":
        raise ValueError("config is not a recovery_vs_g experiment")
    if any(int(G) > cfg.frame.M for G in cfg.g_grid):
        raise ValueError("G exceeds M")
    if not load_profile(cfg.profile_name).is_static:
        raise ValueError("recovery_vs_g needs a static profile")
    groups = _group(run_trials(cfg, workers))
    rows = []
    for G in cfg.g_grid:
        for name in cfg.estimators:
            recs = groups.get((int(G), name))
            if recs:
                rows.append({"estimator": name, "snr_db": float(cfg.snr_grid_db[0]), "G": int(G),
                             **_summary(recs)})
    return rows


def run_mse_vs_snr(cfg, workers=1):
    """Rows ``{snr_db, estimator, mean_mse, ...}``; ``crlb`` rows hold the
    bound averaged over trials."""
    if cfg.experiment != "mse_vs_snr":
        raise ValueError("config is not a mse_vs_snr experiment")
    groups = _group(run_trials(cfg, workers))
    rows = []
    for snr in cfg.snr_grid_db:
        for name in cfg.estimators:
            recs = groups.get((float(snr), name))
            if recs:
                rows.append({"estimator": name, "snr_db": float(snr), **_summary(recs)})
    return rows


def run_ber_vs_snr(cfg, workers=1):
    """Rows ``{snr_db, estimator, ber, ...}`` including a ``perfect_csi``
    reference; each point needs at least 1e5 payload bits."""
    if cfg.experiment != "ber_vs_snr":
        raise ValueError("config is not a ber_vs_snr experiment")
    if cfg.trials * 2 * cfg.frame.N < 100_000:
        raise ValueError("ber_vs_snr needs trials * 2N >= 1e5 bits per point")
    groups = _group(run_trials(cfg, workers))
    rows = []
    for snr in cfg.snr_grid_db:
        for name in ["perfect_csi"] + [e for e in cfg.estimators if e != "crlb"]:
            recs = groups.get((float(snr), name))
            if not recs:
                continue
            errs = sum(r["bits_errored"] for r in recs)
            total = sum(r["bits_total"] for r in recs)
            rows.append({"estimator": name, "snr_db": float(snr), "trials": len(recs),
                         "bits_errored": errs, "bits_total": total, "ber": errs / total,
                         "regularized_trials": sum(r["regularized"] for r in recs),
                         "mean_complex_mults": _mean([r["mults"] for r in recs]),
                         "mean_complex_adds": _mean([r["adds"] for r in recs])})
    return rows


def run_cir_snapshot(cfg, workers=1):
    """Rows ``{estimator, tap, abs_gain}`` for every tap ``0..M-1``."""
    if cfg.experiment != "cir_snapshot":
        raise ValueError("config is not a cir_snapshot experiment")
    setup = make_setup(cfg)
    _, dense = snapshot(setup)
    rows = []
    for name, (h, ops) in dense.items():
        for tap, g in enumerate(np.abs(h)):
            rows.append({"estimator": name, "snr_db": float(cfg.snr_grid_db[0]),
                         "trial": cfg.snapshot_trial, "tap": tap, "abs_gain": float(g),
                         "complex_mults": ops.complex_mults, "complex_adds": ops.complex_adds})
    return rows


RUNNERS = {"recovery_vs_g": run_recovery_vs_g, "mse_vs_snr": run_mse_vs_snr,
           "ber_vs_snr": run_ber_vs_snr, "cir_snapshot": run_cir_snapshot}


def run_experiment(cfg, workers=1):
    return RUNNERS[cfg.experiment](cfg, workers)
