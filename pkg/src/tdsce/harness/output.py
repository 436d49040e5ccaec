"""Deterministic CSV output with a ``.meta`` sidecar."""
import csv
import io
import json
import os

from ..channel import load_profile

HEADERS = {
    "recovery_vs_g": ["config_hash", "seed", "experiment", "profile", "estimator", "snr_db", "G",
                      "trials", "recovery_prob", "mean_mse", "mse_db", "support_exact_rate",
                      "mean_complex_mults", "mean_complex_adds"],
    "mse_vs_snr": ["config_hash", "seed", "experiment", "profile", "estimator", "snr_db",
                   "trials", "mean_mse", "mse_db", "recovery_prob", "support_exact_rate",
                   "mean_complex_mults", "mean_complex_adds"],
    "ber_vs_snr": ["config_hash", "seed", "experiment", "profile", "estimator", "snr_db",
                   "trials", "bits_errored", "bits_total", "ber", "regularized_trials",
                   "mean_complex_mults", "mean_complex_adds"],
    "cir_snapshot": ["config_hash", "seed", "experiment", "profile", "estimator", "snr_db",
                     "trial", "tap", "abs_gain", "complex_mults", "complex_adds"],
}


def _fmt(v):
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        return repr(v)
    return str(v)


def to_csv(cfg, rows):
    """CSV text for ``rows``; every row carries the config hash and seed."""
    header = HEADERS[cfg.experiment]
    common = {"config_hash": cfg.hash(), "seed": cfg.seed, "experiment": cfg.experiment,
              "profile": cfg.profile_name}
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        full = {**common, **r}
        w.writerow([_fmt(full[h]) for h in header])
    return buf.getvalue()


def metadata(cfg):
    from .. import __version__
    prof = load_profile(cfg.profile_name)
    return {"tool": "tdsce", "version": __version__, "config_hash": cfg.hash(),
            "seed": cfg.seed, "experiment": cfg.experiment,
            "pn": {"taps": list(cfg.pn.taps), "seed_state": cfg.pn.seed_state},
            "profile": {"name": prof.name, "source": prof.source},
            "mse_normalization": "||h_est - h||^2 / ||h||^2 on the length-M dense CIR",
            "recovery_threshold": 1e-2, "config": cfg.to_dict()}


def write_results(cfg, rows, path):
    """Write ``path`` and ``<path without suffix>.meta``; returns both paths."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(to_csv(cfg, rows))
    meta = os.path.splitext(path)[0] + ".meta"
    with open(meta, "w", encoding="utf-8") as fh:
        json.dump(metadata(cfg), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path, meta
