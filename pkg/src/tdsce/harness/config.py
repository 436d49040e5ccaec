"""Experiment configuration: JSON files with strictly checked keys."""
import hashlib
import json
import os
from dataclasses import asdict, dataclass, field, fields

EXPERIMENTS = ("recovery_vs_g", "mse_vs_snr", "ber_vs_snr", "cir_snapshot")
ESTIMATORS = ("pa_iht", "iht", "cosamp", "mcosamp", "dpn", "crlb")

DEFAULT_ESTIMATORS = {
    "recovery_vs_g": ["pa_iht", "cosamp", "mcosamp", "iht"],
    "mse_vs_snr": ["pa_iht", "mcosamp", "dpn", "crlb"],
    "ber_vs_snr": ["pa_iht", "mcosamp", "dpn"],
    "cir_snapshot": ["pa_iht", "mcosamp", "dpn"],
}


@dataclass
class FrameSection:
    M: int = 256
    N: int = 2048


@dataclass
class PnSection:
    taps: list = field(default_factory=lambda: [8, 6, 5, 4])
    seed_state: int = 1


@dataclass
class EthSection:
    k_sigma: float = 3.0
    floor_frac: float = 0.05
    guard: int = 0


@dataclass
class ROverrides:
    R_d: int = None
    R_g1: int = None
    R_g2: int = None


@dataclass
class ExperimentConfig:
    experiment: str
    profile_name: str
    snr_grid_db: list = field(default_factory=lambda: [20.0])
    g_grid: list = field(default_factory=list)
    trials: int = 100
    estimators: list = None
    seed: int = 1
    frame: FrameSection = field(default_factory=FrameSection)
    pn: PnSection = field(default_factory=PnSection)
    eth: EthSection = field(default_factory=EthSection)
    a: int = None
    b: int = None
    b_table: list = field(default_factory=lambda: [[-1e9, 3], [10.0, 2], [30.0, 1]])
    R_g1_static: int = 79
    cap_R_d: int = 40
    r_overrides: ROverrides = field(default_factory=ROverrides)
    pn_filter: str = "inverse"
    max_iters: int = 20
    dpn_R: int = 1
    dpn_threshold: bool = False
    snapshot_trial: int = 0

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}")
        if self.estimators is None:
            self.estimators = list(DEFAULT_ESTIMATORS[self.experiment])
        bad = [e for e in self.estimators if e not in ESTIMATORS]
        if bad:
            raise ValueError(f"unknown estimators {bad}")
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if not self.snr_grid_db:
            raise ValueError("snr_grid_db must be nonempty")
        if self.experiment == "recovery_vs_g" and not self.g_grid:
            raise ValueError("g_grid must be nonempty for recovery_vs_g")
        if any(g > self.frame.M or g < 1 for g in self.g_grid):
            raise ValueError("every G must lie in [1, M]")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.pn_filter not in ("matched", "inverse"):
            raise ValueError("pn_filter must be 'matched' or 'inverse'")

    def b_for(self, snr_db):
        from ..estimator import b_for_snr
        if self.b is not None:
            return int(self.b)
        return b_for_snr(snr_db, tuple((float(lo), int(v)) for lo, v in self.b_table))

    def to_dict(self):
        return asdict(self)

    def hash(self):
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


_SECTIONS = {"frame": FrameSection, "pn": PnSection, "eth": EthSection,
             "r_overrides": ROverrides}


def _strict(cls, d, where):
    if not isinstance(d, dict):
        raise ValueError(f"{where} must be an object")
    names = {f.name for f in fields(cls)}
    unknown = set(d) - names
    if unknown:
        raise ValueError(f"unknown keys in {where}: {sorted(unknown)}")
    kw = {}
    for k, v in d.items():
        kw[k] = _strict(_SECTIONS[k], v, k) if k in _SECTIONS else v
    return cls(**kw)


def config_from_dict(d, seed=None, trials=None):
    """Build a config; ``SIM_SEED`` in the environment overrides the file's
    seed, and an explicit ``seed`` argument overrides both."""
    d = dict(d)
    if os.environ.get("SIM_SEED"):
        d["seed"] = int(os.environ["SIM_SEED"])
    if seed is not None:
        d["seed"] = int(seed)
    if trials is not None:
        d["trials"] = int(trials)
    return _strict(ExperimentConfig, d, "config")


def load_config(path, seed=None, trials=None):
    with open(path) as fh:
        return config_from_dict(json.load(fh), seed=seed, trials=trials)
