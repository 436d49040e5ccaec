"""Sparse doubly-selective multipath channels for TDS-OFDM streams.

Profiles are tap tables shipped as JSON under ``tdsce/data/profiles``.  A
profile is quantized to the sample grid, gains are drawn per symbol (fixed
random phases for static channels, sum-of-sinusoids Rayleigh fading for
mobile ones) and the transmit stream is convolved with a time-varying
tapped delay line so that inter-block interference is physical.
"""
import json
import math
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from . import _kernels

C_LIGHT = 299_792_458.0
DEFAULT_OSCILLATORS = 16


@dataclass(frozen=True)
class ChannelProfile:
    name: str
    delays_us: tuple
    powers_db: tuple
    doppler: dict
    fc_hz: float = 643e6
    fs_hz: float = 7.56e6
    source: str = ""

    def __post_init__(self):
        if len(self.delays_us) != len(self.powers_db):
            raise ValueError("delays_us and powers_db differ in length")
        if any(d < 0 for d in self.delays_us):
            raise ValueError("delays must be nonnegative")
        kind = self.doppler.get("type")
        if kind not in ("static", "jakes"):
            raise ValueError(f"unknown doppler type {kind!r}")

    @property
    def is_static(self):
        return self.doppler["type"] == "static"

    @property
    def speed_mps(self):
        return 0.0 if self.is_static else float(self.doppler["v_mps"])

    @classmethod
    def from_dict(cls, d):
        allowed = {"name", "delays_us", "powers_db", "doppler", "fc_hz", "fs_hz", "source"}
        unknown = set(d) - allowed
        if unknown:
            raise ValueError(f"unknown profile keys: {sorted(unknown)}")
        return cls(name=d["name"], delays_us=tuple(float(x) for x in d["delays_us"]),
                   powers_db=tuple(float(x) for x in d["powers_db"]), doppler=dict(d["doppler"]),
                   fc_hz=float(d.get("fc_hz", 643e6)), fs_hz=float(d.get("fs_hz", 7.56e6)),
                   source=d.get("source", ""))


def _profile_dir():
    return resources.files("tdsce") / "data" / "profiles"


def list_profiles():
    return sorted(p.name[:-5] for p in _profile_dir().iterdir() if p.name.endswith(".json"))


def load_profile(name):
    path = _profile_dir() / f"{name}.json"
    if not path.is_file():
        raise KeyError(f"unknown channel profile {name!r}; known: {list_profiles()}")
    return ChannelProfile.from_dict(json.loads(path.read_text()))


@dataclass(frozen=True)
class TapTemplate:
    """Sample-grid tap delays with normalized linear mean powers."""
    delays: np.ndarray
    powers: np.ndarray

    @property
    def L(self):
        return int(self.delays[-1]) + 1

    @property
    def P(self):
        return self.delays.size


def quantize_profile(p):
    """Round delays to the nearest sample, power-merge collisions and
    renormalize the total power to one."""
    if p.fs_hz <= 0:
        raise ValueError("fs_hz must be positive")
    if len(p.delays_us) == 0:
        raise ValueError("empty profile")
    taps = np.rint(np.asarray(p.delays_us) * p.fs_hz * 1e-6).astype(np.int64)
    lin = 10.0 ** (np.asarray(p.powers_db) / 10.0)
    delays = np.unique(taps)
    powers = np.array([lin[taps == d].sum() for d in delays])
    return TapTemplate(delays=delays, powers=powers / powers.sum())


@dataclass(frozen=True)
class CoherenceParams:
    R_d: int
    R_g1: int
    R_g2: int
    f_d_hz: float = 0.0
    overridden: bool = False

    def __post_init__(self):
        if min(self.R_d, self.R_g1, self.R_g2) < 1:
            raise ValueError("R_d, R_g1 and R_g2 must be at least 1")
        if self.R_g1 > 2 * self.R_d - 1:
            raise ValueError("R_g1 cannot exceed the 2*R_d - 1 symbol delay horizon")

    @property
    def is_static(self):
        return self.f_d_hz == 0.0

    def with_overrides(self, R_d=None, R_g1=None, R_g2=None):
        """Copy with any of the horizons replaced; marks the result as overridden."""
        if R_d is None and R_g1 is None and R_g2 is None:
            return self
        return CoherenceParams(R_d=self.R_d if R_d is None else int(R_d),
                               R_g1=self.R_g1 if R_g1 is None else int(R_g1),
                               R_g2=self.R_g2 if R_g2 is None else int(R_g2),
                               f_d_hz=self.f_d_hz, overridden=True)


def doppler_hz(p):
    return p.speed_mps * p.fc_hz / C_LIGHT


def coherence_params(p, M, N, cap_R_d=40, R_g1_static=79):
    """Symbol horizons over which delays are stable (``R_d``), gains are
    strongly correlated (``R_g1``) and the channel is quasi-static (``R_g2``).

    Static channels take ``R_g1`` from configuration and tie the other two
    to it through ``2 R_d - 1 = 2 R_g2 - 1 = R_g1`` (``R_g1`` must be odd).
    """
    if p.is_static:
        if R_g1_static < 1 or R_g1_static % 2 == 0:
            raise ValueError("static R_g1 must be a positive odd integer")
        R = (R_g1_static + 1) // 2
        return CoherenceParams(R_d=R, R_g1=R_g1_static, R_g2=R, f_d_hz=0.0)
    v = p.speed_mps
    if v <= 0:
        raise ValueError("use static")
    Ts = 1.0 / p.fs_hz
    horizon = C_LIGHT / (2.0 * v * (M + N))
    R_g1 = max(1, math.floor(horizon / (p.fc_hz * Ts)))
    R_d = max(1, min(cap_R_d, math.floor(horizon / (p.fs_hz * Ts))))
    R_g1 = min(R_g1, 2 * R_d - 1)
    return CoherenceParams(R_d=R_d, R_g1=R_g1, R_g2=1, f_d_hz=v * p.fc_hz / C_LIGHT)


@dataclass
class SparseCir:
    delays: np.ndarray
    gains: np.ndarray
    symbol_index: int = 0

    def __post_init__(self):
        self.delays = np.asarray(self.delays, dtype=np.int64)
        self.gains = np.asarray(self.gains, dtype=np.complex128)
        if self.delays.shape != self.gains.shape:
            raise ValueError("delays and gains differ in length")
        if np.unique(self.delays).size != self.delays.size or np.any(self.delays < 0):
            raise ValueError("delays must be unique and nonnegative")

    @property
    def L(self):
        return int(self.delays.max()) + 1 if self.delays.size else 0

    def dense(self, length=None):
        length = self.L if length is None else length
        h = np.zeros(length, dtype=np.complex128)
        h[self.delays] = self.gains
        return h


class FadingProcess:
    """Per-tap complex gains as a function of the symbol index.

    Static profiles: ``sqrt(power) * exp(j phi)`` with one random phase per
    tap.  Mobile profiles: independent sum-of-sinusoids Rayleigh processes
    with a classic Doppler spectrum at ``f_d``, sampled at symbol starts and
    held constant over each symbol.
    """

    def __init__(self, template, f_d_hz, symbol_period_s, rng, n_osc=DEFAULT_OSCILLATORS):
        if n_osc < 16:
            raise ValueError("at least 16 oscillators per tap are required")
        self.template = template
        self.f_d_hz = float(f_d_hz)
        self.symbol_period_s = float(symbol_period_s)
        P = template.P
        self._amp = np.sqrt(template.powers)
        if self.f_d_hz == 0.0:
            self._static = self._amp * np.exp(2j * np.pi * rng.random(P))
            return
        self._static = None
        n = np.arange(1, n_osc + 1)
        theta = rng.uniform(-np.pi, np.pi, size=(P, 1))
        self._alpha = (2 * np.pi * n[None, :] - np.pi + theta) / (4 * n_osc)
        self._phi_c = rng.uniform(-np.pi, np.pi, size=(P, n_osc))
        self._phi_s = rng.uniform(-np.pi, np.pi, size=(P, n_osc))

    def gains(self, symbol_indices, symbol_period_s=None):
        """``(len(symbol_indices), P)`` gains; ``symbol_period_s`` overrides
        the period (e.g. to sample the same process on a dual-PN frame grid)."""
        k = np.atleast_1d(np.asarray(symbol_indices, dtype=np.float64))
        if self._static is not None:
            return np.broadcast_to(self._static, (k.size, self.template.P)).copy()
        T = self.symbol_period_s if symbol_period_s is None else float(symbol_period_s)
        g = _kernels.sos_fading(k * T, self.f_d_hz, self._alpha, self._phi_c, self._phi_s)
        return g * self._amp[None, :]

    def cir(self, symbol_index, symbol_period_s=None):
        g = self.gains([symbol_index], symbol_period_s)[0]
        return SparseCir(self.template.delays, g, int(symbol_index))

    def cirs(self, num_symbols, symbol_period_s=None):
        g = self.gains(np.arange(num_symbols), symbol_period_s)
        return [SparseCir(self.template.delays, g[k], k) for k in range(num_symbols)]


def evolve_gains(template, params, symbol_index, rng_stream, symbol_period_s=2304 / 7.56e6):
    """CIR of one symbol drawn from the fading process seeded by ``rng_stream``.

    ``rng_stream`` is anything :func:`numpy.random.default_rng` accepts; the
    same seed always yields the same trajectory, so per-symbol calls with one
    seed sample a single consistent process.
    """
    if template.P == 0:
        raise ValueError("empty template")
    rng = np.random.default_rng(rng_stream)
    proc = FadingProcess(template, params.f_d_hz, symbol_period_s, rng)
    return proc.cir(symbol_index)


@dataclass
class ReceivedStream:
    """Received samples with per-frame window accessors.

    Frame ``k`` starts at ``k * frame_len``.  The "TS window" is the last
    PN of the guard (the second PN under dual-PN framing); the "tail" is
    what follows it, overlapping the data block.
    """
    samples: np.ndarray
    M: int
    N: int
    dual_pn: bool = False
    num_frames: int = 0
    noise_var: float = 0.0
    clean: np.ndarray = field(default=None, repr=False)

    @property
    def guard_len(self):
        return 2 * self.M if self.dual_pn else self.M

    @property
    def frame_len(self):
        return self.guard_len + self.N

    def _slice(self, start, length):
        if start < 0 or start + length > self.samples.size:
            raise IndexError("stream too short")
        return self.samples[start:start + length]

    def guard_end(self, k):
        return k * self.frame_len + self.guard_len

    def ts_window(self, k):
        return self._slice(self.guard_end(k) - self.M, self.M)

    def tail_window(self, k, length=None):
        return self._slice(self.guard_end(k), self.M if length is None else length)

    def ibi_free(self, k, G):
        if not 1 <= G <= self.M:
            raise ValueError(f"G={G} outside [1, {self.M}]")
        return self._slice(self.guard_end(k) - G, G)

    def data_window(self, k):
        return self._slice(self.guard_end(k), self.N)

    def first_pn_window(self, k):
        if not self.dual_pn:
            raise ValueError("stream is not dual-PN framed")
        return self._slice(k * self.frame_len, self.M)


def channel_gain_matrix(cirs):
    """Stack per-frame gains into a ``(frames, taps)`` array; all CIRs must
    share one delay set."""
    delays = cirs[0].delays
    for c in cirs[1:]:
        if not np.array_equal(c.delays, delays):
            raise ValueError("per-frame CIRs must share delays")
    return delays, np.stack([c.gains for c in cirs])


def convolve(samples, cirs, frame_len):
    """Noiseless time-varying convolution; output sample ``n`` uses the CIR
    of frame ``n // frame_len`` (the last CIR past the end)."""
    delays, gains = channel_gain_matrix(cirs)
    return _kernels.sparse_channel(samples, delays, gains, frame_len)


def noise_variance(clean, snr_db):
    if np.isinf(snr_db) and snr_db > 0:
        return 0.0
    p = float(np.mean(np.abs(clean) ** 2))
    return p / 10.0 ** (snr_db / 10.0)


def unit_noise(n, rng):
    """Circular complex Gaussian noise with unit variance per sample."""
    return (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / np.sqrt(2.0)


def propagate(tx, cirs, M, N, dual_pn=False):
    """Noiseless received samples for ``len(cirs)`` frames of ``tx``."""
    frame_len = (2 * M if dual_pn else M) + N
    if len(cirs) * frame_len != len(tx):
        raise ValueError("one CIR per frame is required")
    if max(c.L for c in cirs) > M:
        raise ValueError("guard violated")
    return convolve(tx, cirs, frame_len)


def add_awgn(clean, snr_db, noise, M, N, dual_pn=False, num_frames=0):
    """Scale a unit-variance ``noise`` realization to ``snr_db`` and add it.

    Reusing one realization across SNR points gives common random numbers
    along an SNR sweep.
    """
    var = noise_variance(clean, snr_db)
    if var > 0:
        if noise.size < clean.size:
            raise ValueError("noise realization too short")
        rx = clean + np.sqrt(var) * noise[:clean.size]
    else:
        rx = clean.copy()
    return ReceivedStream(samples=rx, M=M, N=N, dual_pn=dual_pn, num_frames=num_frames,
                          noise_var=var, clean=clean)


def transmit(tx, cirs, snr_db, rng_stream, M, N, dual_pn=False, noise=None):
    """Send ``tx`` (``len(cirs)`` frames) through the channel and add AWGN.

    The noise variance is the mean received power divided by the linear
    SNR.  ``noise`` may supply a unit-variance realization; otherwise one is
    drawn from ``rng_stream``.
    """
    clean = propagate(tx, cirs, M, N, dual_pn)
    if noise is None:
        noise = unit_noise(clean.size, np.random.default_rng(rng_stream))
    return add_awgn(clean, snr_db, noise, M, N, dual_pn, len(cirs))
