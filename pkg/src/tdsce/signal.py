"""PN training sequence, QPSK mapping and TDS-OFDM symbol assembly."""
from dataclasses import dataclass, field

import numpy as np

# Primitive feedback taps (Fibonacci form, 1-based register positions).
PRIMITIVE_TAPS = {
    2: (2, 1),
    3: (3, 2),
    4: (4, 3),
    5: (5, 3),
    6: (6, 5),
    7: (7, 6),
    8: (8, 6, 5, 4),
    9: (9, 5),
    10: (10, 7),
    11: (11, 9),
    12: (12, 11, 10, 4),
}


@dataclass(frozen=True)
class FrameConfig:
    M: int = 256
    N: int = 2048
    dual_pn: bool = False
    symbols_per_run: int = 1
    modulation: str = "QPSK"

    def __post_init__(self):
        if self.M < 1 or self.N < 1:
            raise ValueError("M and N must be positive")
        if self.symbols_per_run < 1:
            raise ValueError("symbols_per_run must be positive")
        if self.modulation != "QPSK":
            raise ValueError(f"unsupported modulation {self.modulation!r}")

    @property
    def guard_len(self):
        return 2 * self.M if self.dual_pn else self.M

    @property
    def frame_len(self):
        return self.guard_len + self.N

    @property
    def bits_per_symbol(self):
        return 2 * self.N


@dataclass(frozen=True)
class PnSequence:
    values: np.ndarray
    generator_taps: tuple
    seed_state: int
    period: int

    @property
    def M(self):
        return self.values.size


def lfsr_bits(taps, seed_state, length):
    """Output bits of a Fibonacci LFSR.

    The register holds ``max(taps)`` bits; bit ``k-1`` of ``seed_state`` is
    stage ``k``.  The output is the last stage, and the feedback is the XOR
    of the tapped stages.
    """
    degree = max(taps)
    state = [(seed_state >> k) & 1 for k in range(degree)]
    if not any(state):
        raise ValueError("LFSR seed state must be nonzero")
    out = np.empty(length, dtype=np.int8)
    for n in range(length):
        out[n] = state[-1]
        fb = 0
        for t in taps:
            fb ^= state[t - 1]
        state = [fb] + state[:-1]
    return out


def m_sequence(degree, taps=None, seed_state=1):
    """One period (``2**degree - 1`` chips) of a +/-1 maximal-length sequence."""
    taps = tuple(taps) if taps is not None else PRIMITIVE_TAPS[degree]
    bits = lfsr_bits(taps, seed_state, 2 ** degree - 1)
    return 1.0 - 2.0 * bits


def generate_pn(cfg, taps=None, seed_state=1):
    """+/-1 PN training sequence of length ``cfg.M``.

    The smallest degree ``d`` with ``2**d - 1 >= M - 1`` is used and the
    period is cyclically extended (or truncated) to ``M`` chips.
    """
    M = cfg.M if isinstance(cfg, FrameConfig) else int(cfg)
    if M < 2:
        raise ValueError("PN length must be at least 2")
    if taps is None:
        degree = max(2, int(np.ceil(np.log2(M))))
        if 2 ** (degree - 1) - 1 >= M - 1:
            degree -= 1
        degree = max(degree, 2)
        taps = PRIMITIVE_TAPS[degree]
    degree = max(taps)
    period = m_sequence(degree, taps, seed_state)
    values = np.resize(period, M)
    values.setflags(write=False)
    return PnSequence(values=values, generator_taps=tuple(taps), seed_state=seed_state,
                      period=period.size)


_QPSK = np.array([1 + 1j, -1 + 1j, 1 - 1j, -1 - 1j]) / np.sqrt(2)


def qpsk_map(bits):
    """Gray QPSK: bit pair (b0, b1) -> ((1 - 2 b0) + 1j (1 - 2 b1)) / sqrt(2)."""
    bits = np.asarray(bits, dtype=np.int64).ravel()
    if bits.size % 2:
        raise ValueError("bit count must be even")
    if np.any((bits != 0) & (bits != 1)):
        raise ValueError("bits must be 0 or 1")
    b = bits.reshape(-1, 2)
    return _QPSK[b[:, 0] + 2 * b[:, 1]]


def qpsk_demap(symbols):
    """Minimum-distance hard decisions (sign of each quadrature)."""
    s = np.asarray(symbols, dtype=np.complex128).ravel()
    out = np.empty(2 * s.size, dtype=np.int8)
    out[0::2] = s.real < 0
    out[1::2] = s.imag < 0
    return out


@dataclass(frozen=True)
class TdsOfdmSymbol:
    ts: np.ndarray
    data_freq: np.ndarray
    data_time: np.ndarray
    index: int
    dual_pn: bool = False

    def transmit_form(self):
        guard = (self.ts, self.ts) if self.dual_pn else (self.ts,)
        return np.concatenate(guard + (self.data_time,))


def ofdm_modulate(data_freq):
    """Unitary inverse DFT, so unit-energy subcarriers give unit-power samples."""
    X = np.asarray(data_freq, dtype=np.complex128)
    return np.fft.ifft(X, axis=-1) * np.sqrt(X.shape[-1])


def ofdm_demodulate(data_time):
    x = np.asarray(data_time, dtype=np.complex128)
    return np.fft.fft(x, axis=-1) / np.sqrt(x.shape[-1])


def assemble_stream(cfg, payload_bits, pn):
    """Split ``payload_bits`` into ``cfg.symbols_per_run`` QPSK-loaded data
    blocks and prepend the PN guard (doubled for dual-PN framing)."""
    payload_bits = np.asarray(payload_bits).ravel()
    need = cfg.symbols_per_run * cfg.bits_per_symbol
    if payload_bits.size != need:
        raise ValueError(f"payload has {payload_bits.size} bits, frame needs {need}")
    if pn.M != cfg.M:
        raise ValueError("PN length does not match frame M")
    X = qpsk_map(payload_bits).reshape(cfg.symbols_per_run, cfg.N)
    x = ofdm_modulate(X)
    ts = np.asarray(pn.values, dtype=np.complex128)
    return [TdsOfdmSymbol(ts=ts, data_freq=X[i], data_time=x[i], index=i, dual_pn=cfg.dual_pn)
            for i in range(cfg.symbols_per_run)]


def stream_samples(symbols):
    return np.concatenate([s.transmit_form() for s in symbols])


@dataclass
class Transmission:
    """Transmit samples plus the data that produced them (for BER and tests)."""
    cfg: FrameConfig
    pn: PnSequence
    samples: np.ndarray
    bits: np.ndarray
    data_freq: np.ndarray = field(repr=False)

    @property
    def num_symbols(self):
        return self.data_freq.shape[0]


def random_transmission(cfg, pn, rng):
    """Random QPSK payload for ``cfg.symbols_per_run`` symbols.

    Vectorized equivalent of ``assemble_stream`` + ``stream_samples``.
    """
    K = cfg.symbols_per_run
    bits = rng.integers(0, 2, size=K * cfg.bits_per_symbol, dtype=np.int8)
    X = qpsk_map(bits).reshape(K, cfg.N)
    x = ofdm_modulate(X)
    ts = np.asarray(pn.values, dtype=np.complex128)
    guard = np.tile(ts, 2) if cfg.dual_pn else ts
    frames = np.concatenate([np.broadcast_to(guard, (K, guard.size)), x], axis=1)
    return Transmission(cfg=cfg, pn=pn, samples=frames.ravel(), bits=bits, data_freq=X)
