"""AWGN link model for digital (bit) and analog (symbol) feature transport."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

from .core import FeatureTensor, RngStream
from .errors import DomainError, InvalidConfigError, PayloadSizeError

DEFAULT_RATE_BPS = 1e6
ANALOG_BITS_PER_SYMBOL = 16

# Above this flip fraction, drawing one uniform per bit is cheaper than sampling positions.
_SPARSE_FLIP_LIMIT = 1.0 / 64
_CHUNK_BITS = 1 << 22


class LinkKind(str, enum.Enum):
    UL = "UL"
    DL = "DL"
    D2D = "D2D"


class DigitalMode(str, enum.Enum):
    BER = "ber"
    BPSK = "bpsk"


@dataclass(frozen=True)
class ChannelSpec:
    """One AWGN link. ``snr_db=inf`` models an ideal noiseless link."""

    snr_db: float
    rate_bps: float = DEFAULT_RATE_BPS
    kind: LinkKind = LinkKind.DL

    def __post_init__(self):
        object.__setattr__(self, "snr_db", float(self.snr_db))
        object.__setattr__(self, "rate_bps", float(self.rate_bps))
        object.__setattr__(self, "kind", LinkKind(self.kind))
        if math.isnan(self.snr_db) or self.snr_db == -math.inf:
            raise InvalidConfigError(f"snr_db must be a number or +inf, got {self.snr_db}", "snr_db")
        if not (self.rate_bps > 0 and math.isfinite(self.rate_bps)):
            raise InvalidConfigError(f"rate_bps must be positive, got {self.rate_bps}", "rate_bps")

    @property
    def snr_linear(self) -> float:
        return snr_db_to_linear(self.snr_db)

    def with_snr(self, snr_db: float) -> "ChannelSpec":
        return ChannelSpec(snr_db, self.rate_bps, self.kind)


@dataclass(frozen=True, eq=False)
class BitPayload:
    """Packed bits, most significant bit first within each byte."""

    bits: np.ndarray
    length_bits: int

    def __post_init__(self):
        bits = np.ascontiguousarray(self.bits, dtype=np.uint8).reshape(-1)
        n = int(self.length_bits)
        if n < 0 or bits.size != (n + 7) // 8:
            raise PayloadSizeError(f"{bits.size} bytes cannot hold exactly {n} bits")
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)
        object.__setattr__(self, "length_bits", n)

    @classmethod
    def from_bits(cls, bits) -> "BitPayload":
        bits = np.asarray(bits, dtype=np.uint8).reshape(-1)
        return cls(np.packbits(bits), bits.size)

    @classmethod
    def empty(cls) -> "BitPayload":
        return cls(np.zeros(0, np.uint8), 0)

    def unpack(self) -> np.ndarray:
        return np.unpackbits(self.bits, count=self.length_bits)

    def __eq__(self, other):
        if not isinstance(other, BitPayload):
            return NotImplemented
        return self.length_bits == other.length_bits and np.array_equal(self.bits, other.bits)

    __hash__ = None


def snr_db_to_linear(snr_db: float) -> float:
    return 10.0 ** (snr_db / 10.0)


def ber_bpsk(snr_linear: float) -> float:
    """Q(sqrt(2*snr)) for BPSK with per-bit SNR ``snr_linear``."""
    if not snr_linear > 0:
        raise DomainError(f"SNR must be positive, got {snr_linear}")
    if math.isinf(snr_linear):
        return 0.0
    return float(0.5 * erfc(math.sqrt(snr_linear)))


def _flip_mask_sparse(n: int, k: int, rng: np.random.Generator) -> np.ndarray:
    mask = np.zeros((n + 7) // 8, np.uint8)
    if k:
        pos = rng.choice(n, size=k, replace=False)
        np.bitwise_xor.at(mask, pos >> 3, (0x80 >> (pos & 7)).astype(np.uint8))
    return mask


def _flip_mask_dense(n: int, p: float, rng: np.random.Generator) -> np.ndarray:
    out = np.empty((n + 7) // 8, np.uint8)
    threshold = np.float32(p)
    for start in range(0, n, _CHUNK_BITS):
        stop = min(n, start + _CHUNK_BITS)
        flips = rng.random(stop - start, dtype=np.float32) < threshold
        out[start // 8:(stop + 7) // 8] = np.packbits(flips)
    return out


def transmit_bits(payload: BitPayload, ch: ChannelSpec, stream: RngStream,
                  mode: DigitalMode | str = DigitalMode.BER) -> BitPayload:
    """Pass bits through the link; each bit flips independently with the BPSK error rate.

    ``mode="ber"`` draws the flip pattern directly from the analytic error
    probability.  ``mode="bpsk"`` modulates every bit, adds Gaussian noise and
    slices, which is slower but validates the first mode.
    """
    n = payload.length_bits
    snr = ch.snr_linear
    if not snr > 0:
        raise DomainError(f"SNR must be positive, got {snr}")
    if n == 0 or math.isinf(snr):
        return BitPayload(payload.bits.copy(), n)
    rng = stream.generator()
    if DigitalMode(mode) is DigitalMode.BPSK:
        bits = payload.unpack()
        symbols = 1.0 - 2.0 * bits
        received = symbols + rng.standard_normal(n) * math.sqrt(1.0 / (2.0 * snr))
        return BitPayload.from_bits((received < 0).astype(np.uint8))
    p = ber_bpsk(snr)
    if p < _SPARSE_FLIP_LIMIT:
        mask = _flip_mask_sparse(n, int(rng.binomial(n, p)), rng)
    else:
        mask = _flip_mask_dense(n, p, rng)
    return BitPayload(payload.bits ^ mask, n)


def transmit_analog(symbols: FeatureTensor, ch: ChannelSpec, stream: RngStream) -> FeatureTensor:
    """Add white Gaussian noise of variance ``1/snr`` to unit-power symbols."""
    snr = ch.snr_linear
    if not snr > 0:
        raise DomainError(f"SNR must be positive, got {snr}")
    if symbols.size == 0 or math.isinf(snr):
        return symbols.with_values(symbols.values.copy())
    noise = stream.generator().standard_normal(symbols.size) * math.sqrt(1.0 / snr)
    return symbols.with_values(symbols.values + noise)


def tx_latency(length_bits: int, ch: ChannelSpec) -> float:
    """Airtime in seconds for ``length_bits`` of goodput on ``ch``."""
    return length_bits / ch.rate_bps


def analog_airtime_bits(n_symbols: int, bits_per_symbol: int = ANALOG_BITS_PER_SYMBOL) -> int:
    """Bit-equivalent airtime of ``n_symbols`` analog channel uses."""
    return n_symbols * bits_per_symbol
