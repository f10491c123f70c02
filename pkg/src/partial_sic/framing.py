"""BPSK mapping, pilot multiplexing and soft symbol estimates."""

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ConfigurationError


def db_to_amplitude(db):
    """Amplitude factor for a power ratio given in dB (3 dB -> 1.41254)."""
    return float(np.sqrt(10.0 ** (db / 10.0)))


def bpsk(bits):
    """Map bit 0 to +1 and bit 1 to -1."""
    return 1.0 - 2.0 * np.asarray(bits, dtype=np.float64)


@dataclass(frozen=True)
class PilotConfig:
    count: int
    boost_db: float = 3.0
    placement: str = "uniform"

    @property
    def amplitude(self):
        return db_to_amplitude(self.boost_db)


def pilot_positions(n_data, pilots):
    """Frame indices of the pilots for a frame of ``n_data + pilots.count``.

    ``uniform`` places pilot k at ``floor((k + 1/2) * X / X_p)``, so
    consecutive pilots are ``floor(X / X_p)`` or one more apart.
    """
    if pilots.count < 0 or n_data < 0:
        raise ConfigurationError("pilot and data counts must be non-negative")
    length = n_data + pilots.count
    if pilots.count == 0:
        return np.zeros(0, dtype=np.int64)
    if pilots.placement == "uniform":
        k = np.arange(pilots.count)
        return ((2 * k + 1) * length // (2 * pilots.count)).astype(np.int64)
    if pilots.placement == "preamble":
        return np.arange(pilots.count, dtype=np.int64)
    raise ConfigurationError(f"unknown pilot placement {pilots.placement!r}")


@dataclass(frozen=True, eq=False)
class FrameLayout:
    """Receiver-known structure of one user's frame.

    ``channel_interleaver`` maps coded-bit order to symbol order: the data
    symbols carry ``coded_bits[channel_interleaver]``.
    """

    pilot_mask: np.ndarray
    pilot_symbols: np.ndarray
    channel_interleaver: np.ndarray
    pilot_boost: float = 1.0

    @property
    def length(self):
        return self.pilot_mask.size

    @property
    def n_pilot(self):
        return int(self.pilot_mask.sum())

    @property
    def n_data(self):
        return self.length - self.n_pilot

    @cached_property
    def data_index(self):
        return np.flatnonzero(~self.pilot_mask)

    @cached_property
    def pilot_index(self):
        return np.flatnonzero(self.pilot_mask)

    def known_symbols(self):
        """Frame-length vector with pilots filled in and zeros elsewhere."""
        out = np.zeros(self.length, dtype=np.complex128)
        out[self.pilot_mask] = self.pilot_symbols
        return out

    def demultiplex(self, values):
        """Data-position entries of a frame-length sequence, in symbol order."""
        return np.asarray(values)[self.data_index]

    def to_coded_order(self, data_values):
        """Undo the channel interleaver on per-data-symbol values."""
        out = np.empty(len(data_values), dtype=np.asarray(data_values).dtype)
        out[self.channel_interleaver] = data_values
        return out

    def to_symbol_order(self, coded_values):
        return np.asarray(coded_values)[self.channel_interleaver]


def make_layout(n_data, pilots, channel_interleaver, rng=None, pilot_symbols=None):
    """Build a :class:`FrameLayout`.

    Pilot values are random BPSK drawn from ``rng`` unless given, scaled by
    the boost amplitude.
    """
    channel_interleaver = np.asarray(channel_interleaver, dtype=np.int64)
    if channel_interleaver.size != n_data:
        raise ConfigurationError(
            f"channel interleaver length {channel_interleaver.size} != {n_data} data symbols"
        )
    positions = pilot_positions(n_data, pilots)
    length = n_data + pilots.count
    if positions.size and (positions.max() >= length or np.unique(positions).size != positions.size):
        raise ConfigurationError("pilot placement exceeds the frame")
    mask = np.zeros(length, dtype=bool)
    mask[positions] = True
    if pilot_symbols is None:
        rng = rng if rng is not None else np.random.default_rng(0)
        pilot_symbols = bpsk(rng.integers(0, 2, pilots.count)) * pilots.amplitude
    pilot_symbols = np.asarray(pilot_symbols, dtype=np.complex128)
    if pilot_symbols.size != pilots.count:
        raise ConfigurationError("pilot symbol count does not match the pilot config")
    return FrameLayout(mask, pilot_symbols, channel_interleaver, pilots.amplitude)


@dataclass(eq=False)
class UserFrame:
    symbols: np.ndarray
    layout: FrameLayout

    @property
    def pilot_mask(self):
        return self.layout.pilot_mask


def modulate_and_frame(coded_bits, layout):
    """Interleave, BPSK-map and multiplex ``coded_bits`` with the pilots."""
    coded_bits = np.asarray(coded_bits)
    if coded_bits.size != layout.n_data:
        raise ConfigurationError(
            f"{coded_bits.size} coded bits do not fill {layout.n_data} data symbols"
        )
    symbols = layout.known_symbols()
    symbols[layout.data_index] = bpsk(layout.to_symbol_order(coded_bits))
    return UserFrame(symbols, layout)


@dataclass(eq=False)
class SoftSymbolEstimate:
    """Per-symbol MMSE estimates ``x_hat`` and second moments ``E|x|^2``."""

    x_hat: np.ndarray
    second_moment: np.ndarray
    pilot_mask: np.ndarray

    @property
    def data_x_hat(self):
        return self.x_hat[~self.pilot_mask]

    def soft_power(self):
        """Mean of ``|x_hat|^2`` over data symbols."""
        d = self.data_x_hat
        return float(np.mean(np.abs(d) ** 2)) if d.size else 0.0


def soft_symbol_estimates(coded_bit_app, layout):
    """Soft BPSK symbols ``tanh(lambda / 2)`` from coded-bit APP LLRs.

    Pilots are returned exactly with their known energy.
    """
    llr = layout.to_symbol_order(np.asarray(coded_bit_app, dtype=np.float64))
    x_hat = layout.known_symbols()
    x_hat[layout.data_index] = np.tanh(llr / 2.0)
    second = np.ones(layout.length)
    second[layout.pilot_mask] = np.abs(layout.pilot_symbols) ** 2
    return SoftSymbolEstimate(x_hat, second, layout.pilot_mask)


def pilot_soft_symbols(layout):
    """Pilot-only estimate: data positions carry zero weight everywhere."""
    x_hat = layout.known_symbols()
    second = np.zeros(layout.length)
    second[layout.pilot_mask] = np.abs(layout.pilot_symbols) ** 2
    return SoftSymbolEstimate(x_hat, second, layout.pilot_mask)


def hard_decisions(x_hat):
    """Nearest BPSK point; ties (0) go to +1."""
    return np.where(np.real(x_hat) >= 0, 1.0, -1.0)
