"""Clustered-multipath MIMO-OFDM channel simulator.

Generates time-correlated channel sequences from a seeded stochastic
geometry: P discrete paths, each with a complex gain, a delay (frequency
selectivity), departure/arrival angles (spatial structure at the uniform
linear arrays) and a Doppler shift (temporal evolution). Everything is a
pure function of (config, speed, seed), so sequences are bit-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from csipred import _kernels

SPEED_OF_LIGHT = 299792458.0


@dataclass(frozen=True)
class SimConfig:
    """Simulator parameters. Defaults follow a 32x4 downlink with 52 resource
    blocks at 2.1 GHz / 20 MHz and 5 ms channel sampling."""

    n_tx: int = 32
    n_rx: int = 4
    n_subbands: int = 52
    carrier_freq: float = 2.1e9
    bandwidth: float = 20e6
    sample_period: float = 5e-3
    n_paths: int = 16
    rician_k: float = 0.0
    antenna_spacing: float = 0.5
    seed: int = 0
    mean_delay: float = 100e-9
    max_delay: float = 1e-6

    def __post_init__(self):
        if self.n_tx < 1 or self.n_rx < 1 or self.n_subbands < 1:
            raise ValueError("antenna and subband counts must be >= 1")
        if self.sample_period <= 0:
            raise ValueError("sample_period must be positive")
        if self.n_paths < 1:
            raise ValueError("n_paths must be >= 1")
        if self.rician_k < 0:
            raise ValueError("rician_k must be >= 0")
        if self.mean_delay <= 0 or self.max_delay <= 0:
            raise ValueError("delay scales must be positive")

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_freq

    @property
    def subband_freqs(self) -> np.ndarray:
        """Center frequency of each sub-band, evenly spaced across the band."""
        delta = self.bandwidth / self.n_subbands
        k = np.arange(self.n_subbands)
        return self.carrier_freq - self.bandwidth / 2 + delta * (k + 0.5)

    def with_seed(self, seed: int) -> "SimConfig":
        return replace(self, seed=seed)


@dataclass(frozen=True)
class Scenario:
    """One realization of the path geometry plus the mobility-derived Doppler."""

    gains: np.ndarray          # (P,) complex, sum |gain|^2 == 1
    delays: np.ndarray         # (P,) seconds
    aod: np.ndarray            # (P,) radians, departure angles
    aoa: np.ndarray            # (P,) radians, arrival angles
    doppler_angles: np.ndarray  # (P,) radians
    max_doppler: float         # Hz

    @property
    def n_paths(self) -> int:
        return self.gains.shape[0]

    @property
    def dopplers(self) -> np.ndarray:
        """Per-path Doppler shift in Hz."""
        return self.max_doppler * np.cos(self.doppler_angles)


def make_scenario(config: SimConfig, speed: float) -> Scenario:
    """Draw a path geometry deterministically from config.seed.

    Path gains are complex Gaussian, explicitly normalized so the realized
    total power is exactly 1. With rician_k > 0, path 0 becomes a
    fixed-phase dominant path holding rician_k/(rician_k+1) of the power.
    Delays follow a truncated exponential (mean config.mean_delay, capped
    at config.max_delay); all angles are uniform on [-pi, pi).
    """
    if speed < 0:
        raise ValueError("speed must be >= 0 km/h")
    p = config.n_paths
    rng = np.random.default_rng(config.seed)

    gains = (rng.standard_normal(p) + 1j * rng.standard_normal(p)) / np.sqrt(2)
    if config.rician_k > 0:
        los_power = config.rician_k / (config.rician_k + 1.0)
        diffuse = gains[1:]
        if diffuse.size:
            total = np.sum(np.abs(diffuse) ** 2)
            diffuse = diffuse * np.sqrt((1.0 - los_power) / total)
        gains = np.concatenate(([np.sqrt(los_power) + 0j], diffuse))
    else:
        gains = gains / np.sqrt(np.sum(np.abs(gains) ** 2))

    # Inverse-CDF sampling of the truncated exponential keeps the draw
    # count independent of the truncation point.
    u = rng.uniform(size=p)
    cap = 1.0 - np.exp(-config.max_delay / config.mean_delay)
    delays = -config.mean_delay * np.log1p(-u * cap)

    aod = rng.uniform(-np.pi, np.pi, size=p)
    aoa = rng.uniform(-np.pi, np.pi, size=p)
    doppler_angles = rng.uniform(-np.pi, np.pi, size=p)

    max_doppler = (speed / 3.6) / config.wavelength
    return Scenario(gains, delays, aod, aoa, doppler_angles, max_doppler)


def array_response(angle: float, n: int, spacing: float) -> np.ndarray:
    """Steering vector of an n-element uniform linear array.

    Element m is exp(j 2 pi spacing m sin(angle)); all entries unit modulus.
    """
    if n < 1:
        raise ValueError("array size must be >= 1")
    m = np.arange(n)
    return np.exp(2j * np.pi * spacing * m * np.sin(angle))


def _steering_matrices(scenario: Scenario, config: SimConfig):
    a_rx = np.stack([array_response(phi, config.n_rx, config.antenna_spacing)
                     for phi in scenario.aoa])
    a_tx = np.stack([array_response(theta, config.n_tx, config.antenna_spacing)
                     for theta in scenario.aod])
    return a_rx, a_tx


def _delay_phase(scenario: Scenario, config: SimConfig) -> np.ndarray:
    # (K, P): exp(-j 2 pi f_k tau_p)
    return np.exp(-2j * np.pi * np.outer(config.subband_freqs, scenario.delays))


def channel_at(scenario: Scenario, config: SimConfig, t: float) -> np.ndarray:
    """Channel tensor (K, Nr, Nt) at time t seconds.

    H_k(t) = sum_p gain_p exp(j 2 pi nu_p t) exp(-j 2 pi f_k tau_p)
             a_rx(aoa_p) a_tx(aod_p)^H
    """
    return synthesize_tensors(scenario, config, np.asarray([float(t)]))[0]


def synthesize_tensors(scenario: Scenario, config: SimConfig,
                       times: np.ndarray) -> np.ndarray:
    """Channel tensors (T, K, Nr, Nt) at the given times, via the active kernel."""
    a_rx, a_tx = _steering_matrices(scenario, config)
    return _kernels.synthesize(
        np.ascontiguousarray(times, dtype=np.float64),
        np.ascontiguousarray(scenario.gains, dtype=np.complex128),
        np.ascontiguousarray(scenario.dopplers, dtype=np.float64),
        np.ascontiguousarray(_delay_phase(scenario, config)),
        np.ascontiguousarray(a_rx),
        np.ascontiguousarray(a_tx),
    )


@dataclass
class ChannelSequence:
    """Time-ordered channel tensors with uniform spacing.

    norm_power is 1.0 until the sequence has been normalized (see the
    dataset module), after which it records the power that was divided out.
    """

    tensors: np.ndarray      # (Q, K, Nr, Nt) complex
    speed: float             # km/h
    sample_period: float     # seconds
    config: SimConfig
    norm_power: float = 1.0

    def __len__(self) -> int:
        return self.tensors.shape[0]

    @property
    def shape(self) -> tuple:
        """(K, Nr, Nt) of each tensor."""
        return self.tensors.shape[1:]

    @property
    def timestamps(self) -> np.ndarray:
        return np.arange(len(self)) * self.sample_period


def generate_sequence(config: SimConfig, speed: float, q: int) -> ChannelSequence:
    """Generate q channel tensors at times 0, T_s, 2 T_s, ..."""
    if q < 2:
        raise ValueError("sequence length must be >= 2")
    scenario = make_scenario(config, speed)
    times = np.arange(q) * config.sample_period
    tensors = synthesize_tensors(scenario, config, times)
    return ChannelSequence(tensors, speed, config.sample_period, config)


def kernel_backend() -> str:
    """Name of the synthesis kernel selected at import ("cython" or "numpy")."""
    return _kernels.BACKEND
