"""Stochastic UAV power model and the per-leg state-of-charge distributions it induces.

Power is a polynomial in airspeed and take-off weight.  Airspeed is the
ground speed plus the along-track wind component, where wind speed is
Weibull distributed and wind heading uniform.  Weight is normal.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class PowerCoefficients:
    b0: float = -88.77
    b1: float = 3.53
    b2: float = -0.42
    b3: float = 0.043
    b4: float = 107.5
    b5: float = -2.74

    def as_tuple(self):
        return (self.b0, self.b1, self.b2, self.b3, self.b4, self.b5)


@dataclass(frozen=True)
class StochasticParams:
    """Disturbance model: weight ~ N(mean, std), wind ~ Weibull(scale, shape), heading ~ U[0, 360)."""

    weight_mean: float = 2.3
    weight_std: float = 0.05
    wind_scale: float = 1.5
    wind_shape: float = 3.0

    def __post_init__(self):
        if self.weight_std < 0:
            raise ValueError("weight_std must be >= 0")
        # wind_scale == 0 is accepted as the calm-air limit
        if self.wind_scale < 0 or self.wind_shape <= 0:
            raise ValueError("Weibull scale must be >= 0 and shape > 0")

    @classmethod
    def degenerate(cls, weight: float = 2.3) -> "StochasticParams":
        """Point-mass disturbances: fixed weight, no wind."""
        return cls(weight_mean=weight, weight_std=0.0, wind_scale=0.0, wind_shape=3.0)


@dataclass(frozen=True)
class BatterySpec:
    """Battery capacity in joules and the number of SOC bins covering 0..100 %."""

    capacity: float = 240_000.0
    bins: int = 101

    def __post_init__(self):
        if self.capacity <= 0:
            raise ValueError("battery capacity must be positive")
        if int(self.bins) != self.bins or self.bins < 2:
            raise ValueError("battery needs at least 2 SOC bins")

    @property
    def top(self) -> int:
        return self.bins - 1

    @property
    def bin_energy(self) -> float:
        """Joules represented by one bin."""
        return self.capacity / (self.bins - 1)

    def charge(self, soc_bin: int) -> float:
        """Charge credited to a bin (its lower edge, so binning never overstates charge)."""
        return soc_bin * self.bin_energy

    def bin_of(self, joules: float) -> int:
        return min(self.top, int(math.floor(joules / self.bin_energy + 1e-12)))


@dataclass
class SocDistribution:
    """End-of-leg SOC: sparse bin masses plus the probability of running dry."""

    masses: dict = field(default_factory=dict)
    failure: float = 0.0

    def total(self) -> float:
        return sum(self.masses.values()) + self.failure


def power(v_inf, w, c: PowerCoefficients = PowerCoefficients()):
    """Electrical power in watts at airspeed ``v_inf`` (m/s) and weight ``w`` (kg).

    Negative values of the fitted cubic are clamped to zero.
    Works elementwise on arrays.
    """
    v = np.asarray(v_inf, dtype=float)
    w = np.asarray(w, dtype=float)
    p = c.b0 + c.b1 * v + c.b2 * v ** 2 + c.b3 * v ** 3 + c.b4 * w + c.b5 * v * w
    p = np.maximum(p, 0.0)
    return float(p) if p.ndim == 0 else p


def airspeed(v_ground, wind_speed, wind_heading_deg):
    """Longitudinal airspeed: ``|v_ground + cos(-psi) * wind_speed|`` with psi in degrees."""
    psi = np.deg2rad(np.asarray(wind_heading_deg, dtype=float))
    out = np.abs(np.asarray(v_ground, dtype=float) + np.cos(-psi) * np.asarray(wind_speed, dtype=float))
    return float(out) if out.ndim == 0 else out


def draw_disturbances(params: StochasticParams, rng: np.random.Generator, size=None):
    """One (weight, wind speed, wind heading) triple per leg, or arrays of them."""
    weight = rng.normal(params.weight_mean, params.weight_std, size)
    wind = params.wind_scale * rng.weibull(params.wind_shape, size)
    heading = rng.uniform(0.0, 360.0, size)
    return weight, wind, heading


def power_samples(v: float, params: StochasticParams, c: PowerCoefficients, n: int,
                  rng: np.random.Generator):
    """``n`` independent power draws for flight at ground speed ``v``.

    Returns ``(watts, clamped)`` where ``clamped`` counts draws hitting the zero floor.
    """
    weight, wind, heading = draw_disturbances(params, rng, n)
    v_inf = airspeed(v, wind, heading)
    raw = (c.b0 + c.b1 * v_inf + c.b2 * v_inf ** 2 + c.b3 * v_inf ** 3
           + c.b4 * weight + c.b5 * v_inf * weight)
    clamped = int(np.count_nonzero(raw < 0))
    return np.maximum(raw, 0.0), clamped


def leg_energy_sample(length: float, v: float, params: StochasticParams,
                      c: PowerCoefficients, rng: np.random.Generator) -> float:
    """Energy in joules for one leg of ``length`` meters flown at ground speed ``v``.

    Disturbances are drawn once and held for the whole leg.
    """
    if length < 0 or v <= 0:
        raise ValueError("leg length must be >= 0 and speed > 0")
    weight, wind, heading = draw_disturbances(params, rng)
    return power(airspeed(v, wind, heading), weight, c) * (length / v)


def bins_consumed(energy, battery: BatterySpec):
    """Whole bins a draw eats: ``ceil(e / bin_energy)``.

    Landing in bin ``b - k`` from bin ``b`` is the same as flooring the
    continuous end charge, and ``k > b`` exactly when the draw exceeds the
    charge held in bin ``b``.
    """
    ratio = np.asarray(energy, dtype=float) / battery.bin_energy
    return np.ceil(ratio).astype(np.int64)


@dataclass(frozen=True)
class ConsumptionHistogram:
    """Distribution of bins consumed by one leg: sorted ``(k, probability)`` support."""

    k: np.ndarray
    prob: np.ndarray

    @classmethod
    def from_energy(cls, energy, battery: BatterySpec) -> "ConsumptionHistogram":
        k, counts = np.unique(bins_consumed(energy, battery), return_counts=True)
        return cls(k, counts / counts.sum())

    def from_bin(self, start_bin: int):
        """Return ``(end_bins, probs, failure)`` when starting the leg in ``start_bin``."""
        ok = self.k <= start_bin
        end = start_bin - self.k[ok]
        p = self.prob[ok]
        failure = float(self.prob[~ok].sum())
        return end, p, failure

    def failure_from(self, start_bin: int) -> float:
        return float(self.prob[self.k > start_bin].sum())

    def success_from(self, start_bin: int) -> float:
        # summed directly rather than as 1 - failure, so an all-failing leg gives exactly 0
        return float(self.prob[self.k <= start_bin].sum())


def leg_soc_distribution(length: float, v: float, start_bin: int, battery: BatterySpec,
                         params: StochasticParams, c: PowerCoefficients,
                         n_samples: int = 10_000, seed: int = 0) -> SocDistribution:
    """Empirical end-SOC distribution of a leg from ``n_samples`` seeded energy draws."""
    if n_samples < 1:
        raise ValueError("need at least one sample")
    if not 0 <= start_bin <= battery.top:
        raise ValueError(f"start bin {start_bin} outside 0..{battery.top}")
    rng = np.random.default_rng(seed)
    watts, _ = power_samples(v, params, c, n_samples, rng)
    hist = ConsumptionHistogram.from_energy(watts * (length / v), battery)
    end, p, failure = hist.from_bin(start_bin)
    return SocDistribution({int(b): float(q) for b, q in zip(end, p)}, failure)


def stream_seed(master: int, *key) -> int:
    """Stable 64-bit seed for a named sub-stream of ``master``."""
    text = repr((int(master),) + tuple(key)).encode()
    return int.from_bytes(hashlib.blake2b(text, digest_size=8).digest(), "little")


class PowerBank:
    """Seeded power draws per flight speed, shared by every leg flown at that speed.

    A leg of length ``l`` at speed ``v`` takes ``P * l / v`` joules, so one
    bank of power draws per speed yields every leg's energy distribution.
    Sharing draws across legs and start bins (common random numbers) keeps
    one-step failure mass monotone in SOC and makes model builds cheap.
    """

    def __init__(self, params: StochasticParams, coeffs: PowerCoefficients, battery: BatterySpec,
                 n_samples: int, seed: int):
        self.params = params
        self.coeffs = coeffs
        self.battery = battery
        self.n_samples = int(n_samples)
        self.seed = int(seed)
        self.clamped = 0
        self._watts = {}
        self._hist = {}

    def watts(self, v: float) -> np.ndarray:
        key = round(float(v), 9)
        if key not in self._watts:
            rng = np.random.default_rng(stream_seed(self.seed, "power", key))
            w, clamped = power_samples(float(v), self.params, self.coeffs, self.n_samples, rng)
            self.clamped += clamped
            self._watts[key] = w
        return self._watts[key]

    def histogram(self, length: float, v: float) -> ConsumptionHistogram:
        key = (round(float(length), 6), round(float(v), 9))
        h = self._hist.get(key)
        if h is None:
            h = ConsumptionHistogram.from_energy(self.watts(v) * (length / v), self.battery)
            self._hist[key] = h
        return h
