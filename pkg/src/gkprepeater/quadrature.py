"""Scalar building blocks for GKP shift tracking.

Everything here works on plain floats and, where it makes sense, on numpy
arrays of the same shape, so the Monte-Carlo engine can call the same code
on whole trial batches.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import erfc

SQRT_PI = math.sqrt(math.pi)
L0_KM = 22.0

# Relative size of the first omitted lattice term in the likelihood series.
_SERIES_CUTOFF = 1e-17


def centered_mod(x, s: float):
    """Reduce ``x`` into ``[-s/2, s/2)`` modulo ``s``."""
    if not s > 0:
        raise ValueError(f"modulus must be positive, got {s}")
    if np.ndim(x) == 0:
        x = float(x)
        r = x - s * math.floor(x / s + 0.5)
        # floating point can land exactly on +s/2 after the subtraction
        return -s / 2 if r >= s / 2 else r
    x = np.asarray(x, dtype=float)
    r = x - s * np.floor(x / s + 0.5)
    return np.where(r >= s / 2, r - s, r)


@dataclass(frozen=True)
class Squeezing:
    """GKP peak width, stored both as sigma and as dB of squeezing."""

    sigma_gkp: float
    db: float

    def __post_init__(self):
        if not self.sigma_gkp > 0:
            raise ValueError("sigma_gkp must be positive")
        if abs(self.db - sigma_to_db(self.sigma_gkp)) > 1e-9 * max(1.0, abs(self.db)):
            raise ValueError("sigma_gkp and db are inconsistent")

    @classmethod
    def from_sigma(cls, sigma: float) -> "Squeezing":
        return cls(float(sigma), sigma_to_db(sigma))

    @classmethod
    def from_db(cls, db: float) -> "Squeezing":
        return cls(db_to_sigma(db), float(db))

    @property
    def variance(self) -> float:
        return self.sigma_gkp ** 2


def sigma_to_db(sigma: float) -> float:
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    return -10.0 * math.log10(2.0 * sigma * sigma)


def db_to_sigma(db: float) -> float:
    if not math.isfinite(db):
        raise ValueError("squeezing in dB must be finite")
    return math.sqrt(10.0 ** (-db / 10.0) / 2.0)


def sigma_db_convert(sigma: float | None = None, db: float | None = None) -> Squeezing:
    """Build a :class:`Squeezing` from exactly one of ``sigma`` or ``db``."""
    if (sigma is None) == (db is None):
        raise ValueError("give exactly one of sigma or db")
    if sigma is not None:
        return Squeezing.from_sigma(sigma)
    return Squeezing.from_db(db)


def delta_to_sigma(delta: float) -> float:
    """Peak width of an approximate GKP state with envelope parameter ``delta``."""
    e = math.exp(-delta * delta)
    return math.sqrt((1.0 - e) / (1.0 + e))


@dataclass(frozen=True)
class FiberParams:
    eta0: float
    l0_km: float = field(default=L0_KM)

    def __post_init__(self):
        if not 0.0 < self.eta0 <= 1.0:
            raise ValueError(f"eta0 must lie in (0, 1], got {self.eta0}")
        if self.l0_km != L0_KM:
            raise ValueError("attenuation length is fixed at 22 km")

    def gain(self, length_km: float) -> float:
        """Amplifier gain that turns the loss of a segment into a displacement channel."""
        return 1.0 / transmissivity(self, length_km)


def transmissivity(fiber: FiberParams, length_km: float) -> float:
    if length_km < 0:
        raise ValueError(f"negative fiber length {length_km}")
    return fiber.eta0 * math.exp(-length_km / fiber.l0_km)


def loss_to_sigma(eta: float) -> float:
    if not 0.0 < eta <= 1.0:
        raise ValueError(f"transmissivity must lie in (0, 1], got {eta}")
    return math.sqrt(1.0 - eta)


def flip_prob(sigma):
    """Probability that a Gaussian shift of width ``sigma`` ends up nearer an odd multiple of sqrt(pi)."""
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma < 0):
        raise ValueError("sigma must be non-negative")
    with np.errstate(divide="ignore"):
        out = erfc(np.sqrt(math.pi / (8.0 * sigma * sigma)))
    return float(out) if out.ndim == 0 else out


def _likelihood_terms(sigma: float) -> int:
    # first omitted lattice point sits at least (K + 1/2) sqrt(pi) away, the
    # leading one at most sqrt(pi)/2, so the ratio is exp(-pi K (K+1) / 2 sigma^2)
    target = -2.0 * sigma * sigma * math.log(_SERIES_CUTOFF) / math.pi
    k = 1
    while k * (k + 1) <= target:
        k += 1
    return k


def likelihood_unchecked(sigma, x0):
    """Vectorised likelihood series without range checks.

    ``sigma`` may be an array broadcastable against ``x0`` (one width per
    column, say); the number of lattice terms follows the widest one.
    """
    x0 = np.asarray(x0, dtype=float)
    sigma = np.maximum(np.asarray(sigma, dtype=float), 1e-150)
    kmax = _likelihood_terms(float(np.max(sigma)))
    inv = 0.5 / (sigma * sigma)
    num = np.zeros(np.broadcast(x0, sigma).shape)
    den = np.ones_like(num)
    b1 = 2.0 * SQRT_PI * x0
    for k in range(1, kmax + 1):
        a = k * k * math.pi
        b = k * b1
        with np.errstate(over="ignore"):
            w = np.exp(-(a - b) * inv) + np.exp(-(a + b) * inv)
        den += w
        if k % 2:
            num += w
    return num / den


def error_likelihood(sigma: float, x0):
    """Probability that a measured syndrome ``x0`` came from an odd multiple of sqrt(pi).

    Terms are weighted relative to the lattice point nearest ``x0`` so nothing
    underflows for small ``sigma``.
    """
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    arr = np.asarray(x0, dtype=float)
    if np.any(arr < -SQRT_PI / 2) or np.any(arr >= SQRT_PI / 2):
        raise ValueError("x0 must lie in [-sqrt(pi)/2, sqrt(pi)/2)")
    out = likelihood_unchecked(sigma, arr)
    return float(out) if out.ndim == 0 else out


def odd_error_aggregate(p, n):
    """Chance of an odd number of flips among ``n`` independent ones of probability ``p``."""
    p = np.asarray(p, dtype=float)
    if np.any(p < 0) or np.any(p > 1):
        raise ValueError("p must lie in [0, 1]")
    # expm1/log1p keep small p accurate for large exponents
    low = np.minimum(p, 0.25)
    with np.errstate(invalid="ignore"):
        out = np.where(p < 0.25, -0.5 * np.expm1(n * np.log1p(-2.0 * low)),
                       0.5 * (1.0 - (1.0 - 2.0 * p) ** n))
    return float(out) if out.ndim == 0 else out


def per_link_probability(p_total, n_links):
    """Invert :func:`odd_error_aggregate` for one link out of ``n_links``."""
    return odd_error_aggregate(p_total, 1.0 / n_links)


class RandomStream:
    """Counter-based Gaussian source keyed by a master seed and a path of integers.

    Two streams built with the same seed and key path produce identical
    sequences no matter which process creates them.
    """

    def __init__(self, seed: int, key: Sequence[int] = ()):
        self.seed = int(seed)
        self.key = tuple(int(k) for k in key)
        ss = np.random.SeedSequence(self.seed, spawn_key=self.key)
        self._gen = np.random.Generator(np.random.Philox(ss))

    def child(self, *key: int) -> "RandomStream":
        return RandomStream(self.seed, self.key + tuple(key))

    def normal(self, sigma: float, size=None):
        if sigma == 0:
            return 0.0 if size is None else np.zeros(size)
        return self._gen.normal(0.0, sigma, size)

    def standard_normal(self, size):
        return self._gen.standard_normal(size)


def sample_shift(sigma: float, stream: RandomStream, size=None):
    """Draw Gaussian displacement(s) of width ``sigma``."""
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    return stream.normal(sigma, size)
