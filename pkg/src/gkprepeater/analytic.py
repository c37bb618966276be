"""Closed-form model of a chain of single-mode GKP repeaters.

Each station corrects q then p.  Folding the residual ancilla noise of one
correction into the following channel turns the chain into ideal
corrections separated by Gaussian channels of variance ``sigma_eff_sq``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .keyrate import key_for_links
from .quadrature import FiberParams, Squeezing, flip_prob, loss_to_sigma, odd_error_aggregate, transmissivity
from .rescaling import single_round_c, steady_state_c

MIN_SPACING_KM = 0.25
MAX_SPACING_KM = 1.5
GRID_POINTS = 26
SEARCH_KM = (0.0, 10000.0)
SEARCH_ITERATIONS = 10


@dataclass(frozen=True)
class GkpChainConfig:
    fiber: FiberParams
    squeezing: Squeezing
    spacing_km: float
    total_km: float

    def __post_init__(self):
        if not MIN_SPACING_KM - 1e-12 <= self.spacing_km <= MAX_SPACING_KM + 1e-12:
            raise ValueError(f"spacing must lie in [{MIN_SPACING_KM}, {MAX_SPACING_KM}] km")
        if self.total_km < 0:
            raise ValueError("total distance must be non-negative")

    @property
    def sigma_trans_sq(self) -> float:
        return loss_to_sigma(transmissivity(self.fiber, self.spacing_km)) ** 2

    @property
    def links(self) -> float:
        return self.total_km / self.spacing_km


def channel_c_opt(sigma_trans_sq: float, sigma_gkp: float) -> float:
    """Steady-state coefficient when back-action and fiber noise separate corrections."""
    return steady_state_c(math.sqrt(sigma_gkp ** 2 + sigma_trans_sq), sigma_gkp)


def sigma_eff_sq_from(sigma_trans_sq: float, sigma_gkp: float) -> float:
    vg, vt = sigma_gkp ** 2, sigma_trans_sq
    return 0.5 * (3 * vg + vt + math.sqrt((vg + vt) * (5 * vg + vt)))


def sigma_eff_sq(config: GkpChainConfig) -> float:
    return sigma_eff_sq_from(config.sigma_trans_sq, config.squeezing.sigma_gkp)


def error_into_channel_check(sigma_data: float, sigma_gkp: float) -> tuple[float, float]:
    """Linearised residual variance of a real correction and of its noise-into-channel stand-in.

    The real correction leaves ``(1-c)^2 s_d^2 + c^2 s_g^2``; the stand-in is a
    perfect correction followed by a shift ``sqrt(c)`` times an ancilla sample.
    """
    if not (sigma_data > 0 and sigma_gkp > 0):
        raise ValueError("sigmas must be positive")
    c = single_round_c(sigma_data, sigma_gkp)
    alpha = math.sqrt(c)
    exact = (1 - c) ** 2 * sigma_data ** 2 + c * c * sigma_gkp ** 2
    approx = alpha * alpha * sigma_gkp ** 2
    return exact, approx


def link_flip_prob(config: GkpChainConfig) -> float:
    return flip_prob(math.sqrt(sigma_eff_sq(config)))


def chain_qber(config: GkpChainConfig) -> tuple[float, float, float]:
    """(e_X, e_Y, e_Z) after ``total_km / spacing_km`` links (real exponent)."""
    q = odd_error_aggregate(link_flip_prob(config), config.links) if config.total_km > 0 else 0.0
    return q, 2 * q * (1 - q), q


def gkp_key_per_mode(fiber: FiberParams, squeezing: Squeezing, spacing_km: float, total_km: float) -> float:
    cfg = GkpChainConfig(fiber, squeezing, spacing_km, total_km)
    p = link_flip_prob(cfg)
    return key_for_links(p, p, spacing_km, total_km, 1)


def optimize_spacing(fiber: FiberParams, squeezing: Squeezing, total_km: float,
                     points: int = GRID_POINTS, refine: bool = True) -> tuple[float, float]:
    """Best repeater spacing on a uniform grid, refined once around the winner.

    Ties go to the smaller spacing.
    """
    grid = np.linspace(MIN_SPACING_KM, MAX_SPACING_KM, points)
    best = _argmax_spacing(fiber, squeezing, total_km, grid)
    if refine:
        step = grid[1] - grid[0]
        lo = max(MIN_SPACING_KM, best[0] - step)
        hi = min(MAX_SPACING_KM, best[0] + step)
        fine = np.linspace(lo, hi, 21)
        cand = _argmax_spacing(fiber, squeezing, total_km, fine)
        if cand[1] > best[1] or (cand[1] == best[1] and cand[0] < best[0]):
            best = cand
    return best


def _argmax_spacing(fiber, squeezing, total_km, grid) -> tuple[float, float]:
    best = None
    for s in grid:
        k = gkp_key_per_mode(fiber, squeezing, float(s), total_km)
        if best is None or k > best[1]:
            best = (float(s), k)
    return best


def bisect_distance(key_at: Callable[[float], float], threshold: float,
                    lo: float = SEARCH_KM[0], hi: float = SEARCH_KM[1],
                    iterations: int = SEARCH_ITERATIONS) -> float:
    """Largest distance with ``key_at(d) > threshold``, to within ``(hi - lo) / 2**iterations``.

    Returns ``lo`` if the key is already below threshold there and ``hi`` if
    it never drops.  Monotonicity is checked on every probe.
    """
    if not key_at(lo) > threshold:
        return lo
    if key_at(hi) > threshold:
        return hi
    seen: list[tuple[float, float]] = []
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        k = key_at(mid)
        seen.append((mid, k))
        if k > threshold:
            lo = mid
        else:
            hi = mid
    seen.sort()
    for (d1, k1), (d2, k2) in zip(seen, seen[1:]):
        if k2 > k1 + 1e-12:
            raise RuntimeError(f"key rate increases with distance between {d1} and {d2} km")
    return lo


def achievable_distance(fiber: FiberParams, squeezing: Squeezing, threshold: float = 0.01,
                        optimize: bool = True) -> float:
    """Distance in km up to which key per mode stays above ``threshold``."""
    if optimize:
        key = lambda d: optimize_spacing(fiber, squeezing, d)[1]
    else:
        key = lambda d: gkp_key_per_mode(fiber, squeezing, MIN_SPACING_KM, d)
    return bisect_distance(key, threshold)


def distance_from_link(link_x: float, link_z: float, link_km: float, n_modes: int,
                       threshold: float = 0.01) -> float:
    """Achievable distance for a chain of identical links with known flip probabilities."""
    return bisect_distance(lambda d: key_for_links(link_x, link_z, link_km, d, n_modes), threshold)


def sigma_eff_sq_composed(config: GkpChainConfig) -> float:
    """Same quantity assembled from the steady-state coefficient: fiber plus (2 + c) ancilla variances."""
    vt = config.sigma_trans_sq
    sg = config.squeezing.sigma_gkp
    return vt + (2 + channel_c_opt(vt, sg)) * sg * sg
