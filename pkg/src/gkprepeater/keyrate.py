"""Six-state QKD with two-way advantage distillation, keyed in the Y basis."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .quadrature import L0_KM, odd_error_aggregate

_TOL = 1e-12


class InfeasibleQBER(ValueError):
    pass


@dataclass(frozen=True)
class PauliChannel:
    q_x: float
    q_z: float
    q_y: float

    def __post_init__(self):
        if min(self.q_x, self.q_z, self.q_y) < 0 or self.q_x + self.q_z + self.q_y > 1 + _TOL:
            raise ValueError("Pauli probabilities must be non-negative and sum to at most 1")

    @classmethod
    def from_flips(cls, flip_x: float, flip_z: float) -> "PauliChannel":
        """Channel from independent logical bit (X) and phase (Z) flip probabilities."""
        return cls(flip_x * (1 - flip_z), flip_z * (1 - flip_x), flip_x * flip_z)


def qber(channel: PauliChannel) -> tuple[float, float, float]:
    """(e_X, e_Y, e_Z): a Pauli error flips bits in the two bases it does not belong to."""
    ch = channel
    return ch.q_z + ch.q_y, ch.q_x + ch.q_z, ch.q_x + ch.q_y


@dataclass(frozen=True)
class BellDiagonal:
    p00: float
    p01: float
    p10: float
    p11: float

    def __post_init__(self):
        if min(self.as_tuple()) < -_TOL or abs(sum(self.as_tuple()) - 1) > _TOL:
            raise ValueError("Bell-diagonal coefficients must form a probability distribution")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return self.p00, self.p01, self.p10, self.p11


def bell_coeffs_y_basis(e_x: float, e_y: float, e_z: float) -> BellDiagonal:
    """Bell-diagonal coefficients when the key is taken from the Y-basis outcomes."""
    p = (
        1 - (e_x + e_z + e_y) / 2,
        (e_x + e_z - e_y) / 2,
        (-e_x + e_y + e_z) / 2,
        (e_x - e_z + e_y) / 2,
    )
    if min(p) < -_TOL:
        raise InfeasibleQBER(f"QBER ({e_x}, {e_y}, {e_z}) gives a negative Bell coefficient")
    return BellDiagonal(*(max(v, 0.0) for v in p))


def qber_from_bell(bell: BellDiagonal) -> tuple[float, float, float]:
    """Inverse of :func:`bell_coeffs_y_basis`."""
    _, p01, p10, p11 = bell.as_tuple()
    return p01 + p11, p10 + p11, p01 + p10


def entropy(probs) -> float:
    p = np.asarray(probs, dtype=float)
    p = p[p > 0]
    return float(-(p * np.log2(p)).sum())


def binary_entropy(x: float) -> float:
    return entropy((x, 1 - x))


def ad_key_rate(bell: BellDiagonal) -> float:
    """Asymptotic key per logical qubit with the better of one-way and advantage-distilled processing."""
    p00, p01, p10, p11 = bell.as_tuple()
    a, b = p00 + p01, p10 + p11
    agree, differ = a * a + b * b, 2 * a * b
    one_way = 1 - entropy(bell.as_tuple())
    if differ > 0:
        one_way += differ / 2 * binary_entropy((p00 * p10 + p01 * p11) / (a * b))
    two_way = 0.0
    if agree > 0:
        distilled = (p00 * p00 + p01 * p01, 2 * p00 * p01, p10 * p10 + p11 * p11, 2 * p10 * p11)
        two_way = agree / 2 * (1 - entropy([v / agree for v in distilled]))
    return min(max(one_way, two_way, 0.0), 1.0)


def key_per_mode(r: float, n: int) -> float:
    if n not in (1, 4, 7):
        raise ValueError("a logical qubit spans 1, 4 or 7 modes")
    return max(r, 0.0) / n


def plob(length_km: float) -> float:
    """Repeaterless key capacity of a pure-loss fiber, bits per mode."""
    if length_km < 0:
        raise ValueError("negative length")
    if length_km == 0:
        return math.inf
    return -math.log2(-math.expm1(-length_km / L0_KM))


def key_from_flips(flip_x: float, flip_z: float, n: int) -> float:
    """Key per mode for end-to-end logical flip probabilities."""
    ch = PauliChannel.from_flips(flip_x, flip_z)
    e_x, e_y, e_z = qber(ch)
    return key_per_mode(ad_key_rate(bell_coeffs_y_basis(e_x, e_y, e_z)), n)


def key_for_links(link_x: float, link_z: float, link_km: float, total_km: float, n: int) -> float:
    """Key per mode over ``total_km`` built from identical links of length ``link_km``.

    The number of links enters as a real exponent.
    """
    if total_km <= 0:
        return key_per_mode(1.0, n)
    links = total_km / link_km
    return key_from_flips(odd_error_aggregate(link_x, links), odd_error_aggregate(link_z, links), n)
