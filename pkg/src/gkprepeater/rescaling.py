"""Variance-minimising feedback coefficients for chains of GKP corrections.

A chain is a data mode that picks up independent Gaussian noise before each
of ``n`` syndrome extractions, every extraction adding ancilla noise of
variance sigma_gkp**2.  The "postponed" picture applies all feedback at the
end, which turns the problem into an ordinary quadratic minimisation; the
"real-time" coefficients are what a repeater actually uses.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import mpmath

DEFAULT_DIGITS = 60


class PrecisionExhausted(ArithmeticError):
    """Raised when the requested working precision cannot resolve the chain."""

    def __init__(self, message: str, solvable_prefix: int):
        super().__init__(message)
        self.solvable_prefix = solvable_prefix


class SingularConversion(ZeroDivisionError):
    pass


@dataclass(frozen=True)
class NoiseChainSpec:
    sigma_gkp: float
    noise_variances: tuple[float, ...]
    initial_variance: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "noise_variances", tuple(float(v) for v in self.noise_variances))
        if not self.sigma_gkp > 0:
            raise ValueError("sigma_gkp must be positive")
        if len(self.noise_variances) < 1:
            raise ValueError("a chain needs at least one extraction")
        if self.initial_variance < 0 or any(v < 0 for v in self.noise_variances):
            raise ValueError("variances must be non-negative")

    @property
    def n(self) -> int:
        return len(self.noise_variances)

    def prefix(self, m: int) -> "NoiseChainSpec":
        return NoiseChainSpec(self.sigma_gkp, self.noise_variances[:m], self.initial_variance)


@dataclass
class CoefficientSet:
    postponed: list[float]
    realtime: list[float]
    min_variance: float
    approximate: bool = False
    residuals: list[float] = field(default_factory=list)

    def __post_init__(self):
        if len(self.postponed) != len(self.realtime):
            raise ValueError("postponed and realtime lengths differ")


def single_round_c(sigma_data: float, sigma_gkp: float) -> float:
    vd = sigma_data * sigma_data
    vg = sigma_gkp * sigma_gkp
    if vd + vg == 0:
        return 1.0
    return vd / (vd + vg)


def steady_state_c(sigma_noise: float, sigma_gkp: float) -> float:
    """Coefficient that reproduces itself when each round sees fresh noise ``sigma_noise``."""
    if sigma_gkp == 0:
        return 1.0
    sn = sigma_noise
    vg = sigma_gkp * sigma_gkp
    # rationalised form of (sn / 2vg)(-sn + sqrt(sn^2 + 4vg)); no cancellation for small vg
    return 2.0 * sn / (sn + math.sqrt(sn * sn + 4.0 * vg)) if sn > 0 else 0.0


def _quadratic_problem(spec: NoiseChainSpec):
    # cumulative data variance before each extraction; ancilla i sees data_i plus its own noise
    vg = mpmath.mpf(spec.sigma_gkp) ** 2
    cum = []
    acc = mpmath.mpf(spec.initial_variance)
    for v in spec.noise_variances:
        acc += mpmath.mpf(v)
        cum.append(acc)
    n = len(cum)
    A = mpmath.matrix(n, n)
    for i in range(n):
        for j in range(n):
            A[i, j] = cum[min(i, j)]
        A[i, i] += vg
    b = mpmath.matrix([-2 * c for c in cum])
    a = cum[-1]
    return a, b, A


def _solve_at(spec: NoiseChainSpec, digits: int):
    with mpmath.workdps(digits):
        a, b, A = _quadratic_problem(spec)
        try:
            L = mpmath.cholesky(A)
        except ValueError as exc:
            raise PrecisionExhausted(f"covariance matrix lost positive definiteness: {exc}", 0) from exc
        y = _forward(L, b)
        z = _backward(L, y)
        x0 = [-z[i] / 2 for i in range(spec.n)]
        min_var = a - sum(b[i] * z[i] for i in range(spec.n)) / 4
        realtime = _to_realtime(x0)
        return x0, realtime, min_var


def _forward(L, b):
    n = L.rows
    y = [mpmath.mpf(0)] * n
    for i in range(n):
        s = b[i]
        for k in range(i):
            s -= L[i, k] * y[k]
        y[i] = s / L[i, i]
    return y


def _backward(L, y):
    n = L.rows
    z = [mpmath.mpf(0)] * n
    for i in reversed(range(n)):
        s = y[i]
        for k in range(i + 1, n):
            s -= L[k, i] * z[k]
        z[i] = s / L[i, i]
    return z


def _to_realtime(postponed):
    out = [None] * len(postponed)
    tail = 0
    for k in reversed(range(len(postponed))):
        den = 1 - tail
        if den == 0:
            raise SingularConversion(f"vanishing denominator at position {k}")
        out[k] = postponed[k] / den
        tail += postponed[k]
    return out


def _agree(u, v, rel: float) -> bool:
    for x, y in zip(u, v):
        scale = max(abs(x), abs(y), mpmath.mpf(10) ** -300)
        if abs(x - y) > rel * scale:
            return False
    return True


def _solve_checked(spec: NoiseChainSpec, digits: int):
    try:
        x0, rt, mv = _solve_at(spec, digits)
    except (PrecisionExhausted, SingularConversion):
        return False, None
    x1, rt1, mv1 = _solve_at(spec, digits + 20)
    ok = _agree(rt, rt1, 1e-13) and _agree([mv], [mv1], 1e-13)
    ok = ok and all(0 <= c <= 1 + 1e-12 for c in rt)
    return ok, (x1, rt1, mv1)


def solve_postponed(spec: NoiseChainSpec, digits: int = DEFAULT_DIGITS) -> CoefficientSet:
    """Solve the postponed quadratic problem and convert to real-time coefficients.

    The solve is repeated with extra guard digits; if the two disagree the
    working precision is declared exhausted and the longest prefix that still
    resolves is reported on the exception.
    """
    ok, solution = _solve_checked(spec, digits)
    if not ok:
        lo, hi = 0, spec.n
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if _solve_checked(spec.prefix(mid), digits)[0]:
                lo = mid
            else:
                hi = mid
        raise PrecisionExhausted(
            f"{digits} digits cannot resolve a chain of {spec.n} extractions", lo)
    x0, rt, mv = solution
    postponed = [float(v) for v in x0]
    realtime = [float(v) for v in rt]
    return CoefficientSet(postponed, realtime, float(mv), residuals=linear_residuals(spec, realtime))


def dump_problem(spec: NoiseChainSpec, digits: int = DEFAULT_DIGITS) -> str:
    """JSON snapshot of (a, b, A, x0) for offline inspection."""
    with mpmath.workdps(digits):
        a, b, A = _quadratic_problem(spec)
    x0, _, mv = _solve_at(spec, digits)
    s = lambda v: mpmath.nstr(v, digits)
    return json.dumps({
        "a": s(a),
        "b": [s(v) for v in b],
        "A": [[s(A[i, j]) for j in range(spec.n)] for i in range(spec.n)],
        "x0": [s(v) for v in x0],
        "min_variance": s(mv),
    }, indent=1)


def postponed_to_realtime(postponed: Sequence[float]) -> list[float]:
    return [float(v) for v in _to_realtime(list(postponed))]


def realtime_to_postponed(realtime: Sequence[float]) -> list[float]:
    """Weights of each ancilla noise in the total real-time feedback.

    Feedback at round k also displaces every later syndrome, so round k's
    net weight is its coefficient times what the later rounds leave over:
    x_k = c_k (1 - sum_{i>k} x_i).  This is the exact inverse of
    :func:`postponed_to_realtime`.
    """
    out = [0.0] * len(realtime)
    tail = 0.0
    for k in reversed(range(len(realtime))):
        out[k] = realtime[k] * (1.0 - tail)
        tail += out[k]
    return out


def linear_residuals(spec: NoiseChainSpec, realtime: Sequence[float]) -> list[float]:
    """Residual variance after each correction when ``realtime`` is applied in order."""
    vg = spec.sigma_gkp ** 2
    v = spec.initial_variance
    out = []
    for noise, c in zip(spec.noise_variances, realtime):
        d = v + noise
        v = (1 - c) ** 2 * d + c * c * vg
        out.append(v)
    return out


def greedy_chain(spec: NoiseChainSpec) -> CoefficientSet:
    """Apply :func:`single_round_c` at every step (the round-by-round optimum)."""
    vg = spec.sigma_gkp ** 2
    v = spec.initial_variance
    realtime = []
    for noise in spec.noise_variances:
        c = single_round_c(math.sqrt(v + noise), spec.sigma_gkp)
        realtime.append(c)
        v = c * vg
    res = linear_residuals(spec, realtime)
    return CoefficientSet(realtime_to_postponed(realtime), realtime, res[-1], residuals=res)


def periodic_chain(sigma_gkp: float, noise_variances: Sequence[float], tail_variance: float = 0.0,
                   digits: int = DEFAULT_DIGITS, tol: float = 1e-12, max_iter: int = 200) -> tuple[CoefficientSet, float]:
    """Coefficients for one period of an endlessly repeated chain.

    The variance entering a period is the residual of the previous one plus
    ``tail_variance`` (noise after the last extraction of the period).  The
    entry variance is iterated to a fixed point; the round-by-round recursion
    supplies the starting guess so the high-precision solve usually only runs
    a couple of times.  Returns the coefficient set and the entry variance.
    """
    v0 = tail_variance
    for _ in range(max_iter):
        nxt = greedy_chain(NoiseChainSpec(sigma_gkp, tuple(noise_variances), v0)).min_variance + tail_variance
        if abs(nxt - v0) <= tol * max(nxt, 1e-300):
            v0 = nxt
            break
        v0 = nxt
    for _ in range(max_iter):
        spec = NoiseChainSpec(sigma_gkp, tuple(noise_variances), v0)
        cs = solve_postponed(spec, digits)
        nxt = cs.min_variance + tail_variance
        if abs(nxt - v0) <= tol * max(nxt, 1e-300):
            return cs, v0
        v0 = nxt
    raise RuntimeError("periodic chain did not reach a fixed point")


def extend_chain(solved: Mapping[int, Sequence[float]], target_len: int, window: int = 10) -> CoefficientSet:
    """Extrapolate real-time coefficients beyond the longest solved prefix.

    ``solved`` maps prefix length to that prefix's real-time coefficients.
    Real-time coefficients only depend on the past, so the longest prefix
    fixes the leading positions; later ones follow c_k = c_inf - alpha beta^k
    fitted to the last ``window`` solved positions.
    """
    if len(solved) < 3:
        raise ValueError("need at least three solved prefix lengths")
    m = max(solved)
    base = [float(c) for c in solved[m]]
    if target_len < m:
        raise ValueError("target shorter than the solved chain")
    if target_len == m:
        return CoefficientSet(realtime_to_postponed(base), base, float("nan"))
    tail = base[-min(window, len(base)):]
    diffs = [b - a for a, b in zip(tail, tail[1:])]
    if len(diffs) < 2 or max(abs(d) for d in diffs) < 1e-15:
        limit, beta = tail[-1], 0.0
    else:
        ratios = sorted(d2 / d1 for d1, d2 in zip(diffs, diffs[1:]) if d1 != 0)
        beta = min(max(ratios[len(ratios) // 2], 0.0), 0.999) if ratios else 0.0
        limit = tail[-1] + diffs[-1] * beta / (1.0 - beta)
    gap = limit - base[-1]
    ext = base + [limit - gap * beta ** (k - m + 1) for k in range(m, target_len)]
    return CoefficientSet(realtime_to_postponed(ext), ext, float("nan"), approximate=True)
