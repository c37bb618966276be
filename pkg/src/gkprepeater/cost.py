"""Storage cost of repeater layouts, the cost-per-key objective, latency and throughput.

Costs are counted in mode-steps: one storage mode held for one elementary
step (``tau0``).  A layout puts ``n_multi`` type-A stations and ``n_all``
stations in total on every 10 km.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Callable, Iterable

from .keyrate import key_for_links
from .quadrature import FiberParams, Squeezing
from .schedule import build_schedule

N_MODES = {"gkp": 1, "c4": 4, "steane7": 7}
FIBER_SPEED_KM_S = 2.0e5
MAX_DENSITY = 40
INFEASIBLE = math.inf


def station_costs(code: str) -> tuple[int, int]:
    """(type-B cost, type-A cost) in mode-steps."""
    t_b = build_schedule(None, "B").cost
    if code == "gkp":
        return t_b, t_b
    return t_b, build_schedule(code, "A").cost


def station_steps(code: str) -> int:
    """Steps a data mode spends in the station that limits the repetition rate."""
    if code == "gkp":
        return build_schedule(None, "B").steps
    return build_schedule(code, "A").steps


@dataclass(frozen=True)
class RepeaterConfig:
    fiber: FiberParams
    squeezing: Squeezing
    code: str
    n_multi: int
    n_all: int
    total_km: float

    def __post_init__(self):
        if self.code not in N_MODES:
            raise ValueError(f"code must be one of {tuple(N_MODES)}")
        if not (1 <= self.n_multi <= self.n_all <= MAX_DENSITY and self.n_all % self.n_multi == 0):
            raise ValueError("need 1 <= n_multi <= n_all <= 40 with n_multi dividing n_all")
        if self.total_km < 0:
            raise ValueError("negative distance")

    @property
    def m(self) -> int:
        """Type-B stations between consecutive type-A stations."""
        return self.n_all // self.n_multi - 1

    @property
    def link_km(self) -> float:
        return 10.0 / self.n_multi


def cost(cfg: RepeaterConfig, key_per_mode: float) -> float:
    """Storage spent per secret bit; Alice's encoder is charged like a type-A station."""
    if key_per_mode <= 0:
        return INFEASIBLE
    t_b, t_a = station_costs(cfg.code)
    per_10km = t_b * (cfg.n_all - cfg.n_multi) + t_a * cfg.n_multi
    return (cfg.total_km / 10.0 * per_10km + t_a) / key_per_mode


def normalized_cost(cfg: RepeaterConfig, key_per_mode: float) -> float:
    return cost(cfg, key_per_mode) / cfg.total_km


def enumerate_configs(max_density: int = MAX_DENSITY) -> list[tuple[int, int]]:
    """Every (n_multi, n_all) with n_multi dividing n_all and n_all <= max_density."""
    return [(nm, na) for nm in range(1, max_density + 1) for na in range(nm, max_density + 1, nm)]


@dataclass
class CostReport:
    config: RepeaterConfig
    key_per_mode: float
    cost: float
    normalized_cost: float
    latency_tau0: float
    throughput: float
    feasible: bool = True

    def row(self) -> dict:
        return {
            "distance_km": self.config.total_km,
            "code": self.config.code,
            "n_multi": self.config.n_multi,
            "n_all": self.config.n_all,
            "key_per_mode": self.key_per_mode,
            "cost": self.cost,
            "normalized_cost": self.normalized_cost,
        }

    def to_dict(self) -> dict:
        d = self.row()
        d.update(latency_tau0=self.latency_tau0, throughput=self.throughput, feasible=self.feasible,
                 eta0=self.config.fiber.eta0, sigma_gkp=self.config.squeezing.sigma_gkp)
        return d


# (link X flip, link Z flip) for one elementary link of a layout
LinkProvider = Callable[[str, int, int], tuple[float, float]]


def evaluate(cfg: RepeaterConfig, link_probs: tuple[float, float], tau0_s: float = 0.0) -> CostReport:
    n = N_MODES[cfg.code]
    key = key_for_links(link_probs[0], link_probs[1], cfg.link_km, cfg.total_km, n)
    c = cost(cfg, key)
    lat = latency(cfg, tau0_s=tau0_s) if tau0_s else latency_steps(cfg)
    return CostReport(cfg, key, c, c / cfg.total_km if cfg.total_km else c, lat,
                      throughput(key * n, cfg.code), key > 0)


def optimize(fiber: FiberParams, squeezing: Squeezing, code: str, total_km: float, link_probs: LinkProvider,
             objective: str = "min-cost", constraint: str = "hybrid",
             candidates: Iterable[tuple[int, int]] | None = None) -> CostReport:
    """Best layout at one distance.

    ``link_probs(code, n_multi, n_all)`` supplies per-link flip probabilities,
    typically from cached Monte-Carlo estimates.  Ties prefer fewer type-A
    stations, then fewer stations overall.
    """
    if objective not in ("min-cost", "max-key"):
        raise ValueError("objective must be 'min-cost' or 'max-key'")
    if constraint not in ("hybrid", "type-A-only"):
        raise ValueError("constraint must be 'hybrid' or 'type-A-only'")
    pairs = list(candidates) if candidates is not None else enumerate_configs()
    if constraint == "type-A-only":
        pairs = [(nm, na) for nm, na in pairs if nm == na]
    best = None
    best_key = None
    for nm, na in sorted(pairs):
        cfg = RepeaterConfig(fiber, squeezing, code, nm, na, total_km)
        rep = evaluate(cfg, link_probs(code, nm, na))
        if not rep.feasible:
            continue
        k = (rep.cost,) if objective == "min-cost" else (-rep.key_per_mode,)
        k = k + (nm, na)
        if best is None or k < best_key:
            best, best_key = rep, k
    if best is None:
        nm, na = min(pairs)
        cfg = RepeaterConfig(fiber, squeezing, code, nm, na, total_km)
        return CostReport(cfg, 0.0, INFEASIBLE, INFEASIBLE, latency_steps(cfg), 0.0, feasible=False)
    return best


def latency_steps(cfg: RepeaterConfig) -> float:
    """Processing delay in units of tau0, excluding time of flight."""
    n_a = cfg.n_multi * cfg.total_km / 10.0
    tau_b = station_steps("gkp")
    tau_a = station_steps(cfg.code) if cfg.code != "gkp" else tau_b
    n = N_MODES[cfg.code]
    if cfg.code == "gkp":
        return (cfg.n_all * cfg.total_km / 10.0 + 1) * tau_b
    return (n_a + 1) * tau_a + (cfg.m * n_a + (n - 1)) * tau_b


def latency(cfg: RepeaterConfig, tau0_s: float, speed_km_s: float = FIBER_SPEED_KM_S) -> float:
    """Arrival time of the first encoded qubit, in seconds."""
    return cfg.total_km / speed_km_s + latency_steps(cfg) * tau0_s


def latency_formula(total_km: float, n_type_a: float, m: int, n: int, tau_a: float, tau_b: float,
                    tau0_s: float = 1.0, speed_km_s: float = FIBER_SPEED_KM_S) -> float:
    """Time of flight plus ``(N+1) tau_A + (mN + n - 1) tau_B``, delays given in tau0."""
    return total_km / speed_km_s + ((n_type_a + 1) * tau_a + (m * n_type_a + (n - 1)) * tau_b) * tau0_s


def throughput(r: float, code: str) -> float:
    """Secret bits per tau0, limited by the slowest station's occupancy."""
    if r < 0:
        raise ValueError("negative key rate")
    return r / station_steps(code)


def report_dict(rep: CostReport) -> dict:
    d = rep.to_dict()
    d["config"] = {k: v for k, v in asdict(rep.config).items() if k not in ("fiber", "squeezing")}
    return d
