import math

import pytest

from gkprepeater.cost import (
    INFEASIBLE, RepeaterConfig, cost, enumerate_configs, evaluate, latency, latency_formula, latency_steps,
    normalized_cost, optimize, station_costs, station_steps, throughput,
)
from gkprepeater.quadrature import FiberParams, Squeezing

F, SQ = FiberParams(0.97), Squeezing.from_sigma(0.09)


def rc(code="steane7", nm=2, na=40, total=1000.0):
    return RepeaterConfig(F, SQ, code, nm, na, total)


def test_station_costs():
    assert station_costs("c4") == (4, 68)
    assert station_costs("steane7") == (4, 311)
    assert station_costs("gkp")[0] == 4
    assert 68 / 4 == 17 and 311 / 4 == 77.75
    assert [station_steps(c) for c in ("gkp", "c4", "steane7")] == [2, 11, 40]


def test_cost_examples():
    c = rc()
    assert cost(c, 0.06) / 1000 == pytest.approx(77711 / 0.06 / 1000, rel=1e-14)
    assert normalized_cost(c, 0.06) == pytest.approx(1295.1833333333, rel=1e-10)
    assert cost(c, 0.12) == cost(c, 0.06) / 2
    assert cost(c, 0.0) == INFEASIBLE and cost(c, -1) == INFEASIBLE
    # no type-B stations: only the type-A term survives
    assert cost(rc(nm=4, na=4), 1.0) == 100 * 4 * 311 + 311


def test_cost_monotonicity():
    for na in (8, 24, 40):
        costs = [cost(rc(nm=nm, na=na), 0.1) for nm in range(1, na + 1) if na % nm == 0]
        assert all(b > a for a, b in zip(costs, costs[1:]))
    keys = [0.01, 0.05, 0.1, 0.14]
    costs = [cost(rc(), k) for k in keys]
    assert all(b < a for a, b in zip(costs, costs[1:]))


def test_enumeration():
    cfgs = enumerate_configs()
    assert len(cfgs) == 158 == sum(40 // m for m in range(1, 41))
    assert len(set(cfgs)) == len(cfgs)
    assert (1, 40) in cfgs and (40, 40) in cfgs and (3, 40) not in cfgs
    assert all(na % nm == 0 and 1 <= nm <= na <= 40 for nm, na in cfgs)


def test_config_validation():
    with pytest.raises(ValueError):
        rc(nm=3, na=40)
    with pytest.raises(ValueError):
        rc(nm=1, na=41)
    with pytest.raises(ValueError):
        rc(code="surface")
    assert rc(nm=2, na=40).m == 19 and rc(nm=2, na=40).link_km == 5.0


def test_optimizer_zero_noise_picks_sparsest():
    for code, n in (("c4", 4), ("steane7", 7)):
        rep = optimize(F, SQ, code, 1000.0, lambda *a: (0.0, 0.0))
        assert (rep.config.n_multi, rep.config.n_all) == (1, 1)
        assert rep.key_per_mode == pytest.approx(1 / n)
        assert rep.normalized_cost == pytest.approx(rep.cost / 1000.0)


def toy_links(code, nm, na):
    # denser stations and more type-A stations help, with diminishing returns
    p = 0.02 / na + 0.01 / nm ** 2
    return p, 1.3 * p


def test_hybrid_never_worse_than_type_a_only():
    for dist in (500.0, 2000.0, 5000.0, 10000.0):
        for obj in ("min-cost", "max-key"):
            h = optimize(F, SQ, "steane7", dist, toy_links, obj, "hybrid")
            a = optimize(F, SQ, "steane7", dist, toy_links, obj, "type-A-only")
            assert a.config.n_multi == a.config.n_all
            if obj == "min-cost":
                assert h.cost <= a.cost
            else:
                assert h.key_per_mode >= a.key_per_mode


def test_optimizer_reproducible_and_infeasible():
    a = optimize(F, SQ, "c4", 3000.0, toy_links)
    b = optimize(F, SQ, "c4", 3000.0, toy_links)
    assert a.to_dict() == b.to_dict()
    rep = optimize(F, SQ, "c4", 3000.0, lambda *x: (0.5, 0.5))
    assert not rep.feasible and rep.cost == INFEASIBLE
    with pytest.raises(ValueError):
        optimize(F, SQ, "c4", 100.0, toy_links, objective="cheapest")


def test_latency():
    c = rc(nm=1, na=5, total=1000.0)
    assert latency_steps(c) == 4852
    assert latency(c, 1e-6) == pytest.approx(1000 / 2e5 + 4852e-6)
    assert latency_formula(1000, 100, 4, 7, 40, 2, 1e-6) == pytest.approx(latency(c, 1e-6))
    g = rc("gkp", 40, 40, 100.0)
    assert latency_steps(g) == (400 + 1) * 2
    # m = 0: only type-A stations (and the encoder's n - 1 type-B slots)
    a = rc("c4", 2, 2, 500.0)
    assert latency_steps(a) == latency_formula(0, 100, 0, 4, 11, 2, 1.0)


def test_throughput():
    assert throughput(0.7, "steane7") == 0.7 / 40
    assert throughput(0.7, "c4") == 0.7 / 11
    assert throughput(0.0, "gkp") == 0.0
    with pytest.raises(ValueError):
        throughput(-0.1, "c4")


def test_evaluate_report():
    rep = evaluate(rc(), (1e-4, 1e-4))
    assert rep.feasible and 0 < rep.key_per_mode <= 1 / 7
    row = rep.row()
    assert set(row) == {"distance_km", "code", "n_multi", "n_all", "key_per_mode", "cost", "normalized_cost"}
    assert row["normalized_cost"] == pytest.approx(row["cost"] / 1000.0)


@pytest.mark.extended
def test_steane_min_cost_keeps_key_at_long_distance():
    from gkprepeater.montecarlo import ChainConfig, estimate

    layouts = [(nm, 40) for nm in (4, 5, 8, 10)]

    def links(code, nm, na):
        est = estimate(ChainConfig(0.97, 0.09, code, nm, na), 0.3, seed=0)
        return est.per_link("x"), est.per_link("z")

    for dist in (1000.0, 5000.0, 10000.0):
        rep = optimize(F, SQ, "steane7", dist, links, candidates=layouts)
        assert rep.key_per_mode > 0.06
