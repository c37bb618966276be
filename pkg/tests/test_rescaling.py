import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import minimize

from gkprepeater.rescaling import (
    NoiseChainSpec, PrecisionExhausted, SingularConversion, dump_problem, extend_chain, greedy_chain,
    linear_residuals, periodic_chain, postponed_to_realtime, realtime_to_postponed, single_round_c,
    solve_postponed, steady_state_c,
)


def direct_variance(spec, postponed):
    """Var(final data - sum c_i * ancilla_i) with every noise term written out explicitly."""
    n = spec.n
    vg = spec.sigma_gkp ** 2
    # independent sources: initial shift, n environment shifts, n ancilla shifts
    var = [spec.initial_variance, *spec.noise_variances, *([vg] * n)]
    coeff = np.zeros(2 * n + 1)
    coeff[: n + 1] = 1.0  # final data sees everything environmental
    for i, c in enumerate(postponed):
        coeff[: i + 2] -= c  # ancilla i sees data up to and including noise i
        coeff[n + 1 + i] -= c
    return float(np.dot(coeff ** 2, var))


def test_single_round_examples():
    assert single_round_c(0.1, 0.1) == 0.5
    assert single_round_c(0.3, 0.1) == pytest.approx(0.9)
    assert single_round_c(0.3, 1e-9) == pytest.approx(1.0)


def test_steady_state_examples():
    assert steady_state_c(0.2, 0.2) == pytest.approx((math.sqrt(5) - 1) / 2, rel=1e-15)
    assert steady_state_c(0.0, 0.2) == 0.0
    assert steady_state_c(0.2, 1e-9) == pytest.approx(1.0)
    assert steady_state_c(0.2, 0.0) == 1.0


@given(st.floats(0.01, 1.0), st.floats(0.01, 1.0))
def test_steady_state_is_fixed_point(sn, sg):
    c = steady_state_c(sn, sg)
    assert single_round_c(math.sqrt(c * sg * sg + sn * sn), sg) == pytest.approx(c, rel=1e-10)


def test_n1_reduces_to_single_round():
    spec = NoiseChainSpec(0.1, (0.02,), 0.01)
    cs = solve_postponed(spec)
    assert cs.postponed[0] == pytest.approx(single_round_c(math.sqrt(0.03), 0.1), abs=1e-12)
    assert cs.min_variance == pytest.approx(cs.postponed[0] * 0.01, abs=1e-12)


@pytest.mark.parametrize("spec", [
    NoiseChainSpec(0.1, (0.03, 0.01), 0.005),
    NoiseChainSpec(0.08, (0.0, 0.05), 0.02),
    NoiseChainSpec(0.15, (0.01, 0.01), 0.0),
])
def test_n2_matches_direct_minimisation(spec):
    res = minimize(lambda c: direct_variance(spec, c), x0=[0.3, 0.3], method="Nelder-Mead",
                   options={"xatol": 1e-12, "fatol": 1e-16, "maxiter": 20000})
    cs = solve_postponed(spec)
    assert np.allclose(cs.postponed, res.x, atol=1e-6)
    assert cs.min_variance == pytest.approx(res.fun, abs=1e-10)
    assert cs.min_variance == pytest.approx(direct_variance(spec, cs.postponed), rel=1e-12)


def test_uniform_chain_middle_matches_steady_state():
    sg, sn = 0.1, 0.1
    cs = solve_postponed(NoiseChainSpec(sg, (sn * sn,) * 40, 0.0))
    target = steady_state_c(sn, sg)
    for c in cs.realtime[10:30]:
        assert c == pytest.approx(target, abs=1e-6)
    assert all(0 < c < 1 for c in cs.realtime)


def test_realtime_optimum_equals_greedy():
    spec = NoiseChainSpec(0.09, (0.01, 0.04, 0.0, 0.02, 0.03), 0.006)
    cs = solve_postponed(spec)
    gr = greedy_chain(spec)
    assert np.allclose(cs.realtime, gr.realtime, atol=1e-12)
    assert cs.residuals[-1] == pytest.approx(cs.min_variance, rel=1e-10)


def test_min_variance_beats_alternatives():
    spec = NoiseChainSpec(0.1, (0.02, 0.005, 0.03, 0.01), 0.01)
    cs = solve_postponed(spec)
    ones = linear_residuals(spec, [1.0] * spec.n)[-1]
    assert cs.min_variance <= ones
    assert cs.min_variance <= greedy_chain(spec).min_variance + 1e-15


def test_conversion_examples():
    assert postponed_to_realtime([0.3]) == [0.3]
    assert postponed_to_realtime([0.2, 0.5]) == pytest.approx([0.2 / 0.5, 0.5])
    assert realtime_to_postponed([0.4, 0.5]) == pytest.approx([0.4 * 0.5, 0.5])
    with pytest.raises(SingularConversion):
        postponed_to_realtime([0.3, 1.0])


@settings(max_examples=50)
@given(st.lists(st.floats(0.01, 0.99), min_size=1, max_size=8))
def test_conversion_round_trip(rt):
    back = postponed_to_realtime(realtime_to_postponed(rt))
    assert np.allclose(back, rt, atol=1e-12)


def test_spd_matrix_via_dump():
    spec = NoiseChainSpec(0.1, (0.01, 0.02, 0.03), 0.0)
    doc = json.loads(dump_problem(spec, 30))
    A = np.array([[float(v) for v in row] for row in doc["A"]])
    assert np.allclose(A, A.T)
    assert np.all(np.linalg.eigvalsh(A) > 0)
    assert float(doc["min_variance"]) >= 0


def test_precision_exhausted_reports_prefix():
    spec = NoiseChainSpec(1e-4, (1.0,) * 12, 0.0)
    with pytest.raises(PrecisionExhausted) as info:
        solve_postponed(spec, digits=6)
    assert 0 <= info.value.solvable_prefix < spec.n


def test_invalid_specs():
    with pytest.raises(ValueError):
        NoiseChainSpec(0.0, (0.1,))
    with pytest.raises(ValueError):
        NoiseChainSpec(0.1, ())
    with pytest.raises(ValueError):
        NoiseChainSpec(0.1, (-0.1,))


def test_extend_chain_uniform():
    sg, sn = 0.1, 0.12
    spec = NoiseChainSpec(sg, (sn * sn,) * 40, 0.0)
    solved = {m: solve_postponed(spec.prefix(m)).realtime for m in (16, 18, 20)}
    ext = extend_chain(solved, 40)
    assert ext.approximate
    assert ext.realtime[:20] == solved[20]
    target = steady_state_c(sn, sg)
    for c in ext.realtime[20:]:
        assert c == pytest.approx(target, abs=1e-4)
    dist = [abs(c - target) for c in solved[20]]
    assert all(b <= a + 1e-15 for a, b in zip(dist, dist[1:]))
    same = extend_chain(solved, 20)
    assert same.realtime == solved[20]
    with pytest.raises(ValueError):
        extend_chain({1: [0.5], 2: [0.5, 0.5]}, 4)


def test_periodic_chain_fixed_point():
    cs, v0 = periodic_chain(0.09, (0.01, 0.0081), tail_variance=0.02)
    assert cs.min_variance + 0.02 == pytest.approx(v0, rel=1e-10)
