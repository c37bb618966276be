import math

import numpy as np
import pytest

from gkprepeater.analytic import (
    GkpChainConfig, achievable_distance, bisect_distance, chain_qber, channel_c_opt, distance_from_link,
    error_into_channel_check, gkp_key_per_mode, link_flip_prob, optimize_spacing, sigma_eff_sq,
    sigma_eff_sq_composed, sigma_eff_sq_from,
)
from gkprepeater.keyrate import plob
from gkprepeater.montecarlo import ChainConfig, run_chain
from gkprepeater.quadrature import SQRT_PI, FiberParams, Squeezing, centered_mod

F98 = FiberParams(0.98)


def cfg(sigma, spacing=0.25, total=100.0, eta0=0.98):
    return GkpChainConfig(FiberParams(eta0), Squeezing.from_sigma(sigma), spacing, total)


def test_sigma_eff_limits_and_identity():
    assert sigma_eff_sq_from(0.03, 0.0) == pytest.approx(0.03, rel=1e-15)
    rng = np.random.default_rng(0)
    for vt, sg in zip(rng.uniform(1e-4, 0.1, 50), rng.uniform(1e-3, 0.3, 50)):
        c = channel_c_opt(vt, sg)
        assert sigma_eff_sq_from(vt, sg) == pytest.approx(vt + (2 + c) * sg * sg, rel=1e-12)


def test_sigma_eff_cross_module_route():
    c = cfg(0.09)
    assert sigma_eff_sq(c) == pytest.approx(sigma_eff_sq_composed(c), rel=1e-12)


def test_sigma_eff_increasing():
    s = [sigma_eff_sq(cfg(0.09, sp)) for sp in np.linspace(0.25, 1.5, 11)]
    assert all(b > a for a, b in zip(s, s[1:]))
    s = [sigma_eff_sq(cfg(sg)) for sg in np.linspace(0.01, 0.3, 11)]
    assert all(b > a for a, b in zip(s, s[1:]))


def test_spacing_bounds():
    with pytest.raises(ValueError):
        cfg(0.09, 0.2)
    with pytest.raises(ValueError):
        cfg(0.09, 1.6)


def test_error_into_channel_linear():
    exact, approx = error_into_channel_check(0.1, 0.1)
    assert exact == pytest.approx(0.5 * 0.01, rel=1e-14)
    assert approx == pytest.approx(0.5 * 0.01, rel=1e-14)
    for sd, sg in [(0.05, 0.12), (0.2, 0.07)]:
        exact, approx = error_into_channel_check(sd, sg)
        c = sd * sd / (sd * sd + sg * sg)
        assert exact == pytest.approx(approx, rel=1e-12)
        assert approx == pytest.approx(c * sg * sg, rel=1e-12)
    with pytest.raises(ValueError):
        error_into_channel_check(0.0, 0.1)


@pytest.mark.parametrize("sd,sg", [(0.05, 0.05), (0.1, 0.15), (0.15, 0.15)])
def test_error_into_channel_sampling(sd, sg):
    # modular correction drawn directly with numpy, independent of the engine's correction routine
    rng = np.random.default_rng(11)
    n = 2_000_000
    x = rng.normal(0, sd, n)
    syn = centered_mod(x + rng.normal(0, sg, n), SQRT_PI)
    c = sd * sd / (sd * sd + sg * sg)
    resid = centered_mod(x - c * syn, SQRT_PI)
    assert resid.var() == pytest.approx(error_into_channel_check(sd, sg)[0], rel=0.02)


def test_chain_qber_relations():
    assert chain_qber(cfg(0.09, total=0.0)) == (0.0, 0.0, 0.0)
    for sg in (0.05, 0.09, 0.15, 0.3):
        ex, ey, ez = chain_qber(cfg(sg, total=500.0))
        assert ex == ez
        assert ey == pytest.approx(2 * ex * (1 - ex), rel=1e-14)
    ex, ey, _ = chain_qber(cfg(0.6, total=5000.0))
    assert ex == pytest.approx(0.5, abs=1e-12) and ey == pytest.approx(0.5, abs=1e-12)


def test_chain_qber_against_simulation():
    c = cfg(0.09, 0.25, 100.0)
    q = chain_qber(c)[0]
    n = 40_000
    res = run_chain(ChainConfig(0.98, 0.09, "gkp", n_all=40, links=400), n, 1)
    for flips in (res.flips_x, res.flips_z):
        assert flips.mean() == pytest.approx(q, rel=0.10)


def test_optimum_at_minimum_spacing():
    for eta0 in (0.97, 0.98, 0.99):
        for sg in (0.05, 0.07, 0.08, 0.09):
            fiber, sq = FiberParams(eta0), Squeezing.from_sigma(sg)
            d = achievable_distance(fiber, sq)
            for total in (101.0, 0.5 * (100 + d), d):
                if total <= 100:
                    continue
                best, key = optimize_spacing(fiber, sq, total)
                assert best == 0.25
                grid = np.linspace(0.25, 1.5, 26)
                assert all(key >= gkp_key_per_mode(fiber, sq, float(s), total) for s in grid)


def test_grid_refinement_is_stable():
    for sg in (0.06, 0.08):
        sq = Squeezing.from_sigma(sg)
        coarse = optimize_spacing(F98, sq, 300.0)[1]
        fine = optimize_spacing(F98, sq, 300.0, points=126, refine=False)[1]
        assert abs(fine - coarse) <= 0.005 * fine


def test_achievable_distance_limits():
    assert achievable_distance(F98, Squeezing.from_sigma(0.09), threshold=1.0) == 0.0
    d = bisect_distance(plob, 0.01)
    assert plob(d) > 0.01 >= plob(d + 10000 / 2 ** 10)
    assert d <= 109.5 < d + 10000 / 2 ** 10


def test_achievable_distance_monotone():
    ds = [achievable_distance(F98, Squeezing.from_sigma(s)) for s in (0.06, 0.07, 0.08, 0.09, 0.1)]
    assert all(b <= a for a, b in zip(ds, ds[1:]))
    sq = Squeezing.from_sigma(0.08)
    ds = [achievable_distance(FiberParams(e), sq) for e in (0.95, 0.97, 0.98, 0.99, 1.0)]
    assert all(b >= a for a, b in zip(ds, ds[1:]))


@pytest.mark.parametrize("sg", [0.07, 0.08, 0.09])
def test_bisection_postcondition(sg):
    sq = Squeezing.from_sigma(sg)
    d = achievable_distance(F98, sq)
    key = lambda L: optimize_spacing(F98, sq, L)[1]
    assert key(d) > 0.01 >= key(d + 10)


def test_bisect_detects_non_monotone_key():
    bumpy = lambda d: 0.6 if d < 5500 else (0.9 if d < 8000 else 0.0)
    with pytest.raises(RuntimeError):
        bisect_distance(bumpy, 0.5, 0, 10000, 10)
    assert bisect_distance(lambda d: 1.0, 0.5) == 10000


def test_distance_from_link_matches_closed_form():
    c = cfg(0.08)
    p = link_flip_prob(c)
    direct = bisect_distance(lambda d: gkp_key_per_mode(F98, c.squeezing, 0.25, d), 0.01)
    assert distance_from_link(p, p, 0.25, 1) == direct
