import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import _oracles as orc
from funcito.errors import ConfigurationError, DomainError
from funcito.functionals import (
    endpoint,
    identity,
    jump_functional,
    running_integral,
    running_max,
    square,
    stieltjes,
    time_only,
)
from funcito.itoverify import (
    ConvergenceReport,
    condition_v_ratio,
    fv_change_of_variable,
    ito_convergence,
    ito_decompose,
    jump_term_by_ledger,
    loglog_slope,
    prop1_check,
    prop2_check,
    prop3_check,
    wong_zakai,
)
from funcito.pathspace import CadlagPath, TimeGrid
from funcito.simulate import GeneratorConfig, JumpSpec, brownian, fv_sample, random_path

JD = GeneratorConfig("jumpdiff", jump=JumpSpec(2.0, "sign"), compensated=True)
EPS = 2.0**-40


def _samples(n, seed, n_jumps=3, n_steps=64):
    rng = np.random.default_rng(seed)
    return [(float(rng.integers(1, n_steps // 2)) / n_steps, random_path(rng, n_steps, n_jumps=n_jumps)) for _ in range(n)]


def test_square_residual_exact_on_brownian():
    s = brownian(TimeGrid.uniform(512), 3)
    d = ito_decompose(square(), s)
    stoch, qv = orc.ito_sum_square(list(s.X.values))
    assert d.stoch_term == pytest.approx(stoch, abs=1e-12)
    assert d.qv_term == pytest.approx(0.5 * 2 * qv, abs=1e-12)
    assert abs(d.residual) <= EPS * d.scale


def test_stieltjes_identity_residual_exact_on_any_sample():
    for s in (brownian(TimeGrid.uniform(256), 1), JD.sample(256, 2), fv_sample(random_path(np.random.default_rng(0), 64))):
        d = ito_decompose(stieltjes(), s)
        assert abs(d.residual) <= EPS * d.scale
        # the integrand's own derivative is 1, so the QV term is half the realized QV
        assert d.qv_term == pytest.approx(0.5 * s.X.realized_qv_continuous(), rel=1e-12)
        assert d.time_term == 0.0


def test_endpoint_sin_on_jump_diffusion():
    d = ito_decompose(endpoint("sin"), JD.sample(2**12, 0))
    assert abs(d.residual) < 1e-2 * d.scale
    assert d.jump_term != 0.0


def test_bookkeeping_identity():
    for f in (endpoint("exp"), square(), running_integral(), stieltjes()):
        d = ito_decompose(f, JD.sample(300, 4), t=0.7)
        total = ((d.time_term + d.stoch_term) + d.qv_term) + d.jump_term
        assert d.residual + total == pytest.approx(d.lhs, abs=4 * np.spacing(max(abs(d.lhs), abs(total), 1.0)))
        assert d.residual == d.lhs - total


def test_qv_clock_version_reported():
    d = ito_decompose(square(), brownian(TimeGrid.uniform(1024), 7))
    assert d.qv_term_clock == pytest.approx(1.0)
    assert ito_decompose(square(), random_path(np.random.default_rng(1))).qv_term_clock is None


def test_missing_oracle_is_configuration_error():
    with pytest.raises(ConfigurationError):
        ito_decompose(running_max(), brownian(TimeGrid.uniform(16), 0))


def test_stopping_time_t():
    s = JD.sample(256, 9)
    d = ito_decompose(endpoint("exp"), s, t=0.5)
    assert d.lhs == pytest.approx(math.exp(s.X(0.5)) - math.exp(s.X(0.0)))


@pytest.mark.parametrize("seed", range(10))
def test_jump_term_matches_ledger_bruteforce(seed):
    p = random_path(np.random.default_rng(seed), 64, n_jumps=3)
    for f in (endpoint("exp"), square(), jump_functional("sin"), stieltjes()):
        parts = jump_term_by_ledger(f, p)
        assert len(parts) == len(p.jumps)
        assert ito_decompose(f, p).jump_term == pytest.approx(math.fsum(v for _, v in parts), abs=1e-12)


def test_fv_change_of_variable_examples():
    g = TimeGrid.uniform(1000)
    d = fv_change_of_variable(square(), CadlagPath.linear(g), 1.0)
    assert d.lhs == pytest.approx(1.0)
    assert abs(d.residual) < 1e-12
    d0 = fv_change_of_variable(square(), CadlagPath.zero(g))
    assert (d0.lhs, d0.time_term, d0.stoch_term, d0.jump_term, d0.residual) == (0, 0, 0, 0, 0)


def test_fv_change_of_variable_jump_functional_on_unit_jump():
    # f(1, ω) = f(0, ω) = 0, but the jump sum picks up f(τ) − f(τ−) = 1.
    # t ↦ f(t, ω) is not càdlàg here, so the formula does not apply and the
    # residual is −1 rather than 0.
    g = TimeGrid.uniform(10)
    P3 = CadlagPath(g, np.zeros(11), [(0.5, 1.0)])
    d = fv_change_of_variable(jump_functional("id"), P3, 1.0)
    assert d.lhs == 0.0 and d.jump_term == 1.0
    assert d.residual == -1.0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6))
def test_fv_formula_exact_for_stieltjes_and_small_for_smooth(seed):
    p = random_path(np.random.default_rng(seed), 256, n_jumps=2)
    d = fv_change_of_variable(stieltjes(), p)
    assert abs(d.residual) <= 1e-12 * d.scale
    d = fv_change_of_variable(endpoint("sin"), p)
    assert abs(d.residual) < 1e-2


def test_prop2_examples():
    g = TimeGrid.uniform(2**12)
    P1 = CadlagPath.linear(g)
    assert prop2_check(square(), P1, 1.0) < 1e-4
    assert prop2_check(time_only(), P1, 0.7) < 1e-14
    assert prop2_check(running_integral(), P1, 1.0) < 1e-10
    with pytest.raises(DomainError):
        prop2_check(square(), CadlagPath(g, np.zeros(len(g)), [(0.5, 1.0)]))


def test_prop1_examples():
    samples = _samples(20, 3)
    for f in (square(), running_integral(), jump_functional("sin")):
        r = prop1_check(f, samples)
        assert r.max_time_deviation < 1e-6 and r.max_space_deviation < 1e-6
        assert r.samples_used == 20


def test_prop3_flags_jump_functional():
    samples = _samples(20, 4, n_jumps=0)
    r = prop3_check(square(), samples)
    assert r.hypothesis_holds and r.max_space_deviation < 1e-6
    r = prop3_check(jump_functional("sin"), samples)
    assert r.hypothesis_holds is False
    assert r.max_space_deviation > 0.5


def test_condition_v_constants():
    rng = np.random.default_rng(12)
    hs = 0.5 ** np.arange(1, 12)
    for _ in range(20):
        p = random_path(rng, 64, n_jumps=0)
        t = 0.5
        # square: exactly 1 = sup|g''|/2
        assert np.allclose(condition_v_ratio(square(), t, p, hs), 1.0)
        # jump functional with f¹ = g' (Dupire choice): K = sup|g''|/2
        f = jump_functional("sin")
        r = condition_v_ratio(f, t, p, hs, first=f.oracle.dup_v)
        assert np.all(r <= 0.5 + 1e-9)
        # with f¹ = D_ω f = 0 the ratio blows up like 1/h
        r0 = condition_v_ratio(f, t, p, hs)
        if abs(math.cos(p(t))) > 0.1:
            assert r0[-1] > 100 * r0[0]


def test_loglog_slope():
    assert loglog_slope([1, 10, 100], [1, 0.1, 0.01]) == pytest.approx(-1.0)
    assert math.isnan(loglog_slope([1, 2], [0.0, 0.0]))


def test_convergence_report_contract():
    r = ConvergenceReport([(4, 0.3), (16, 0.1)], -0.8, True, 0.2)
    assert r.as_dict()["pass"] and r.decreasing()
    with pytest.raises(ValueError):
        ConvergenceReport([], 0.0, True, 0.1)


def test_ito_convergence_square_exact():
    rep = ito_convergence(square(), GeneratorConfig("bm"), [64, 256, 1024], range(5))
    assert all(m <= EPS for m in rep.metrics())
    assert rep.passed


def test_ito_convergence_requires_three_nested_levels():
    with pytest.raises(DomainError):
        ito_convergence(square(), GeneratorConfig("bm"), [64, 256], range(2))
    with pytest.raises(DomainError):
        ito_convergence(square(), GeneratorConfig("bm"), [64, 100, 1024], range(2))


def test_ito_convergence_thread_independent():
    a = ito_convergence(endpoint("exp"), JD, [64, 256, 1024], range(6), threads=1)
    b = ito_convergence(endpoint("exp"), JD, [64, 256, 1024], range(6), threads=3)
    assert a.levels == b.levels


def test_ito_convergence_endpoint_exp_brownian():
    rep = ito_convergence(endpoint("exp"), GeneratorConfig("bm"), [2**8, 2**10, 2**12], range(100))
    assert rep.decreasing()
    assert rep.slope <= -0.4


def test_wong_zakai_identity_closed_form():
    s = brownian(TimeGrid.uniform(2**12), 5)
    rep = wong_zakai(identity(), s, [4, 16, 64])
    from funcito.simulate import approximant

    for n, m in rep.levels:
        V = approximant(s, n)
        assert m == pytest.approx(0.5 * abs(V(1.0) ** 2 - s.X(1.0) ** 2), abs=1e-12)


def _fv_with_large_jumps(seed, n_steps=128):
    # every |Δ| >= 1/4 survives truncation at all levels n >= 4
    rng = np.random.default_rng(seed)
    p = random_path(rng, n_steps, n_jumps=0)
    dense = np.zeros(n_steps + 1)
    idx = rng.choice(np.arange(1, n_steps + 1), 3, replace=False)
    dense[idx] = rng.choice([-1.0, 1.0], 3) * (0.25 + rng.exponential(0.5, 3))
    return CadlagPath.from_arrays(p.grid, p.cont, dense)


def test_wong_zakai_fv_input_exactly_zero():
    g = TimeGrid.uniform(2**10)
    paths = [CadlagPath.linear(g)] + [_fv_with_large_jumps(s) for s in range(5)]
    paths += [random_path(np.random.default_rng(s), 128, n_jumps=0) for s in range(3)]
    for p in paths:
        for f in (identity(), square(), endpoint("sin")):
            assert wong_zakai(f, fv_sample(p)).metrics() == [0.0, 0.0, 0.0, 0.0]


def test_wong_zakai_fv_small_jumps_are_truncated():
    g = TimeGrid.uniform(64)
    p = CadlagPath(g, np.zeros(65), [(0.25, 0.1), (0.5, 1.0)])
    m = wong_zakai(identity(), fv_sample(p)).metrics()
    # the 0.1 jump is dropped for n < 10 and kept from n = 16 on
    assert m[0] > 0 and m[1:] == [0.0, 0.0, 0.0]


def test_wong_zakai_square_brownian():
    ms = np.median(
        [wong_zakai(square(), brownian(TimeGrid.uniform(2**12), s)).metrics() for s in range(30)], axis=0
    )
    assert np.all(np.diff(ms) < 0)
    assert ms[-1] < 0.05
