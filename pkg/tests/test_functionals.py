import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import _oracles as orc
from funcito.errors import ConfigurationError, EvaluationError
from funcito.functionals import (
    Functional,
    catalog,
    check_nonanticipative,
    endpoint,
    jump_functional,
    parse_functional,
    running_integral,
    running_max,
    square,
    stieltjes,
    time_only,
    uniform_functional_convergence,
)
from funcito.pathspace import CadlagPath, TimeGrid
from funcito.simulate import random_path

G = TimeGrid.uniform(10)
P1 = CadlagPath.linear(G)
P3 = CadlagPath(G, np.zeros(11), [(0.5, 1.0)])


def _samples(n, seed=0, n_jumps=3):
    rng = np.random.default_rng(seed)
    return [(float(rng.uniform(0, 1)), random_path(rng, 32, n_jumps=n_jumps)) for _ in range(n)]


def test_catalog_contents():
    names = set(catalog())
    for required in ("square", "running_integral", "running_max", "jump[sin]", "stieltjes[identity]", "time"):
        assert required in names
    assert any(n.startswith("endpoint[") for n in names)


def test_square_oracle_values():
    f = square()
    p = P1.shift(0.2)
    assert f(0.3, p) == pytest.approx(0.25)
    assert f.oracle.dup_v(0.3, p) == pytest.approx(1.0)
    assert f.oracle.dup_vv(0.3, p) == 2.0
    assert f.oracle.dt(0.3, p) == 0.0


def test_jump_functional_oracle_values():
    f = jump_functional("sin")
    assert f(0.5, P3) == pytest.approx(math.sin(1.0))
    assert f(0.6, P3) == 0.0
    assert f.oracle.dup_v(0.5, P3) == pytest.approx(math.cos(1.0))
    assert f.oracle.chit_v(0.5, P3) == 0.0


def test_running_integral_oracle_values():
    f = running_integral()
    assert f(0.5, P1) == pytest.approx(0.125)
    assert f(1.0, P3) == pytest.approx(0.5)
    assert f.oracle.dt(0.5, P1) == pytest.approx(0.5)
    assert f.oracle.dup_v(0.5, P1) == 0.0 and f.oracle.chit_v(0.5, P1) == 0.0


def test_running_max_values():
    p = CadlagPath(G, np.sin(6 * G.points), [(0.7, 2.0)])
    f = running_max()
    for t in np.linspace(0, 1, 23):
        probe = np.concatenate([np.linspace(0, t, 200), G.points[G.points <= t]])
        expected = max(orc.value(p, s) for s in probe)
        assert f(t, p) == pytest.approx(expected, abs=1e-12)


def test_stieltjes_matches_loop_oracle():
    for seed in range(5):
        p = random_path(np.random.default_rng(seed), 40)
        assert stieltjes()(1.0, p) == pytest.approx(orc.stieltjes_identity(p), abs=1e-12)


def test_stieltjes_identity_is_half_square_on_fv_paths():
    # ∫ω(s−)dω = ½ω_T² − ½Σ Δ² for continuous piecewise-linear part + jumps
    p = random_path(np.random.default_rng(11), 64)
    x0 = p.values[0]
    expected = 0.5 * (p(1.0) ** 2 - x0**2) - 0.5 * np.sum(p.jump_sizes**2)
    assert stieltjes()(1.0, p) == pytest.approx(expected, abs=1e-12)


def test_pointwise_and_along_agree():
    for i, f in enumerate(catalog().values()):
        for t, p in _samples(10, seed=100 + i):
            assert f(t, p) == pytest.approx(f(t, p.stop(t)), abs=0)
            k = p.grid.find(t)
            if k is not None:
                assert f.along(p)[k] == pytest.approx(f(t, p), abs=1e-12)


@pytest.mark.parametrize("name", sorted(catalog()))
def test_catalog_nonanticipative(name):
    f = catalog()[name]
    assert check_nonanticipative(f, _samples(100, seed=7))


def test_anticipative_functional_detected():
    peek = Functional("terminal", lambda t, p: p(p.horizon))
    assert not check_nonanticipative(peek, [(0.3, P1)])
    assert check_nonanticipative(running_max(), [(0.3, P1)])
    with pytest.raises(ValueError):
        check_nonanticipative(square(), [])


def test_nonfinite_value_raises():
    bad = Functional("bad", lambda t, p: float("nan"))
    with pytest.raises(EvaluationError):
        bad(0.1, P1)


def test_missing_oracle_raises():
    with pytest.raises(ConfigurationError):
        running_max().oracle.require("chit_vv")


def test_parse_functional():
    assert parse_functional("square").name == "square"
    assert parse_functional("jump:g=sin").name == "jump[sin]"
    assert parse_functional("endpoint:g=exp").name == "endpoint[exp]"
    assert parse_functional("stieltjes:f=square").name == "stieltjes[square]"
    assert parse_functional("time").name == "time"
    for bad in ("nope", "endpoint:g=zeta", "square:g=sin", "jump:sin"):
        with pytest.raises(ConfigurationError):
            parse_functional(bad)


def test_dupire_equals_ramp_oracle_on_smooth_entries():
    rng = np.random.default_rng(2)
    entries = [square(), endpoint("exp"), endpoint("sin"), running_integral(), time_only(), stieltjes()]
    for _ in range(20):
        p = random_path(rng, 32, n_jumps=0)
        t = float(rng.uniform(0, 1))
        for f in entries:
            assert f.oracle.dup_v(t, p) == f.oracle.chit_v(t, p)


def test_uniform_convergence_closed_forms():
    p = random_path(np.random.default_rng(4), 64, n_jumps=2)
    ns = [1, 2, 4, 8, 16]
    seq = [p.shift(1.0 / n) for n in ns]
    got = uniform_functional_convergence(running_max(), seq, p)
    np.testing.assert_allclose(got, [1.0 / n for n in ns], rtol=1e-12)
    sq = uniform_functional_convergence(square(), seq, p)
    for n, d in zip(ns, sq):
        vals = np.concatenate([p.values, p.left_values])
        assert d == pytest.approx(np.max(np.abs(2 * vals / n + 1 / n**2)), rel=1e-12)


def test_uniform_convergence_jump_functional_on_continuous_paths():
    p = random_path(np.random.default_rng(5), 64, n_jumps=0)
    got = uniform_functional_convergence(jump_functional("sin"), [p.shift(1.0 / n) for n in (1, 2, 3)], p)
    assert got == [0.0, 0.0, 0.0]


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10**6), st.floats(0.05, 0.95))
def test_restriction_to_continuous_paths_determines_ramp_derivative(seed, t):
    # f and f + jump functional agree on continuous paths, so D_ω agrees there
    from funcito.derivatives import chitashvili_vertical

    p = random_path(np.random.default_rng(seed), 64, n_jumps=0)
    f = endpoint("sin")
    g = Functional("sin+jump", lambda u, q: f(u, q) + jump_functional("sin")(u, q))
    a = chitashvili_vertical(f, t * 0.8, p).value
    b = chitashvili_vertical(g, t * 0.8, p).value
    assert a == pytest.approx(b, abs=1e-9)
