import itertools
import json
import math

import numpy as np
import pytest
from scipy import stats

from radixlab.analytic import m_value, mh_profile
from radixlab.ensemble import (
    COUNTABLE,
    UNCOUNTABLE,
    UNIQUE,
    boundary_mixture,
    classify_paths,
    grand_average_moments,
    grand_average_sample,
    path_string,
    perpetuity_oracle,
    worst_case_solve,
)
from radixlab.errors import NotInSigmaZero
from radixlab.source import StringBatch, TailedString, memoryless, two_state, uniform

from conftest import example_iii, example_iv, five_sources
from oracles import two_state_EZ

P = TailedString.parse


def test_moments_match_binary_closed_form():
    rng = np.random.default_rng(1)
    for _ in range(20):
        p00, p10 = rng.uniform(0.05, 0.95, 2)
        src = two_state(p00, p10)
        mom = grand_average_moments(src)
        z0, z1 = two_state_EZ(src.P)
        assert mom.EZr[0] == pytest.approx(z0, abs=1e-12)
        assert mom.EZr[1] == pytest.approx(z1, abs=1e-12)


def test_moments_uniform():
    mom = grand_average_moments(uniform(2))
    assert mom.EZ == pytest.approx(2.0, abs=1e-12)
    assert np.allclose(mom.EZr, 2.0)
    # m is constant, so Z has no spread
    assert mom.EZ2 == pytest.approx(4.0, abs=1e-12)


def test_moments_match_oracle(markov64):
    mom = grand_average_moments(markov64)
    ez, ez2, e1, e2 = perpetuity_oracle(markov64, eps=1e-6)
    assert abs(ez - mom.EZ) <= e1 + 1e-12
    assert abs(ez2 - mom.EZ2) <= e2 + 1e-12
    assert e1 < 1e-5


@pytest.mark.parametrize("src", five_sources())
def test_EZ_is_integral_of_mh(src):
    grid = (np.arange(10_000) + 0.5) / 10_000
    rows = mh_profile(src, grid)
    assert abs(rows[:, 1].mean() - grand_average_moments(src).EZ) <= 1e-4


def test_sample_uniform_exact():
    assert np.all(grand_average_sample(uniform(3), 50, 1) == 1.5)


def test_sample_mean_and_second_moment(markov64):
    reps = 100_000
    x = grand_average_sample(markov64, reps, 4)
    mom = grand_average_moments(markov64)
    se = x.std(ddof=1) / math.sqrt(reps)
    assert abs(x.mean() - mom.EZ) <= 3 * se
    assert abs((x ** 2).mean() - mom.EZ2) <= 4 * (x ** 2).std(ddof=1) / math.sqrt(reps)


@pytest.mark.parametrize("p", [0.3, 0.8])
def test_antisymmetric_law_is_affine_uniform(p):
    # p00 = p11 = p: both conditional laws Z_0, Z_1 are affine images of a uniform
    src = two_state(p, 1 - p)
    xi = np.random.default_rng(np.random.SeedSequence(6, spawn_key=(2 ** 31,))).random(4000)
    y = (1 - 2 * p) / (p * (1 - p)) * xi + 1 / (1 - p)
    for init in (0, 1):
        x = grand_average_sample(src, 4000, (6, init), init=init)
        assert stats.ks_2samp(x, y).pvalue > 0.01


def test_boundary_mixture(markov64, uni2):
    mix = boundary_mixture(markov64, P("1"), 0.0, init=0)
    assert (mix.weight_right, mix.weight_left) == (0.5, 0.5)
    assert mix.t == pytest.approx(0.6)
    assert (mix.atom_right, mix.atom_left) == pytest.approx((1.8, 2.2), abs=1e-12)
    mix = boundary_mixture(markov64, P("1"), math.inf, init=0)
    assert (mix.weight_right, mix.weight_left) == (1.0, 0.0)
    assert boundary_mixture(markov64, P("1"), -math.inf, init=0).weight_right == 0.0
    w = boundary_mixture(markov64, P("1"), 0.3, init=0).weight_right
    assert w == pytest.approx(stats.norm.cdf(0.3 / math.sqrt(0.24)), abs=1e-12)
    mix = boundary_mixture(uni2, P("011"), 1.0)
    assert mix.atom_left == mix.atom_right == 2.0
    with pytest.raises(NotInSigmaZero):
        boundary_mixture(uni2, P(":max"), 0.0)


def test_worst_case_memoryless():
    rep = worst_case_solve(memoryless([1 / 3, 2 / 3]))
    assert rep.m_max == pytest.approx(3.0, abs=1e-9)
    assert rep.classification == UNIQUE and rep.paths == ["(1)"]
    for p in ([0.2, 0.5, 0.3], [0.6, 0.4]):
        assert worst_case_solve(memoryless(p)).m_max == pytest.approx(1 / (1 - max(p)), abs=1e-9)


def test_worst_case_uniform():
    rep = worst_case_solve(uniform(3))
    assert rep.m_max == pytest.approx(1.5, abs=1e-12)
    assert sorted(rep.edge_graph) == list(itertools.product(range(3), repeat=2))
    assert rep.classification == UNCOUNTABLE


def test_worst_case_example_iii():
    rep = worst_case_solve(example_iii())
    assert rep.classification == COUNTABLE
    assert rep.reachable_edges() == [(0, 0), (0, 1), (1, 1)]
    assert rep.m_max == pytest.approx(1.5, abs=1e-12)


def test_worst_case_example_iv():
    rep = worst_case_solve(example_iv())
    assert rep.classification == UNCOUNTABLE
    assert rep.start_set == [0, 2]
    assert rep.reachable_edges() == [(0, 0), (0, 2), (2, 0), (2, 2)]
    assert rep.m_max == pytest.approx(5 / 3, abs=1e-12)


def test_worst_case_json():
    d = json.loads(worst_case_solve(uniform(2)).to_json())
    assert set(d) == {"M", "m_max", "start", "edges", "class"}
    assert d["class"] == "Uncountable" and d["edges"] == [[0, 0], [0, 1], [1, 0], [1, 1]]


@pytest.mark.parametrize("src", five_sources() + [example_iii(), example_iv()])
def test_worst_case_invariants(src):
    rep = worst_case_solve(src)
    assert np.abs(rep.M - 1 - (src.P * rep.M).max(axis=1)).max() < 1e-12
    assert rep.m_max == pytest.approx(1 + (src.law(None) * rep.M).max(), abs=1e-15)
    assert all(any(a == r for a, _ in rep.edge_graph) for r, _ in rep.reachable_edges())
    for s in StringBatch(src, 200, 3).strings():
        assert m_value(src, None, s) <= rep.m_max + 1e-9
    rng = iter(np.random.default_rng(5).integers(0, 100, 10_000).tolist())
    tail = src.p_max ** 60 / (1 - src.p_max) * max(rep.M)
    for _ in range(10):
        w = path_string(rep, rng, 60, src.b)
        assert m_value(src, None, w) >= rep.m_max - 1e-9 - tail


def test_classify_paths_finite():
    cls, paths = classify_paths(3, [0], [(0, 1), (0, 2), (1, 1), (2, 2)])
    assert cls == "Finite" and paths == ["0(1)", "0(2)"]
    cls, _ = classify_paths(2, [0], [(0, 0), (0, 1), (1, 1)])
    assert cls == COUNTABLE


def test_near_tie_warns():
    src = memoryless([0.5 - 1e-8, 0.5 + 1e-8])
    with pytest.warns(UserWarning):
        rep = worst_case_solve(src)
    assert rep.heuristic
