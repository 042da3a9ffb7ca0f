import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from covbounds.dist import (
    DistributionError,
    ObservedDistribution,
    StructuralTruth,
    ZeroProbabilityError,
    condition_on,
    marginal,
    marginalize_out,
    pushforward_observed,
)
from covbounds.model import builtin_model, parameterize

from conftest import draw, random_table

tables3 = st.lists(st.floats(0.0, 1.0), min_size=8, max_size=8).filter(lambda v: sum(v) > 1e-3)


def _dist(vals, vars_=("S", "X", "Y")):
    a = np.array(vals, dtype=float)
    return ObservedDistribution(vars_, a / a.sum())


def test_validation_rejects_unnormalized():
    with pytest.raises(DistributionError, match="sum"):
        ObservedDistribution(("X",), [0.5, 0.6])
    with pytest.raises(DistributionError):
        ObservedDistribution(("X",), [-0.1, 1.1])


def test_condition_uniform_is_uniform():
    d = ObservedDistribution(("X", "Y"), np.full(4, 0.25))
    c = condition_on(d, {"X": 1})
    assert c.vars == ("Y",)
    np.testing.assert_allclose(c.table, [0.5, 0.5])


def test_condition_on_zero_event_names_it():
    d = ObservedDistribution(("X", "Y"), [0, 1, 0, 0])
    with pytest.raises(ZeroProbabilityError, match="X=1"):
        condition_on(d, {"X": 1})


def test_s_model_1_example_conditional(s_model_1_table):
    c = condition_on(s_model_1_table, {"S": 1})
    assert c.prob(X=0, Y=1) == 1.0


def test_marginalize_nothing_is_identity():
    d = random_table("ZXY", np.random.default_rng(0))
    assert np.array_equal(marginalize_out(d, ()).table, d.table)


def test_marginalize_product():
    pz, px = np.array([0.3, 0.7]), np.array([0.6, 0.4])
    d = ObservedDistribution(("Z", "X"), np.outer(pz, px))
    np.testing.assert_allclose(marginalize_out(d, ["Z"]).table, px, atol=1e-15)


@settings(max_examples=200, deadline=None)
@given(tables3)
def test_marginal_mass_conserved(vals):
    d = _dist(vals)
    for k in range(1, 3):
        for drop in itertools.combinations(d.vars, k):
            assert abs(marginalize_out(d, drop).table.sum() - 1.0) <= 1e-12


@settings(max_examples=200, deadline=None)
@given(tables3)
def test_condition_then_marginalize_commutes(vals):
    d = _dist(vals)
    for s in (0, 1):
        if d.prob(S=s) <= 0:
            continue
        c = marginalize_out(condition_on(d, {"S": s}), ["Y"])
        for x in (0, 1):
            direct = d.prob(S=s, X=x) / d.prob(S=s)
            assert c.prob(X=x) == pytest.approx(direct, abs=1e-12)


def test_json_round_trip_omits_zeros():
    d = ObservedDistribution(("X", "Y"), [0.5, 0, 0, 0.5])
    obj = d.to_json()
    assert obj["p"] == {"00": 0.5, "11": 0.5}
    assert ObservedDistribution.from_json(obj).allclose(d, 0)


def test_bad_json_key():
    with pytest.raises(DistributionError, match="bad assignment"):
        ObservedDistribution.from_json({"vars": ["X"], "p": {"2": 1.0}})


def test_iv_base_perfect_compliance_pushforward():
    m = builtin_model("iv_base")
    p = parameterize(m)
    q = np.zeros(p.type_count)
    # X = Z is function 1 over z; Y = X is function 1 over x
    q[p.joint_types.index((1, 1))] = 1.0
    t = StructuralTruth("iv_base", q, ObservedDistribution(("Z",), [0.5, 0.5]), 1.0)
    d = pushforward_observed(m, t)
    assert d.prob(Z=1, X=1, Y=1) == 0.5
    assert d.prob(Z=0, X=0, Y=0) == 0.5


def test_setting_e_uniform_types_normalized():
    m = builtin_model("e")
    t = StructuralTruth("e", np.full(512, 1 / 512), ObservedDistribution(("Z",), [0.5, 0.5]), 0.0)
    d = pushforward_observed(m, t)
    assert abs(d.table.sum() - 1) < 1e-12
    for z in (0, 1):
        assert abs(condition_on(d, {"Z": z}).table.sum() - 1) < 1e-12


@pytest.mark.parametrize("seed", range(20))
def test_setting_e_pushforward_independence(seed):
    _, _, d = draw("e", seed)
    for s in (0, 1):
        assert abs(d.cond({"S": s}, {"Z": 0}) - d.cond({"S": s}, {"Z": 1})) < 1e-12


@pytest.mark.parametrize("seed", range(20))
def test_setting_f_z_invariance(seed):
    _, _, d = draw("f", seed)
    for s, x, y in itertools.product((0, 1), repeat=3):
        a = d.cond({"X": x, "Y": y}, {"Z": 0, "S": s})
        b = d.cond({"X": x, "Y": y}, {"Z": 1, "S": s})
        assert abs(a - b) < 1e-12


def test_pushforward_rejects_wrong_q_size():
    m = builtin_model("iv_base")
    t = StructuralTruth("iv_base", np.full(4, 0.25), ObservedDistribution(("Z",), [0.5, 0.5]), 0)
    with pytest.raises(Exception, match="16"):
        pushforward_observed(m, t)


def test_marginal_keeps_order():
    d = random_table("ZSXY", np.random.default_rng(1))
    assert marginal(d, ("Y", "Z")).vars == ("Z", "Y")
