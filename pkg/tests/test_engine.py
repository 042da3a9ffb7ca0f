import numpy as np
import pytest

from covbounds.closedform import BoundsInterval
from covbounds.dist import (
    ObservedDistribution,
    StructuralTruth,
    condition_on,
    marginal,
    pushforward_observed,
    structural_effect,
)
from covbounds.engine import (
    Estimand,
    InfeasibleDistributionError,
    PositivityError,
    backdoor_rd,
    build_bounds_lp,
    ca_bounds,
    cm_bounds,
    co_bounds,
    compute_bounds,
    conditional_lower_bounds,
    model_constraint_violations,
    pointwise_sharpness_check,
    uniform_sharpness_check,
    witness_distribution,
)
from covbounds.model import ModelError, builtin_model, parameterize
from covbounds.sim import SIM_SETTINGS, sample_mediator_truth, sample_truth

from conftest import draw


def _compliance_truth():
    m = builtin_model("iv_base")
    p = parameterize(m)
    q = np.zeros(16)
    q[p.joint_types.index((1, 1))] = 1.0
    return m, StructuralTruth("iv_base", q, ObservedDistribution(("Z",), [0.5, 0.5]), 1.0)


def _s_model_2_draw(seed):
    m = builtin_model("s_model_2")
    rng = np.random.default_rng(seed)
    q = rng.dirichlet(np.ones(parameterize(m).type_count))
    t = StructuralTruth(m.name, q, None, structural_effect(m, q))
    return m, pushforward_observed(m, t)


def test_lp_shapes():
    m, t = _compliance_truth()
    p = build_bounds_lp(m, pushforward_observed(m, t), Estimand("RD"))
    assert p.a_eq.shape == (8 + 1, 16)
    _, _, d = draw("e", 0)
    p = build_bounds_lp(builtin_model("e"), d, Estimand("RD"))
    assert p.a_eq.shape == (16 + 1, 512)


def test_perfect_compliance_point_identified():
    m, t = _compliance_truth()
    co = co_bounds(m, pushforward_observed(m, t))
    assert co.lower == pytest.approx(1.0) and co.upper == pytest.approx(1.0)
    w = witness_distribution(m, pushforward_observed(m, t), co.lower_solution)
    assert w.theta_true == pytest.approx(1.0)


def test_uninformative_instrument_ey0(uninformative_iv):
    # with Z uninformative the bounds reduce to the natural ones:
    # [P(Y=1,X=0), P(Y=1,X=0) + P(X=1)] = [0.3, 0.3 + 0.2 + 0.4]
    m = builtin_model("iv_base")
    for exact in (False, True):
        co = co_bounds(m, uninformative_iv, "EY0", exact=exact)
        assert co.lower == pytest.approx(0.3, abs=1e-12)
        assert co.upper == pytest.approx(0.9, abs=1e-12)


@pytest.mark.parametrize("setting", SIM_SETTINGS)
def test_validity_and_containment(setting):
    for seed in range(60):
        m, t, d = draw(setting, seed)
        co, ca, cm = co_bounds(m, d), ca_bounds(m, d), cm_bounds(m, d)
        for iv in (co, ca, cm):
            assert iv.contains(t.theta_true, 1e-7)
        assert co.within(ca) and co.within(cm)


def test_setting_a_all_coincide():
    for seed in range(30):
        m, _, d = draw("a", seed)
        co, ca, cm = co_bounds(m, d), ca_bounds(m, d), cm_bounds(m, d)
        assert abs(co.lower - cm.lower) < 1e-9 and abs(co.upper - cm.upper) < 1e-9
        assert abs(ca.lower - cm.lower) < 1e-9 and abs(ca.upper - cm.upper) < 1e-9


@pytest.mark.parametrize("setting", ["c", "e", "f"])
def test_witness_round_trip(setting):
    for seed in range(15):
        m, _, d = draw(setting, seed)
        co = co_bounds(m, d)
        for sol, target in ((co.lower_solution, co.lower), (co.upper_solution, co.upper)):
            w = witness_distribution(m, d, sol)
            assert pushforward_observed(m, w).allclose(d, 1e-8)
            assert w.theta_true == pytest.approx(target, abs=1e-8)


def test_s_model_1_pointwise_feasible_uniform_not(s_model_1_table):
    m = builtin_model("s_model_1")
    bounds = conditional_lower_bounds(m, s_model_1_table)
    assert bounds == {0: pytest.approx(0.0), 1: pytest.approx(-1.0)}
    res = pointwise_sharpness_check(m, s_model_1_table, bounds, eps=0.1)
    assert res[0].feasible and res[1].feasible
    for exact in (False, True):
        assert not uniform_sharpness_check(m, s_model_1_table, bounds, eps=0.5, exact=exact).feasible


def test_large_epsilon_is_vacuous(s_model_1_table):
    m = builtin_model("s_model_1")
    res = pointwise_sharpness_check(m, s_model_1_table, {0: -1.0, 1: -1.0}, eps=2.0)
    assert all(r.feasible for r in res.values())


@pytest.mark.parametrize("seed", range(15))
def test_setting_e_conditional_bp_uniformly_sharp(seed):
    m, _, d = draw("e", seed)
    bounds = conditional_lower_bounds(m, d)
    assert all(r.feasible for r in pointwise_sharpness_check(m, d, bounds).values())
    assert uniform_sharpness_check(m, d, bounds).feasible


@pytest.mark.parametrize("seed", range(15))
def test_s_model_2_uniformly_sharp(seed):
    m, d = _s_model_2_draw(seed)
    bounds = conditional_lower_bounds(m, d)
    assert uniform_sharpness_check(m, d, bounds).feasible


@pytest.mark.parametrize("setting", ["c", "d", "f", "e"])
def test_uniform_implies_pointwise(setting):
    for seed in range(10):
        m, _, d = draw(setting, seed)
        for side in ("lower", "upper"):
            bounds = conditional_lower_bounds(m, d, side=side)
            if uniform_sharpness_check(m, d, bounds, side=side).feasible:
                res = pointwise_sharpness_check(m, d, bounds, side=side)
                assert all(r.feasible for r in res.values())


def test_linearized_conditional_estimand():
    m = builtin_model("e")
    p = parameterize(m)
    for seed in range(10):
        _, _, d = draw("e", seed)
        for s in (0, 1):
            e = Estimand("RD", s)
            co = co_bounds(m, d, e)
            lp = build_bounds_lp(m, d, e)
            w = witness_distribution(m, d, co.lower_solution)
            direct = structural_effect(m, w.q, "RD", s)
            linear = float(lp.objective @ w.q)
            assert direct == pytest.approx(linear, abs=1e-9)
            ind = p.covariate_value == s
            assert ind.any()


def test_backdoor_collapses_under_independence():
    rng = np.random.default_rng(2)
    pxy = rng.dirichlet(np.ones(4)).reshape(2, 2)
    d = ObservedDistribution(("S", "X", "Y"), np.einsum("s,xy->sxy", [0.3, 0.7], pxy))
    naive = pxy[1, 1] / pxy[1].sum() - pxy[0, 1] / pxy[0].sum()
    assert backdoor_rd(d) == pytest.approx(naive, abs=1e-14)


def test_backdoor_positivity():
    d = ObservedDistribution(("S", "X", "Y"), [0.25, 0.25, 0, 0, 0.25, 0.25, 0, 0])
    with pytest.raises(PositivityError):
        backdoor_rd(d)


def test_mediator_truths_identified():
    m = builtin_model("mediator")
    rng = np.random.default_rng(0)
    for _ in range(100):
        t = sample_mediator_truth(rng)
        assert backdoor_rd(t.observed) == pytest.approx(t.theta_true, abs=1e-10)
        assert ca_bounds(m, t.observed).contains(t.theta_true)
        assert cm_bounds(m, t.observed).contains(t.theta_true)


def test_model_constraints():
    _, _, d = draw("e", 1)
    assert model_constraint_violations(builtin_model("e"), d) == []
    # S depends on Z: violates the independence implied by setting e
    t = d.table.copy()
    t[1, 1] *= 1.5
    t[1, 0] *= (d.prob(Z=1) - 1.5 * d.prob(Z=1, S=1)) / d.prob(Z=1, S=0)
    bad = ObservedDistribution(d.vars, t)
    probs = model_constraint_violations(builtin_model("e"), bad)
    assert any("P(S=" in p for p in probs)
    _, _, dc = draw("c", 1)
    assert model_constraint_violations(builtin_model("f"), dc)


def test_infeasible_distribution_raises():
    _, _, dc = draw("c", 3)
    with pytest.raises(InfeasibleDistributionError):
        co_bounds(builtin_model("f"), dc)


def test_compute_bounds_dispatch():
    m, _, d = draw("e", 2)
    e = Estimand("RD")
    assert compute_bounds(m, d, e, "co").method == "co"
    assert isinstance(compute_bounds(m, d, e, "cm"), BoundsInterval)
    with pytest.raises(ModelError, match="co method only"):
        compute_bounds(m, d, Estimand("RD", 1), "ca")
    with pytest.raises(ValueError):
        compute_bounds(m, d, e, "magic")


def test_zero_probability_left_cell_is_skipped():
    m, t, d = draw("a", 0)
    tab = d.table.copy()
    tab[1, 1] = 0.0  # Z=1, S=1 never observed
    d0 = ObservedDistribution(d.vars, tab / tab.sum())
    lp = build_bounds_lp(m, d0, Estimand("RD"))
    assert any("zero-probability" in n for n in lp.notes)
    co = co_bounds(m, d0)
    assert co.lower <= co.upper


def test_sample_truth_deterministic():
    a = sample_truth("c", np.random.default_rng(5))
    b = sample_truth("c", np.random.default_rng(5))
    assert np.array_equal(a.q, b.q) and a.theta_true == b.theta_true


def test_mediator_left_marginal():
    t = sample_mediator_truth(np.random.default_rng(1))
    assert marginal(t.observed, ("Z",)).prob(Z=1) == pytest.approx(t.pz)


def test_setting_c_averaged_not_always_nested_in_marginal():
    """Both intervals match per-stratum and marginal LP oracles, yet ca can
    stick out of cm: nothing in setting c forces nesting."""
    m, iv = builtin_model("c"), builtin_model("iv_base")
    _, _, d = draw("c", 0)
    ca, cm = ca_bounds(m, d), cm_bounds(m, d)
    per_s = {s: co_bounds(iv, marginal(condition_on(d, {"S": s}), "ZXY")) for s in (0, 1)}
    assert ca.lower == pytest.approx(sum(d.prob(S=s) * per_s[s].lower for s in (0, 1)), abs=1e-12)
    oracle_cm = co_bounds(iv, marginal(d, "ZXY"))
    assert (cm.lower, cm.upper) == (pytest.approx(oracle_cm.lower, abs=1e-12),
                                    pytest.approx(oracle_cm.upper, abs=1e-12))
    assert not ca.within(cm)
    assert co_bounds(m, d).within(ca) and co_bounds(m, d).within(cm)
