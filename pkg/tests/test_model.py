import json

import numpy as np
import pytest

from covbounds.model import (
    BUILTIN_IDS,
    CausalModel,
    ModelError,
    UnknownModelError,
    builtin_model,
    load_model,
    parameterize,
)

# hand-encoded adjacency for the six simulation settings
GOLDEN_EDGES = {
    "a": {("S", "Z"), ("Z", "X"), ("X", "Y")},
    "b": {("Z", "S"), ("Z", "X"), ("X", "Y")},
    "c": {("S", "Z"), ("S", "X"), ("Z", "X"), ("X", "Y")},
    "d": {("Z", "S"), ("S", "X"), ("Z", "X"), ("X", "Y")},
    "e": {("S", "X"), ("S", "Y"), ("Z", "X"), ("X", "Y")},
    "f": {("Z", "S"), ("S", "X"), ("X", "Y")},
}

LP_MODELS = [m for m in BUILTIN_IDS if m != "mediator"]


@pytest.mark.parametrize("setting", sorted(GOLDEN_EDGES))
def test_settings_match_golden_adjacency(setting):
    assert set(builtin_model(setting).edges) == GOLDEN_EDGES[setting]


def test_setting_e_structure():
    m = builtin_model("e")
    assert m.parents("X") == ("Z", "S")
    assert m.parents("Y") == ("S", "X")
    assert m.right_block == ("S", "X", "Y")


def test_iv_base_structure():
    m = builtin_model("iv_base")
    assert set(m.edges) == {("Z", "X"), ("X", "Y")}
    assert m.right_block == ("X", "Y")


def test_setting_f_has_no_direct_instrument_edge():
    assert ("Z", "X") not in builtin_model("f").edges


@pytest.mark.parametrize("mid,count", [("iv_base", 16), ("e", 512), ("c", 64),
                                       ("confounded_pair", 2 * 4), ("s_model_2", 2 * 4 * 16)])
def test_type_counts(mid, count):
    assert parameterize(builtin_model(mid)).type_count == count


@pytest.mark.parametrize("mid", LP_MODELS)
def test_per_variable_function_counts(mid):
    p = parameterize(builtin_model(mid))
    for v in p.variables:
        assert len(v.functions) == 2 ** (2 ** len(v.parents))
    assert p.type_count == np.prod([len(v.functions) for v in p.variables])


@pytest.mark.parametrize("mid", LP_MODELS)
def test_pushforward_is_deterministic_per_type(mid):
    p = parameterize(builtin_model(mid))
    for li, lvals in enumerate(p.left_assignments):
        left = dict(zip(p.left_vars, lvals))
        for t in range(p.type_count):
            vals = p.evaluate(t, left)
            assert set(vals) == set(p.right_vars)
            idx = int("".join(str(vals[v]) for v in p.right_vars), 2)
            assert p.right_index[li, t] == idx


def test_parameterize_is_stable():
    m = builtin_model("e")
    a = parameterize(m).joint_types
    b = parameterize(builtin_model("e")).joint_types
    assert a == b


def test_function_enumeration_first_parent_most_significant():
    p = parameterize(builtin_model("iv_base"))
    x = p.variables[0]
    # function index 1 is the truth table (0, 1) over z: identity
    assert x.functions[1] == (0, 1)
    assert [x(1, {"Z": z}) for z in (0, 1)] == [0, 1]


def test_mediator_has_no_lp_parameterization():
    with pytest.raises(ModelError, match="no LP parameterization"):
        parameterize(builtin_model("mediator"))


def test_unknown_builtin_lists_ids():
    with pytest.raises(UnknownModelError) as exc:
        builtin_model("zz")
    assert "iv_base" in str(exc.value)


@pytest.mark.parametrize("kwargs,msg", [
    (dict(edges=(("X", "Y"), ("Y", "X"))), "cyclic"),
    (dict(left_block=("Z", "X"), right_block=("Y",)), "right block"),
    (dict(left_block=(), right_block=("X", "Y")), "no block"),
    (dict(edges=(("X", "Z"), ("X", "Y"))), "right to left"),
])
def test_validation_errors(kwargs, msg):
    base = dict(name="t", observed_vars=("Z", "X", "Y"), edges=(("Z", "X"), ("X", "Y")),
                left_block=("Z",), right_block=("X", "Y"))
    base.update(kwargs)
    with pytest.raises(ModelError, match=msg):
        CausalModel(**base)


def test_json_round_trip(tmp_path):
    m = builtin_model("d")
    path = tmp_path / "d.json"
    path.write_text(json.dumps(m.to_json()))
    assert load_model(path) == m


def test_iv_covariate_class_membership():
    assert builtin_model("e").in_iv_covariate_class()
    assert builtin_model("a").in_iv_covariate_class()
    assert not builtin_model("iv_base").in_iv_covariate_class()


def test_potential_outcomes_are_left_invariant():
    p = parameterize(builtin_model("e"))
    y1, y0 = p.potential_outcome(1), p.potential_outcome(0)
    assert y1.shape == y0.shape == (512,)
    # Y's own response function fully determines both potential outcomes
    assert 0 < y1.mean() < 1
