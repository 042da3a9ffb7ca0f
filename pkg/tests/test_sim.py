import math

import numpy as np
import pytest

from covbounds.closedform import BoundsInterval
from covbounds.engine import ca_bounds
from covbounds.model import builtin_model
from covbounds.sim import (
    N_BINS,
    SimRecord,
    SimulationError,
    histogram,
    replicate_seed,
    run_replicate,
    run_simulation,
    sample_mediator_truth,
    summarize,
)


def test_replicate_seed_stable():
    assert replicate_seed(7, "a", 0) == replicate_seed(7, "a", 0)
    assert replicate_seed(7, "a", 0) != replicate_seed(7, "b", 0)
    assert replicate_seed(7, "a", 0) != replicate_seed(8, "a", 0)
    assert 0 <= replicate_seed(7, "f", 99) < 2 ** 64


def test_records_sorted_and_independent_of_chunking():
    a = run_simulation(["b", "a"], 7, master_seed=3, chunk=2)
    b = run_simulation(["a", "b"], 7, master_seed=3, chunk=50)
    assert [(r.setting, r.rep) for r in a] == [(s, i) for s in "ab" for i in range(7)]
    assert [r.row() for r in a] == [r.row() for r in b]


def test_single_coincident_record_summary():
    iv = BoundsInterval(-0.2, 0.3, "cm")
    rec = SimRecord("a", 0, 1, 0.0, iv, BoundsInterval(-0.2, 0.3, "ca"),
                    BoundsInterval(-0.2, 0.3, "co"))
    s = summarize([rec]).settings["a"]
    assert s.table_values() == (1.0, 1.0, 1.0, 1.0, 1.0, 1.0)


def test_undefined_ratios_counted():
    point = BoundsInterval(0.1, 0.1, "cm")
    rec = SimRecord("e", 0, 1, 0.1, point, BoundsInterval(0.1, 0.1, "ca"),
                    BoundsInterval(0.1, 0.1, "co"))
    assert math.isnan(rec.r_co_cm)
    assert rec.row()[-1] == "NA"
    s = summarize([rec]).settings["e"]
    assert all(v == 1 for v in s.undefined.values())
    assert all(sum(h) == 0 for h in s.histograms.values())


def test_histogram_bins():
    counts, undef = histogram([0.5, 0.505, 1.0, 2.0, 3.0, 0.1, math.nan])
    assert undef == 1 and sum(counts) == 6 and len(counts) == N_BINS
    assert counts[0] == 3  # 0.5, 0.505 and the clipped 0.1
    assert counts[50] == 1
    assert counts[-1] == 2


def test_summary_invariants():
    recs = run_simulation(["c", "f"], 40, master_seed=1)
    summ = summarize(recs)
    for s in summ.settings.values():
        for p in (s.p_co_in_cm, s.p_co_in_ca, s.p_ca_in_cm):
            assert 0 <= p <= 1
        for label, h in s.histograms.items():
            assert sum(h) == s.n - s.undefined[label]
        assert s.n_invalid == 0


def test_flags_recomputable_from_row():
    for r in run_simulation(["d"], 20, master_seed=5):
        back = SimRecord.from_row(dict(zip(
            ("setting rep seed theta_true cm_lo cm_hi ca_lo ca_hi co_lo co_hi").split(), r.row()[:10])))
        assert (back.co_in_cm, back.co_in_ca, back.ca_in_cm) == (r.co_in_cm, r.co_in_ca, r.ca_in_cm)


def test_bad_arguments():
    with pytest.raises(ValueError):
        run_simulation(["z"], 1)
    with pytest.raises(ValueError):
        run_simulation(["a"], 0)


def test_failure_reports_seed(monkeypatch):
    import covbounds.sim as sim

    def boom(setting, rep, seed):
        raise RuntimeError("synthetic")

    monkeypatch.setattr(sim, "run_replicate", boom)
    with pytest.raises(SimulationError) as exc:
        sim.run_simulation(["a"], 3, master_seed=9)
    assert exc.value.seed == replicate_seed(9, "a", 0)
    assert str(exc.value.seed) in str(exc.value)


def test_run_replicate_validity():
    for rep in range(30):
        r = run_replicate("e", rep, replicate_seed(0, "e", rep))
        assert r.all_valid()
        assert abs(r.co.lower - r.ca.lower) < 1e-9


@pytest.mark.parametrize("setting", ["a", "b"])
def test_coincident_settings_n500(setting):
    s = summarize(run_simulation([setting], 500, master_seed=11)).settings[setting]
    assert (s.p_co_in_cm, s.p_co_in_ca, s.p_ca_in_cm) == (1.0, 1.0, 1.0)
    for v in (s.mean_r_co_cm, s.mean_r_co_ca, s.mean_r_ca_cm):
        assert abs(v - 1.0) <= 1e-6


def test_setting_f_n500():
    s = summarize(run_simulation(["f"], 500, master_seed=11)).settings["f"]
    assert s.p_ca_in_cm <= 0.01 and s.mean_r_ca_cm > 1


def test_setting_e_n500():
    s = summarize(run_simulation(["e"], 500, master_seed=11)).settings["e"]
    assert abs(s.mean_r_co_ca - 1.0) <= 1e-6


def test_mediator_strictness():
    rng = np.random.default_rng(0)
    widths = [ca_bounds(builtin_model("mediator"), sample_mediator_truth(rng).observed).width
              for _ in range(50)]
    assert np.median(widths) > 0.05
