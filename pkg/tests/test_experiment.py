import io

import numpy as np
import pytest

from delaymatch.core import make_requests
from delaymatch.embedding import build_hsbt, sample_hsbt, tree_metric
from delaymatch.errors import ConfigInvalid
from delaymatch.experiment import (
    CSV_COLUMNS,
    ExperimentConfig,
    check_flush_budget,
    offline_baseline,
    run_experiment,
    trial_rng,
    trial_seed,
)
from delaymatch.instances import gen_random
from delaymatch.metric import MetricSpace, stats
from delaymatch.stiltwalker import TimerMode


def small_instance(seed=0, n_points=5, n_requests=8):
    rng = np.random.default_rng(seed)
    return gen_random("uniform", n_points, n_requests, horizon=3.0, rng=rng)


def test_trial_seed_is_deterministic_and_spread():
    assert trial_seed(7, 3) == trial_seed(7, 3)
    seeds = {trial_seed(7, t) for t in range(50)}
    assert len(seeds) == 50
    assert trial_seed(8, 3) != trial_seed(7, 3)
    a = trial_rng(1, 2).random()
    assert a == trial_rng(1, 2).random()
    assert a != trial_rng(1, 3).random()


def test_config_validation():
    space, reqs = small_instance()
    with pytest.raises(ConfigInvalid):
        ExperimentConfig(space, reqs, trials=0).validated()
    with pytest.raises(ConfigInvalid):
        ExperimentConfig(space, reqs, master_seed=-1).validated()
    with pytest.raises(ConfigInvalid):
        ExperimentConfig(space, reqs, penalty=0.0).validated()
    tree = sample_hsbt(space, np.random.default_rng(0))
    with pytest.raises(ConfigInvalid):
        ExperimentConfig(space, reqs, penalty=1.0, fixed_tree=tree).validated()


def test_reports_are_byte_identical_across_runs():
    space, reqs = small_instance(3)
    cfg = ExperimentConfig(space, reqs, trials=5, master_seed=11)
    a, b = run_experiment(cfg), run_experiment(cfg)
    buf_a, buf_b = io.StringIO(), io.StringIO()
    a.to_csv(buf_a)
    b.to_csv(buf_b)
    assert buf_a.getvalue() == buf_b.getvalue()
    assert a.to_text() == b.to_text()
    assert "np.float64" not in buf_a.getvalue()
    assert "np.float64" not in a.to_text()


def test_csv_shape_and_header():
    space, reqs = small_instance(4)
    report = run_experiment(ExperimentConfig(space, reqs, trials=3))
    buf = io.StringIO()
    report.to_csv(buf)
    lines = buf.getvalue().strip().splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert len(lines) == 4
    first = lines[1].split(",")
    assert first[0] == "0"
    assert float(first[5]) == report.records[0].total


def test_same_point_pair_gives_ratio_exactly_one():
    space = MetricSpace(
        ["o", "far"], np.array([[0.0, 50.0], [50.0, 0.0]])
    )
    reqs = make_requests(space, [("o", 0.0), ("o", 0.7)])
    report = run_experiment(ExperimentConfig(space, reqs, trials=4, master_seed=2))
    assert report.opt_total == pytest.approx(0.7)
    assert all(r.ratio == 1.0 for r in report.records)
    assert report.ratio_ci95 == 0.0
    assert report.residual == pytest.approx(0.0, abs=1e-12)


def test_online_never_undercuts_exact_optimum():
    for seed in range(5):
        space, reqs = small_instance(20 + seed)
        report = run_experiment(
            ExperimentConfig(space, reqs, trials=6, master_seed=seed)
        )
        assert report.opt.optimal
        for r in report.records:
            assert r.total >= report.opt_total * (1 - 1e-9) - 1e-12
            assert r.ratio >= 1.0 - 1e-9


def test_fixed_tree_with_deterministic_mode_collapses_trials():
    space, reqs = small_instance(6)
    tree = sample_hsbt(space, np.random.default_rng(42))
    cfg = ExperimentConfig(
        space,
        reqs,
        trials=4,
        mode=TimerMode.DETERMINISTIC,
        fixed_tree=tree,
    )
    report = run_experiment(cfg)
    totals = {r.total for r in report.records}
    assert len(totals) == 1
    assert report.to_dict()["fixed_tree"] is True


def test_penalty_experiment_records_clears():
    space, reqs = small_instance(8, n_points=4, n_requests=8)
    p = stats(space).d_min
    report = run_experiment(
        ExperimentConfig(space, reqs, trials=5, master_seed=3, penalty=p)
    )
    assert report.opt.optimal
    for r in report.records:
        assert r.total >= report.opt_total * (1 - 1e-9) - 1e-12
        assert r.c_end is None
    assert report.to_dict()["c_end_mean"] is None


def test_flushed_runs_record_c_end_under_ceiling():
    space, reqs = small_instance(9)
    report = run_experiment(ExperimentConfig(space, reqs, trials=6, master_seed=1))
    values = report.c_end_values
    assert len(values) == 6
    assert report.to_dict()["c_end_max"] == max(values)


def test_offline_baseline_falls_back_to_greedy():
    space, reqs = small_instance(10, n_points=6, n_requests=18)
    sol = offline_baseline(space, reqs)
    assert not sol.optimal  # 18 > exact cap, greedy upper bound instead
    small = offline_baseline(space, reqs[:8])
    assert small.optimal


def test_offline_baseline_penalty_fallback_clears_everything():
    space, reqs = small_instance(11, n_points=6, n_requests=14)
    sol = offline_baseline(space, reqs, penalty=0.01)
    assert not sol.optimal
    assert len(sol.schedule.clears) == len(reqs)


def test_check_flush_budget_on_two_leaf_tree():
    tree = build_hsbt([-1, 0, 0], [2.0, 0.0, 0.0], {1: "a", 2: "b"}, alpha=2.0)
    space = tree_metric(tree)
    reqs = make_requests(space, [("a", 0.0), ("b", 1e-6)])
    report = check_flush_budget(tree, reqs, trials=400, master_seed=0)
    # extra waiting is 2 Exp(w) against a budget of exactly 2w, so the paired
    # mean sits at zero: well inside three standard errors
    assert report.ok
    assert report.budget_mean == pytest.approx(2 * 2.0)
    assert report.extra_mean == pytest.approx(2 * 2.0, rel=0.2)
    with pytest.raises(ConfigInvalid):
        check_flush_budget(tree, reqs, trials=1)
