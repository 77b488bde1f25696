import csv
import io
import json
import math

import numpy as np
import pytest

from tensorfill.datagen import generate_lowrank, generate_smooth
from tensorfill.harness import (
    REPORT_COLUMNS,
    ExperimentReport,
    ExperimentSpec,
    ReportRow,
    cross_dataset_completion,
    evaluate,
    lambda_sensitivity,
    rank_scan,
    run_benchmark,
    sparsity_sweep,
    stack_tensors,
    timing_report,
)
from tensorfill.methods import MethodSpec, method
from tensorfill.tensor import DenseTensor, ShapeError, sample_observed
from tensorfill.training import TrainConfig

QUICK = TrainConfig(max_epochs=150)


@pytest.fixture(scope="module")
def rank1():
    return generate_lowrank((8, 8, 8), 1, seed=0, name="r1")


def row(method_name, mae, rep=0):
    return ReportRow("t", method_name, "1", None, 0.1, rep, rep, mae, mae, mae, 0.01, "converged")


class TestEvaluate:
    def test_scores_unobserved_only(self, rank1):
        obs = sample_observed(rank1, 0.2, 0)
        pred = rank1.values.copy()
        pred[tuple(obs.indices.T)] += 100.0  # errors on observed entries are ignored
        assert evaluate(DenseTensor(pred), rank1, obs) == {"mae": 0.0, "rmse": 0.0, "nerr": 0.0}


@pytest.fixture(scope="module")
def report(rank1):
    methods = [MethodSpec("cpd", rank=1, train=TrainConfig()),
               MethodSpec("cpd-s", rank=1, train=QUICK), MethodSpec("tucker", rank=1, train=QUICK)]
    return run_benchmark(ExperimentSpec(rank1, methods, (0.2,), repetitions=5))


class TestBenchmark:
    def test_row_count(self, report):
        assert len(report.rows) == 5 * 4
        assert {r.method for r in report.rows} == {"naive", "cpd", "cpd-s", "tucker"}

    def test_rank_one_recovered(self, report):
        # one repetition may stop early on a plateau; most must recover exactly
        maes = np.array([r.mae for r in report.select(method="cpd")])
        assert np.sum(maes < 1e-3) >= 4
        assert report.mean("mae", method="naive") > 10 * maes.mean()

    def test_same_observations_per_rep(self, report):
        for rep in range(5):
            assert {r.seed for r in report.select(rep=rep)} == {rep}

    def test_aggregate(self, report):
        for agg in report.aggregate():
            maes = [r.mae for r in report.select(method=agg["method"])]
            assert agg["n"] == 5
            assert agg["mae"]["mean"] == pytest.approx(np.mean(maes), rel=1e-12)
            assert agg["mae"]["std"] == pytest.approx(np.std(maes, ddof=1), rel=1e-12)

    def test_csv_layout(self, report):
        rows = list(csv.reader(io.StringIO(report.to_csv())))
        assert tuple(rows[0]) == REPORT_COLUMNS and len(rows) == 21
        assert all(len(r) == len(REPORT_COLUMNS) for r in rows)

    def test_json(self, report):
        doc = json.loads(report.to_json())
        assert len(doc["rows"]) == 20 and len(doc["aggregates"]) == 4

    def test_write(self, report, tmp_path):
        report.write(tmp_path / "r.csv")
        assert (tmp_path / "r.csv").read_text() == report.to_csv()
        assert json.loads((tmp_path / "r.json").read_text())["aggregates"]


class TestReport:
    def test_single_row_std_zero(self):
        assert ExperimentReport([row("a", 0.5)]).aggregate()[0]["mae"] == {"mean": 0.5, "std": 0.0}

    def test_failed_runs_ignored_in_stats(self):
        rep = ExperimentReport([row("a", 0.2), row("a", math.nan, 1), row("a", 0.4, 2)])
        assert rep.mean("mae") == pytest.approx(0.3)

    def test_timing_without_ensembles(self):
        t = ExperimentReport([row("a", 0.1), row("a", 0.2, 1)]).timing()
        assert t[0]["seconds_mean"] == pytest.approx(0.01) and t[0]["ideal_parallel_seconds"] is None

    def test_timing_divides_by_bases(self):
        rep = ExperimentReport([row("ens", 0.1)], {"n_bases": {"ens": 4}})
        assert rep.timing()[0]["ideal_parallel_seconds"] == pytest.approx(0.0025)


class TestSpec:
    def test_naive_added_once(self, rank1):
        assert [m.family for m in ExperimentSpec(rank1, ["cpd"]).methods] == ["naive", "cpd"]
        assert [m.family for m in ExperimentSpec(rank1, ["naive", "cpd"]).methods] == ["naive", "cpd"]
        assert [m.family for m in ExperimentSpec(rank1, ["cpd"], include_naive=False).methods] == ["cpd"]

    @pytest.mark.parametrize("kw", [{"repetitions": 0}, {"fractions": (0.0,)}, {"fractions": (1.0,)}])
    def test_rejects(self, rank1, kw):
        with pytest.raises(ValueError):
            ExperimentSpec(rank1, ["cpd"], **kw)

    def test_failure_recorded_not_raised(self, rank1):
        bad = MethodSpec("tt", rank=[1, 2, 3, 4, 5], train=QUICK)
        rep = run_benchmark(ExperimentSpec(rank1, [bad], (0.1,), 1, include_naive=False))
        assert math.isnan(rep.rows[0].mae) and rep.rows[0].stop_reason.startswith("error")


class TestSweep:
    def test_denser_is_better(self, rank1):
        rep = sparsity_sweep([rank1], [MethodSpec("cpd", rank=1)], fractions=(0.01, 0.10), repetitions=2)
        assert len(rep.aggregate()) == 2 * 2
        assert rep.mean(method="cpd", fraction=0.10) <= rep.mean(method="cpd", fraction=0.01)


class TestLambda:
    def test_zero_weight_is_plain_cpd(self):
        t = generate_smooth((6, 6, 6), 1.0, seed=1, name="s")
        rep = lambda_sensitivity(t, lambdas=(0.0, 1.0), fraction=0.1, repetitions=2, rank=2, train=QUICK)
        for r in range(2):
            cpd = rep.select(method="cpd", rep=r)[0]
            zero = [x for x in rep.select(method="cpd-s", rep=r) if x.lam == 0.0][0]
            assert zero.mae == cpd.mae
        assert {x.lam for x in rep.select(method="cpd-s")} == {0.0, 1.0}
        assert len(rep.select(method="naive")) == 2


class TestRankScan:
    def test_single_point(self, rank1):
        ((r, err),) = rank_scan(rank1, [1])
        assert r == 1 and err < 1e-3


class TestCrossDataset:
    def test_stack_order(self):
        a, b = DenseTensor(np.zeros((2, 3)), name="a"), DenseTensor(np.ones((2, 3)), name="b")
        s = stack_tensors([a, b])
        assert s.shape == (2, 2, 3) and s.name == "a+b" and s.values[1].all()

    def test_stack_shape_mismatch(self):
        with pytest.raises(ShapeError):
            stack_tensors([DenseTensor(np.zeros((2, 3))), DenseTensor(np.zeros((3, 2)))])

    def test_single_tensor_joint_equals_single(self, rank1):
        spec = method("tensemble-cpd-median", ranks=(1, 2), train=QUICK)
        rep = cross_dataset_completion([rank1], target_fraction=0.1, spec=spec, repetitions=1)
        joint, single = rep.rows
        assert joint.method.endswith("+dataset") and joint.mae == single.mae

    def test_exact_sibling_helps(self):
        t = generate_lowrank((6, 6, 6), 1, seed=3, name="t")
        copy = DenseTensor(t.values.copy(), name="copy")
        spec = MethodSpec("cpd", rank=1)
        rep = cross_dataset_completion([t, copy], target_fraction=0.05, context_fraction=0.5, spec=spec,
                                       repetitions=2)
        assert rep.mean(method="cpd+dataset") <= rep.mean(method="cpd")
        assert rep.extras["n_tensors"] == 2


def test_timing_report(rank1):
    rep = timing_report(ExperimentSpec(rank1, [MethodSpec("cpd", rank=1, train=QUICK)], (0.1,), 2))
    assert all(t["seconds_mean"] > 0 for t in rep.extras["timing"])
