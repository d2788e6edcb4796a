import math

import numpy as np
import pandas as pd
import pytest

from conftest import small_lattice, small_store
from geomv.application.use_cases import multiverse
from geomv.application.use_cases.blinding import make_key
from geomv.application.use_cases.season_metrics import metric_summary
from geomv.application.use_cases.multiverse import (
    RESULT_COLUMNS,
    Z_95,
    aggregate,
    compare_groups,
    compare_to_baseline,
    count_tasks,
    difference_test,
    enumerate_datasets,
    enumerate_tasks,
    focus_lattice,
    marker_matrix,
    mean_loglik,
    paper_lattice,
    proportion_interval,
    run_lattice,
    share_significant,
    spec_curve,
    spec_curve_panels,
    validate_lattice,
)
from geomv.domain.entities.feature import Method
from geomv.domain.entities.lattice import DesignLattice, Estimate, RegressionTask, Statistic, Verdict
from geomv.domain.entities.regression import ALL_SPECS
from geomv.domain.errors import EmptySubsetError, LatticeError



def results_table(rows):
    """Minimal results frame from (method, country, beta1, se1, p1, loglik) tuples."""
    frame = pd.DataFrame(rows, columns=["method", "country", "beta1", "se1", "p1", "loglik"])
    frame["task_id"] = [f"t{i:04d}" for i in range(len(frame))]
    frame["n_clusters"] = 30
    frame["n_obs"] = 90
    frame["status"] = "ok"
    for axis, value in (("product", "rain_a"), ("outcome", "yield"), ("spec", "linear"), ("family", "rainfall"),
                        ("metric", "total_mm")):
        frame[axis] = value
    return frame


class TestCardinality:
    def test_full_scale_lattice(self):
        lattice = paper_lattice()
        assert count_tasks(lattice) == 51_840
        tasks = enumerate_tasks(lattice)
        assert len(tasks) == 51_840
        assert len({t.task_id for t in tasks}) == 51_840

    def test_panel_counts(self):
        tasks = enumerate_tasks(paper_lattice())
        per_spec = [t for t in tasks if t.spec.name == "linear_fe"]
        assert len(per_spec) == 12_960
        rain_column = [t for t in tasks if t.method is Method.EA_ZONE and t.family == "rainfall"]
        temp_column = [t for t in tasks if t.method is Method.EA_ZONE and t.family == "temperature"]
        assert len(rain_column) == 4_032
        assert len(temp_column) == 1_152
        assert len([t for t in rain_column if t.country == "malawi"]) == 672
        assert len([t for t in temp_column if t.country == "malawi"]) == 192
        assert len([t for t in tasks if t.country == "uganda" and t.family == "rainfall"]) == 6_720

    def test_focus_lattice(self):
        focus = focus_lattice(paper_lattice())
        assert focus.rainfall_metrics == ("mean_daily_mm", "no_rain_days")
        assert focus.temperature_metrics == ("mean_c", "gdd_days")
        assert count_tasks(focus) == 6 * (6 * 2 + 3 * 2) * 10 * 2 * 4

    def test_dataset_inventory(self):
        lattice = paper_lattice()
        waves = [f"wave{i:02d}" for i in range(17)]
        products = [p.name for p in lattice.products]
        key = make_key(
            list(Method),
            [p.name for p in lattice.products if p.family == "rainfall"],
            [p.name for p in lattice.products if p.family == "temperature"],
            seed=1,
        )
        datasets = enumerate_datasets(waves, products, Method, key)
        assert len(datasets) == 1_530
        assert len({d.code for d in datasets}) == 1_530
        assert not any("hh_" in d.code or "chirps" in d.code for d in datasets)


class TestTasks:
    def test_ids_are_stable_hex(self):
        a = RegressionTask("malawi", "chirps", "rainfall", Method.EA_ZONE, "total_mm", "yield", ALL_SPECS[0])
        b = RegressionTask("malawi", "chirps", "rainfall", Method.EA_ZONE, "total_mm", "yield", ALL_SPECS[0])
        assert a.task_id == b.task_id
        assert len(a.task_id) == 16
        int(a.task_id, 16)

    def test_order_follows_axes(self):
        tasks = enumerate_tasks(small_lattice())
        assert [t.spec.name for t in tasks[:4]] == [s.name for s in ALL_SPECS]
        assert tasks[0].method is Method.HH_BILINEAR
        assert tasks[-1].method is Method.ADMIN_ZONE

    def test_validation(self):
        with pytest.raises(LatticeError):
            validate_lattice(small_lattice(methods=()))
        lattice = small_lattice()
        with pytest.raises(LatticeError):
            validate_lattice(DesignLattice(**{**lattice.__dict__, "rainfall_metrics": ()}))
        with pytest.raises(LatticeError):
            validate_lattice(DesignLattice(**{**lattice.__dict__, "rainfall_metrics": ("mean_c",)}))
        with pytest.raises(LatticeError):
            validate_lattice(DesignLattice(**{**lattice.__dict__, "outcomes": ("profit",)}))


class TestIntervals:
    def test_wald(self):
        lo, hi = proportion_interval(0.5, 100)
        assert hi - 0.5 == pytest.approx(Z_95 * 0.05)
        assert lo == pytest.approx(1.0 - hi)

    def test_wald_collapses_at_zero(self):
        assert proportion_interval(0.0, 50) == (0.0, 0.0)

    def test_wilson_stays_inside_unit_interval(self):
        lo, hi = proportion_interval(0.0, 50, "wilson")
        assert lo == pytest.approx(0.0, abs=1e-12)
        assert 0.0 < hi < 0.1

    def test_share_significant(self):
        frame = pd.DataFrame({"p1": [0.001, 0.02, 0.07, 0.5], "status": ["ok"] * 4})
        shares = share_significant(frame)
        assert shares[0.10].value == 0.75
        assert shares[0.05].value == 0.5
        assert shares[0.01].value == 0.25
        assert shares[0.05].n == 4

    @pytest.mark.parametrize("seed", range(20))
    def test_share_grows_with_alpha(self, seed):
        rng = np.random.default_rng(seed)
        p = rng.beta(0.5, 2.0, size=int(rng.integers(1, 200)))
        frame = pd.DataFrame({"p1": p, "status": ["ok"] * len(p)})
        shares = share_significant(frame)
        assert shares[0.01].value <= shares[0.05].value <= shares[0.10].value

    def test_intervals_share_one_critical_value(self):
        assert Z_95 == 1.96
        lo, hi = proportion_interval(0.5, 100)
        loglik = mean_loglik(pd.DataFrame({"loglik": [-1.0, 1.0] * 50, "status": ["ok"] * 100}))
        summary = metric_summary(
            pd.DataFrame({"method": "a", "harvest_year": 2001, "metric_name": "total_mm", "value": [-1.0, 1.0] * 50})
        ).iloc[0]
        sd = float(np.std([-1.0, 1.0] * 50, ddof=1))
        assert hi - 0.5 == pytest.approx(1.96 * 0.05, rel=1e-12)
        assert loglik.hi - loglik.value == pytest.approx(1.96 * sd / 10.0, rel=1e-12)
        assert summary["ci_hi"] - summary["mean"] == pytest.approx(loglik.hi - loglik.value, rel=1e-12)

    def test_share_of_nothing(self):
        with pytest.raises(EmptySubsetError):
            share_significant(pd.DataFrame({"p1": [], "status": []}))

    def test_mean_loglik(self):
        frame = pd.DataFrame({"loglik": [-10.0, -12.0, -14.0], "status": ["ok", "ok", "ok"]})
        est = mean_loglik(frame)
        assert est.value == -12.0
        assert est.hi - est.value == pytest.approx(Z_95 * 2.0 / math.sqrt(3))

    def test_single_loglik_has_no_interval(self):
        est = mean_loglik(pd.DataFrame({"loglik": [-3.0], "status": ["ok"]}))
        assert math.isnan(est.lo) and math.isnan(est.hi)
        assert est.flags == {"single_result"}


class TestDifferenceTest:
    @pytest.mark.parametrize(
        "a, b, verdict",
        [
            (Estimate(1.0, 0.5, 1.5), Estimate(1.1, 0.6, 1.6), Verdict.NOT_DIFFERENT),
            (Estimate(1.0, 0.9, 1.1), Estimate(1.3, 1.05, 1.55), Verdict.WEAK),
            (Estimate(1.0, 0.9, 1.1), Estimate(2.0, 1.9, 2.1), Verdict.STRONG),
            (Estimate(1.0, 0.0, 2.0), Estimate(1.5, 1.45, 1.55), Verdict.WEAK),
        ],
    )
    def test_verdicts(self, a, b, verdict):
        assert difference_test(a, b).verdict is verdict
        assert difference_test(b, a).verdict is verdict

    def test_missing_interval_is_never_different(self):
        a = Estimate(1.0, float("nan"), float("nan"))
        b = Estimate(5.0, 4.9, 5.1)
        assert difference_test(a, b, Statistic.MEAN_LOGLIK).verdict is Verdict.NOT_DIFFERENT


class TestAggregation:
    def test_aggregate_by_method(self):
        frame = results_table(
            [("hh_bilinear", "malawi", 0.3, 0.1, p, -50.0) for p in (0.01, 0.02, 0.2)]
            + [("admin_zone", "malawi", 0.1, 0.1, p, -55.0) for p in (0.3, 0.4, 0.01)]
        )
        table = aggregate(frame, Statistic.SHARE_SIGNIFICANT, ["method"])
        assert list(table.columns) == ["method", "value", "lo", "hi", "n", "flags"]
        assert table.set_index("method")["value"].to_dict() == pytest.approx(
            {"admin_zone": 1 / 3, "hh_bilinear": 2 / 3}
        )

    def test_error_rows_are_ignored(self):
        frame = results_table([("hh_bilinear", "malawi", 0.3, 0.1, 0.01, -50.0)] * 2)
        frame.loc[1, "status"] = "error"
        frame.loc[1, "p1"] = np.nan
        table = aggregate(frame, Statistic.SHARE_SIGNIFICANT, ["method"])
        assert table["n"].tolist() == [1]

    def test_compare_to_baseline(self):
        rows = [("hh_bilinear", "malawi", 0.3, 0.1, 0.01, ll) for ll in (-50.0, -50.5, -49.5, -50.2)]
        rows += [("admin_zone", "malawi", 0.1, 0.1, 0.3, ll) for ll in (-80.0, -80.5, -79.5, -80.2)]
        rows += [("hh_simple", "malawi", 0.3, 0.1, 0.01, ll) for ll in (-50.1, -50.4, -49.6, -50.0)]
        frame = results_table(rows)
        verdicts = compare_to_baseline(frame, Statistic.MEAN_LOGLIK, ["country"])
        by_method = verdicts.set_index("method")["verdict"].to_dict()
        assert by_method == {"admin_zone": "strong", "hh_simple": "not_different"}
        assert set(verdicts["baseline"]) == {"hh_bilinear"}

    def test_compare_groups(self):
        rows = [("hh_bilinear", "malawi", 0.3, 0.1, p, -50.0) for p in [0.01] * 40]
        rows += [("hh_bilinear", "niger", 0.3, 0.1, p, -50.0) for p in [0.5] * 40]
        table = compare_groups(results_table(rows), "country")
        assert table[["level_a", "level_b", "verdict"]].values.tolist() == [["malawi", "niger", "strong"]]


class TestSpecCurve:
    def test_ordering_bounds_and_markers(self):
        frame = results_table(
            [
                ("hh_bilinear", "malawi", 0.5, 0.1, 0.001, -1.0),
                ("admin_zone", "malawi", -0.2, 0.1, 0.08, -1.0),
                ("hh_simple", "malawi", 0.5, 0.2, 0.03, -1.0),
            ]
        )
        curve = spec_curve(frame)
        assert curve["beta1"].tolist() == [-0.2, 0.5, 0.5]
        # equal coefficients keep task order
        assert curve["task_id"].tolist() == ["t0001", "t0000", "t0002"]
        assert curve["significant"].tolist() == [False, True, True]
        assert (curve["ci_lo"] < curve["beta1"]).all() and (curve["beta1"] < curve["ci_hi"]).all()

        matrix = marker_matrix(curve, ["method"])
        assert list(matrix.index.get_level_values("level")) == ["admin_zone", "hh_bilinear", "hh_simple"]
        assert matrix.loc[("method", "admin_zone")].tolist() == [True, False, False]

    def test_panels_split_by_country(self):
        frame = results_table(
            [("hh_bilinear", "malawi", 0.5, 0.1, 0.01, -1.0), ("hh_bilinear", "niger", 0.1, 0.1, 0.4, -1.0)]
        )
        panels = spec_curve_panels(frame)
        assert sorted(panels) == [
            ("malawi", "rainfall", "total_mm", "linear"),
            ("niger", "rainfall", "total_mm", "linear"),
        ]


class TestRunLattice:
    def test_results_in_task_order(self, rng):
        tasks = enumerate_tasks(small_lattice())
        results = run_lattice(tasks, small_store(rng))
        assert results["task_id"].tolist() == [t.task_id for t in tasks]
        assert (results["status"] == "ok").all()
        assert list(results.columns[: len(RESULT_COLUMNS)]) == RESULT_COLUMNS

    def test_exactly_identified_panel_is_an_error_row(self, rng):
        store = small_store(rng)
        key = ("ethiopia", "rain_a", Method.ADMIN_ZONE.value)
        # two households, one year each: as many rows as pooled linear parameters
        store.metrics[key] = store.metrics[key].iloc[[0, 3]].reset_index(drop=True)
        tasks = enumerate_tasks(small_lattice())
        results = run_lattice(tasks, store)

        assert len(results) == len(tasks)
        admin = results[results["method"] == Method.ADMIN_ZONE.value]
        assert (admin["status"] == "error").all()
        linear = admin[admin["spec"] == "linear"]
        assert linear["error"].str.startswith("DegenerateFitError").all()
        assert (results.loc[results["method"] == Method.HH_BILINEAR.value, "status"] == "ok").all()
        assert results["n_clusters"].eq(25).all()
        hh = results[
            (results["method"] == "hh_bilinear")
            & (results["metric"] == "mean_daily_mm")
            & results["spec"].isin(["linear", "linear_fe"])
        ]
        assert (hh["p1"] < 0.01).all()

    def test_errors_do_not_abort(self, rng):
        lattice = small_lattice(methods=(Method.HH_BILINEAR, Method.EA_ZONE, Method.ADMIN_ZONE))
        tasks = enumerate_tasks(lattice)
        results = run_lattice(tasks, small_store(rng))
        failed = results[results["method"] == "ea_zone"]
        assert len(failed) == 8
        assert (failed["status"] == "error").all()
        assert failed["error"].str.startswith("DataError").all()
        assert failed["beta1"].isna().all()
        assert (results.loc[results["method"] != "ea_zone", "status"] == "ok").all()

    def test_parallel_matches_serial(self, rng):
        tasks = enumerate_tasks(small_lattice())
        store = small_store(rng)
        serial = run_lattice(tasks, store, parallelism=1)
        parallel = run_lattice(tasks, store, parallelism=2)
        pd.testing.assert_frame_equal(serial, parallel)

    def test_fit_is_called_once_per_task(self, rng, monkeypatch):
        calls = []
        real_fit = multiverse.fit

        def counting_fit(panel, spec):
            calls.append(spec.name)
            return real_fit(panel, spec)

        monkeypatch.setattr(multiverse, "fit", counting_fit)
        tasks = enumerate_tasks(small_lattice())
        run_lattice(tasks, small_store(rng))
        assert len(calls) == len(tasks)
