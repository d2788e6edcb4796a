"""Design lattice, resumable regression harness and the aggregation heuristics."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace
from itertools import combinations, islice
from typing import Dict, Iterable, Iterator, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import stats

from geomv.application.interfaces.repositories.journal_repository import JournalRecord, JournalRepository
from geomv.application.use_cases.econometrics import fit
from geomv.config import settings
from geomv.domain.entities.feature import BASELINE_METHOD, Method
from geomv.domain.entities.lattice import (
    OUTCOMES,
    BlindingKey,
    DesignLattice,
    Estimate,
    HeuristicVerdict,
    Product,
    RegressionTask,
    Statistic,
    Verdict,
    Z_95,
)
from geomv.domain.entities.raster import Variable
from geomv.domain.entities.regression import ALL_SPECS, RegressionSpec
from geomv.domain.entities.season import CALENDARS
from geomv.domain.errors import DataError, EmptySubsetError, GeomvError, LatticeError
from geomv.domain.registry import RAINFALL, TEMPERATURE, metric_names
from geomv.logging_config import logger

ALPHA_LEVELS = (0.10, 0.05, 0.01)

RESULT_COLUMNS = ["task_id", "beta1", "se1", "p1", "beta2", "se2", "p2", "loglik", "n_obs", "n_clusters"]
AXIS_COLUMNS = ["country", "product", "family", "method", "metric", "outcome", "spec"]
EXTRA_COLUMNS = ["n_dropped", "dof_used", "status", "error"]

FOCUS_METRICS = {RAINFALL: ("mean_daily_mm", "no_rain_days"), TEMPERATURE: ("mean_c", "gdd_days")}

PAPER_RAINFALL_PRODUCTS = ("arc2", "chirps", "cpc_rf", "era5_rf", "merra2_rf", "tamsat")
PAPER_TEMPERATURE_PRODUCTS = ("cpc_tp", "era5_tp", "merra2_tp")


# ---------- lattice ----------


def paper_lattice() -> DesignLattice:
    """Full-scale lattice: six countries, nine products, every method, metric, outcome and spec."""
    products = tuple(Product(p, Variable.PRECIPITATION_MM) for p in PAPER_RAINFALL_PRODUCTS) + tuple(
        Product(p, Variable.TEMPERATURE_C) for p in PAPER_TEMPERATURE_PRODUCTS
    )
    return DesignLattice(
        countries=tuple(CALENDARS),
        products=products,
        methods=tuple(Method),
        rainfall_metrics=metric_names(RAINFALL),
        temperature_metrics=metric_names(TEMPERATURE),
        outcomes=OUTCOMES,
        specs=ALL_SPECS,
    )


def focus_lattice(lattice: DesignLattice) -> DesignLattice:
    """The lattice restricted to the focus metrics drawn as specification curves."""
    return replace(
        lattice,
        rainfall_metrics=tuple(m for m in lattice.rainfall_metrics if m in FOCUS_METRICS[RAINFALL]),
        temperature_metrics=tuple(m for m in lattice.temperature_metrics if m in FOCUS_METRICS[TEMPERATURE]),
    )


def validate_lattice(lattice: DesignLattice) -> None:
    for axis in ("countries", "products", "methods", "outcomes", "specs"):
        if not getattr(lattice, axis):
            raise LatticeError(f"lattice axis {axis!r} is empty")
    families = {p.family for p in lattice.products}
    for family, metrics in ((RAINFALL, lattice.rainfall_metrics), (TEMPERATURE, lattice.temperature_metrics)):
        if family in families and not metrics:
            raise LatticeError(f"lattice has {family} products but no {family} metrics")
        unknown = set(metrics) - set(metric_names(family))
        if unknown:
            raise LatticeError(f"unknown {family} metrics {sorted(unknown)}")
    unknown_outcomes = set(lattice.outcomes) - set(OUTCOMES)
    if unknown_outcomes:
        raise LatticeError(f"unknown outcomes {sorted(unknown_outcomes)}")


def iter_tasks(lattice: DesignLattice) -> Iterator[RegressionTask]:
    validate_lattice(lattice)
    for country in lattice.countries:
        for product in lattice.products:
            for method in lattice.methods:
                for metric in lattice.metrics_for(product):
                    for outcome in lattice.outcomes:
                        for spec in lattice.specs:
                            yield RegressionTask(country, product.name, product.family, Method(method), metric,
                                                 outcome, spec)


def enumerate_tasks(lattice: DesignLattice) -> List[RegressionTask]:
    """Every task, nested over the axes in declared order."""
    return list(iter_tasks(lattice))


def count_tasks(lattice: DesignLattice) -> int:
    validate_lattice(lattice)
    per_product = sum(len(lattice.metrics_for(p)) for p in lattice.products)
    return len(lattice.countries) * per_product * len(lattice.methods) * len(lattice.outcomes) * len(lattice.specs)


# ---------- data access ----------


class PanelStore:
    """Joins metric tables to outcome panels.

    `metrics` is keyed by (country, product, method) and holds wide metric
    frames (household_id, harvest_year, metric columns); `outcomes` is keyed
    by country (household_id, year, yield, harvest_value).
    """

    def __init__(self, metrics: Mapping[Tuple[str, str, str], pd.DataFrame], outcomes: Mapping[str, pd.DataFrame]):
        self.metrics = metrics
        self.outcomes = outcomes

    def panel(self, country: str, product: str, method: Method, metric: str, outcome: str) -> pd.DataFrame:
        key = (country, product, Method(method).value)
        if key not in self.metrics:
            raise DataError(f"no metric table for {key}")
        if country not in self.outcomes:
            raise DataError(f"no outcome panel for {country}")
        table = self.metrics[key]
        if metric not in table.columns:
            raise DataError(f"metric {metric} missing from table {key}")
        weather = table[["household_id", "harvest_year", metric]].rename(
            columns={"harvest_year": "year", metric: "weather"}
        )
        outcomes = self.outcomes[country][["household_id", "year", outcome]].rename(columns={outcome: "outcome"})
        merged = outcomes.merge(weather, on=["household_id", "year"], how="inner")
        return merged.sort_values(["household_id", "year"], kind="mergesort").reset_index(drop=True)


# ---------- execution ----------


@dataclass(frozen=True)
class _Cell:
    panel: Optional[pd.DataFrame]
    error: Optional[str]
    tasks: Tuple[Tuple[str, str], ...]  # (task_id, spec name)


def _describe(exc: Exception) -> str:
    return f"{type(exc).__name__}: {exc}"


def _fit_cell(cell: _Cell) -> List[Tuple[str, str, dict, Optional[str]]]:
    out = []
    for task_id, spec_name in cell.tasks:
        if cell.error is not None:
            out.append((task_id, "error", {}, cell.error))
            continue
        try:
            result = fit(cell.panel, RegressionSpec.parse(spec_name))
        except (GeomvError, ArithmeticError, np.linalg.LinAlgError) as exc:
            out.append((task_id, "error", {}, _describe(exc)))
        else:
            out.append((task_id, "ok", asdict(result), None))
    return out


def _cells(tasks: Sequence[RegressionTask], store: PanelStore) -> Iterator[_Cell]:
    """One cell per distinct (country, product, method, metric, outcome); its tasks differ only by spec."""
    groups: Dict[tuple, List[RegressionTask]] = {}
    for t in tasks:
        groups.setdefault((t.country, t.product, t.method, t.metric, t.outcome), []).append(t)
    for key, members in groups.items():
        ids = tuple((t.task_id, t.spec.name) for t in members)
        try:
            yield _Cell(store.panel(*key), None, ids)
        except GeomvError as exc:
            yield _Cell(None, _describe(exc), ids)


def _batched(iterable, size):
    it = iter(iterable)
    while True:
        batch = list(islice(it, size))
        if not batch:
            return
        yield batch


def run_lattice(
    tasks: Sequence[RegressionTask],
    data_store: PanelStore,
    parallelism: int = 1,
    journal: Optional[JournalRepository] = None,
) -> pd.DataFrame:
    """One result (or error row) per task, in task order.

    Tasks already in the journal are not recomputed. Errors are recorded per
    task and never abort the run. The main process is the only journal writer.
    """
    done: Dict[str, JournalRecord] = journal.completed() if journal is not None else {}
    seq = {t.task_id: i for i, t in enumerate(tasks)}
    pending = [t for t in tasks if t.task_id not in done]
    logger.info(f"lattice: {len(tasks)} tasks, {len(done)} journaled, {len(pending)} to run")

    records: Dict[str, JournalRecord] = dict(done)
    chunksize = max(1, settings.TASK_CHUNKSIZE)
    batch_size = chunksize * max(1, parallelism) * 4
    pool = ProcessPoolExecutor(max_workers=parallelism) if parallelism > 1 else None
    try:
        for batch in _batched(_cells(pending, data_store), batch_size):
            if pool is not None:
                outputs = pool.map(_fit_cell, batch, chunksize=chunksize)
            else:
                outputs = map(_fit_cell, batch)
            fresh = [
                JournalRecord(task_id, seq[task_id], status, payload, error)
                for cell_output in outputs
                for task_id, status, payload, error in cell_output
            ]
            failed = sum(r.status != "ok" for r in fresh)
            if failed:
                logger.warning(f"lattice: {failed} of {len(fresh)} tasks in batch failed")
            if journal is not None:
                journal.record_many(fresh)
            records.update((r.task_id, r) for r in fresh)
    finally:
        if pool is not None:
            pool.shutdown()

    return results_frame(tasks, records)


def results_frame(tasks: Sequence[RegressionTask], records: Mapping[str, JournalRecord]) -> pd.DataFrame:
    rows = []
    for t in tasks:
        rec = records.get(t.task_id)
        if rec is None:
            continue
        payload = rec.payload or {}
        row = {"task_id": t.task_id}
        for col in RESULT_COLUMNS[1:] + ["n_dropped", "dof_used"]:
            value = payload.get(col)
            row[col] = np.nan if value is None else value
        row.update(zip(AXIS_COLUMNS, (t.country, t.product, t.family, t.method.value, t.metric, t.outcome, t.spec.name)))
        row["status"] = rec.status
        row["error"] = rec.error or ""
        rows.append(row)
    return pd.DataFrame(rows, columns=RESULT_COLUMNS + AXIS_COLUMNS + EXTRA_COLUMNS)


# ---------- heuristics ----------


def _ok(results: pd.DataFrame) -> pd.DataFrame:
    if "status" in results.columns:
        results = results[results["status"] == "ok"]
    return results


def proportion_interval(share: float, n: int, ci_method: str = "wald") -> Tuple[float, float]:
    if ci_method == "wilson":
        z2 = Z_95**2
        denom = 1.0 + z2 / n
        center = (share + z2 / (2 * n)) / denom
        half = Z_95 / denom * math.sqrt(share * (1 - share) / n + z2 / (4 * n * n))
        return center - half, center + half
    if ci_method != "wald":
        raise ValueError(f"unknown interval {ci_method!r}")
    half = Z_95 * math.sqrt(share * (1.0 - share) / n)
    return share - half, share + half


def share_significant(
    results: pd.DataFrame,
    alpha_levels: Sequence[float] = ALPHA_LEVELS,
    ci_method: str = "wald",
    column: str = "p1",
) -> Dict[float, Estimate]:
    """Share of p-values below each alpha, with a 95% interval on the share."""
    p = _ok(results)[column].dropna().to_numpy(dtype=np.float64)
    if p.size == 0:
        raise EmptySubsetError("share_significant over an empty subset")
    out = {}
    for alpha in alpha_levels:
        share = float((p < alpha).mean())
        lo, hi = proportion_interval(share, p.size, ci_method)
        out[alpha] = Estimate(share, lo, hi, int(p.size))
    return out


def mean_loglik(results: pd.DataFrame) -> Estimate:
    ll = _ok(results)["loglik"].dropna().to_numpy(dtype=np.float64)
    if ll.size == 0:
        raise EmptySubsetError("mean_loglik over an empty subset")
    mean = float(ll.mean())
    if ll.size == 1:
        return Estimate(mean, float("nan"), float("nan"), 1, frozenset({"single_result"}))
    half = Z_95 * float(ll.std(ddof=1)) / math.sqrt(ll.size)
    return Estimate(mean, mean - half, mean + half, int(ll.size))


def coefficient_estimate(row: Mapping) -> Estimate:
    """beta1 with the 95% interval implied by its clustered t test."""
    beta, se = float(row["beta1"]), float(row["se1"])
    dof = max(int(row["n_clusters"]) - 1, 1)
    half = float(stats.t.ppf(0.975, dof)) * se
    return Estimate(beta, beta - half, beta + half, int(row["n_obs"]))


def difference_test(
    stat_a: Estimate,
    stat_b: Estimate,
    statistic: Statistic = Statistic.COEFFICIENT,
    cell_a: str = "A",
    cell_b: str = "B",
) -> HeuristicVerdict:
    """Weak: either value lies outside the other's interval. Strong: the intervals are disjoint."""
    weak = not (stat_b.lo <= stat_a.value <= stat_b.hi) or not (stat_a.lo <= stat_b.value <= stat_a.hi)
    strong = stat_a.hi < stat_b.lo or stat_b.hi < stat_a.lo
    if not (stat_a.has_interval and stat_b.has_interval):
        weak = strong = False
    if strong:
        verdict = Verdict.STRONG
    elif weak:
        verdict = Verdict.WEAK
    else:
        verdict = Verdict.NOT_DIFFERENT
    return HeuristicVerdict(cell_a, cell_b, Statistic(statistic), verdict)


def _statistic(subset: pd.DataFrame, statistic: Statistic, alpha: float, ci_method: str) -> Estimate:
    statistic = Statistic(statistic)
    if statistic is Statistic.MEAN_LOGLIK:
        return mean_loglik(subset)
    if statistic is Statistic.SHARE_SIGNIFICANT:
        return share_significant(subset, (alpha,), ci_method)[alpha]
    ok = _ok(subset)
    if len(ok) != 1:
        raise EmptySubsetError(f"coefficient statistic needs exactly one result, got {len(ok)}")
    return coefficient_estimate(ok.iloc[0])


def aggregate(
    results: pd.DataFrame,
    statistic: Statistic,
    by: Sequence[str],
    alpha: float = 0.05,
    ci_method: str = "wald",
) -> pd.DataFrame:
    """One estimate per group of `by`."""
    rows = []
    ok = _ok(results)
    for key, subset in ok.groupby(list(by), sort=True):
        key = key if isinstance(key, tuple) else (key,)
        est = _statistic(subset, statistic, alpha, ci_method)
        rows.append((*key, est.value, est.lo, est.hi, est.n, ";".join(sorted(est.flags))))
    return pd.DataFrame(rows, columns=[*by, "value", "lo", "hi", "n", "flags"])


def compare_to_baseline(
    results: pd.DataFrame,
    statistic: Statistic,
    group_axes: Sequence[str],
    baseline: Method = BASELINE_METHOD,
    alpha: float = 0.05,
    ci_method: str = "wald",
) -> pd.DataFrame:
    """difference_test of every method against the baseline method within each group."""
    table = aggregate(results, statistic, [*group_axes, "method"], alpha, ci_method)
    base_value = Method(baseline).value
    rows = []
    groups = table.groupby(list(group_axes), sort=True) if group_axes else [((), table)]
    for key, group in groups:
        key = key if isinstance(key, tuple) else (key,)
        base = group[group["method"] == base_value]
        if base.empty:
            continue
        b = base.iloc[0]
        b_est = Estimate(b["value"], b["lo"], b["hi"], int(b["n"]))
        for _, r in group.iterrows():
            if r["method"] == base_value:
                continue
            est = Estimate(r["value"], r["lo"], r["hi"], int(r["n"]))
            verdict = difference_test(est, b_est, statistic, r["method"], base_value)
            rows.append((*key, r["method"], base_value, Statistic(statistic).value, est.value, est.lo, est.hi,
                         b_est.value, b_est.lo, b_est.hi, verdict.verdict.value))
    columns = [*group_axes, "method", "baseline", "statistic", "value", "lo", "hi",
               "base_value", "base_lo", "base_hi", "verdict"]
    return pd.DataFrame(rows, columns=columns)


def compare_groups(
    results: pd.DataFrame,
    axis: str,
    statistic: Statistic = Statistic.SHARE_SIGNIFICANT,
    within: Sequence[str] = (),
    alpha: float = 0.05,
    ci_method: str = "wald",
) -> pd.DataFrame:
    """Pairwise difference tests between the levels of `axis` (e.g. across countries)."""
    table = aggregate(results, statistic, [*within, axis], alpha, ci_method)
    rows = []
    groups = table.groupby(list(within), sort=True) if within else [((), table)]
    for key, group in groups:
        key = key if isinstance(key, tuple) else (key,)
        records = list(group.itertuples(index=False))
        for a, b in combinations(records, 2):
            ea = Estimate(a.value, a.lo, a.hi, int(a.n))
            eb = Estimate(b.value, b.lo, b.hi, int(b.n))
            verdict = difference_test(ea, eb, statistic, getattr(a, axis), getattr(b, axis))
            rows.append((*key, verdict.cell_a, verdict.cell_b, verdict.statistic.value, verdict.verdict.value))
    return pd.DataFrame(rows, columns=[*within, "level_a", "level_b", "statistic", "verdict"])


# ---------- specification curves ----------

MARK_AXES = ("method", "product", "outcome", "spec")


def spec_curve(results: pd.DataFrame, mark_axes: Sequence[str] = MARK_AXES) -> pd.DataFrame:
    """Results ordered by beta1 (ties broken by task_id) with 95% bounds and p<0.05 flags."""
    ok = _ok(results)
    ok = ok.sort_values(["beta1", "task_id"], kind="mergesort").reset_index(drop=True)
    bounds = [coefficient_estimate(r) for _, r in ok.iterrows()]
    curve = pd.DataFrame(
        {
            "rank": np.arange(len(ok)),
            "task_id": ok["task_id"].to_numpy(),
            "beta1": ok["beta1"].to_numpy(dtype=np.float64),
            "ci_lo": [b.lo for b in bounds],
            "ci_hi": [b.hi for b in bounds],
            "p1": ok["p1"].to_numpy(dtype=np.float64),
        }
    )
    curve["significant"] = curve["p1"] < 0.05
    for axis in mark_axes:
        curve[axis] = ok[axis].to_numpy()
    return curve


def marker_matrix(curve: pd.DataFrame, mark_axes: Sequence[str]) -> pd.DataFrame:
    """Boolean matrix: one row per (axis, level), one column per curve position."""
    rows = {}
    for axis in mark_axes:
        for level in sorted(curve[axis].unique()):
            rows[(axis, level)] = (curve[axis] == level).to_numpy()
    matrix = pd.DataFrame.from_dict(rows, orient="index", columns=curve["rank"].to_numpy())
    matrix.index = pd.MultiIndex.from_tuples(matrix.index, names=["axis", "level"])
    return matrix


def spec_curve_panels(
    results: pd.DataFrame, mark_axes: Sequence[str] = ("method", "product", "outcome")
) -> Dict[Tuple[str, str, str, str], pd.DataFrame]:
    """One curve per country, variable family, metric and specification."""
    panels = {}
    for key, subset in _ok(results).groupby(["country", "family", "metric", "spec"], sort=True):
        panels[key] = spec_curve(subset, mark_axes)
    return panels


# ---------- blinded dataset inventory ----------


@dataclass(frozen=True)
class DatasetLabel:
    country_wave: str
    product: str
    method: Method
    code: str


def enumerate_datasets(
    country_waves: Iterable[str],
    products: Iterable[str],
    methods: Iterable[Method],
    key: Optional[BlindingKey] = None,
) -> List[DatasetLabel]:
    """Every (country-wave, product, method) extraction, labeled by its blinded code when a key is given."""
    products = list(products)
    methods = [Method(m) for m in methods]
    out = []
    for wave in country_waves:
        for product in products:
            for method in methods:
                if key is not None:
                    code = f"{wave}_{key.products[product]}_{key.methods[method]}"
                else:
                    code = f"{wave}_{product}_{method.value}"
                out.append(DatasetLabel(wave, product, method, code))
    return out
