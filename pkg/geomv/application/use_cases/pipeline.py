"""Manifest-driven pipeline: mask -> extract -> metrics -> run, plus synth and unblind.

Every stage writes into ``<out>/run-<digest>/<stage>/`` through a staging
directory that is renamed into place only once the stage has finished, so a
stage directory either holds complete outputs and a DONE marker or does not
exist. Stages run their missing upstream stages themselves.
"""

from __future__ import annotations

import json
import os
import shutil
from contextlib import contextmanager
from functools import cached_property
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence

import pandas as pd
import tomli_w

from geomv.application.dto.manifest import RunManifest
from geomv.application.use_cases.blinding import (
    KEY_FILE,
    blind,
    blind_name,
    load_key,
    make_key,
    save_key,
    unblind,
    unblind_name,
)
from geomv.application.use_cases.extraction import ExtractionService, PointInterpolation
from geomv.application.use_cases.geomask import build_features, displacement_summary
from geomv.application.use_cases.multiverse import (
    FOCUS_METRICS,
    PanelStore,
    aggregate,
    compare_groups,
    compare_to_baseline,
    enumerate_datasets,
    enumerate_tasks,
    marker_matrix,
    run_lattice,
    spec_curve_panels,
    validate_lattice,
)
from geomv.application.use_cases.season_metrics import long_table, metric_summary, series_metrics, wide_table
from geomv.application.use_cases.synthgen import build_fixture
from geomv.config import settings
from geomv.domain.entities.feature import BASELINE_METHOD, Method, feature_id_for
from geomv.domain.entities.lattice import BlindingKey, Statistic
from geomv.domain.entities.raster import DailySeries, GridStack, Variable
from geomv.domain.errors import ConfigError, FormatError, GeomvError, ManifestError
from geomv.domain.registry import RAINFALL, TEMPERATURE
from geomv.infrastructure.charts.svg import bar_chart, spec_curve_chart
from geomv.infrastructure.database.connection import journal_engine, session_factory
from geomv.infrastructure.database.repositories.sqlalchemy_journal_repository import SQLAlchemyJournalRepository
from geomv.infrastructure.io.ascii_grid import read_ascii_stack, write_ascii_stack
from geomv.infrastructure.io.tables import (
    FLOAT_FORMAT,
    read_features,
    read_households,
    read_outcomes,
    read_polygons,
    read_series_binary,
    read_series_csv,
    write_features,
    write_households,
    write_outcomes,
    write_polygons,
    write_series_binary,
    write_series_csv,
)
from geomv.infrastructure.io.wxstack import read_stack, write_stack
from geomv.logging_config import logger

STAGES = ("mask", "extract", "metrics", "run")
DONE = "DONE"
MANIFEST_ECHO = "manifest.json"
SERIES_SUFFIX = ".wxseries"
MAX_SUFFIX = ".max"

SPEC_CURVE_AXES = ("method", "product", "outcome")
SPEC_CURVE_COLUMNS = [
    "rank", "task_id", "beta1", "ci_lo", "ci_hi", "p1", "significant",
    *SPEC_CURVE_AXES, "country", "family", "metric", "spec",
]


def output_root(manifest: RunManifest) -> Path:
    return Path(settings.OUT or manifest.output_root)


class RunLayout:
    """Content-addressed run directory of one manifest."""

    def __init__(self, manifest: RunManifest):
        self.manifest = manifest
        self.root = output_root(manifest) / f"run-{manifest.digest()}"
        self.sealed = self.root / "sealed"
        self.state = self.root / "state"

    def stage(self, name: str) -> Path:
        return self.root / name

    def done(self, name: str) -> bool:
        return (self.stage(name) / DONE).is_file()

    @cached_property
    def key(self) -> Optional[BlindingKey]:
        """The run's blinding key; created and sealed on first use."""
        if not self.manifest.blinding:
            return None
        path = self.sealed / KEY_FILE
        if path.is_file():
            return load_key(path)
        key = make_key(list(Method), *_products_by_family(self.manifest), seed=self.manifest.seed)
        save_key(key, self.sealed)
        logger.info(f"blinding key sealed at {path}")
        return key

    def label(self, name: str) -> str:
        return blind_name(name, self.key) if self.key is not None else name

    def reveal(self, name: str) -> str:
        return unblind_name(name, self.key) if self.key is not None else name

    def export(self, frame: pd.DataFrame) -> pd.DataFrame:
        return blind(frame, self.key) if self.key is not None else frame

    def manifest_echo(self) -> str:
        return self.label(manifest_json(self.manifest))


def manifest_json(manifest: RunManifest) -> str:
    """Provenance echo; parallelism and output root do not change outputs and are left out."""
    payload = manifest.model_dump(mode="json", exclude={"parallelism", "output_root"})
    return json.dumps(payload, indent=2, sort_keys=True)


def _products_by_family(manifest: RunManifest):
    rainfall = [p.name for p in manifest.product_list() if p.family == RAINFALL]
    temperature = [p.name for p in manifest.product_list() if p.family == TEMPERATURE]
    return rainfall, temperature


@contextmanager
def _staged(layout: RunLayout, name: str, echo: Optional[str] = None) -> Iterator[Path]:
    final = layout.stage(name)
    tmp = layout.root / f".{name}.tmp"
    shutil.rmtree(tmp, ignore_errors=True)
    tmp.mkdir(parents=True)
    try:
        yield tmp
        (tmp / MANIFEST_ECHO).write_text(echo if echo is not None else layout.manifest_echo(), encoding="utf-8")
        (tmp / DONE).write_text(layout.manifest.digest() + "\n", encoding="utf-8")
        shutil.rmtree(final, ignore_errors=True)
        os.replace(tmp, final)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise


def _write_table(frame: pd.DataFrame, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)


# ---------- validation ----------


def _check_path(problems: List[str], where: str, path: Optional[Path], required: bool = True) -> None:
    if path is None:
        if required:
            problems.append(f"{where}: path is required")
        return
    if not Path(path).exists():
        problems.append(f"{where}: {path} does not exist")


def validate(manifest: RunManifest, stage: str) -> None:
    """Check everything `stage` and its upstream stages will touch, before any side effect."""
    if stage not in STAGES:
        raise ValueError(f"unknown stage {stage!r}")
    upto = STAGES.index(stage)
    problems: List[str] = []
    if not manifest.countries:
        problems.append("countries: at least one country is required")
    for name, entry in manifest.countries.items():
        _check_path(problems, f"countries.{name}.households", entry.households)
        _check_path(problems, f"countries.{name}.polygons", entry.polygons)
        if upto >= STAGES.index("run"):
            _check_path(problems, f"countries.{name}.outcomes", entry.outcomes)
    if upto >= STAGES.index("extract"):
        if not manifest.products:
            problems.append("products: at least one product is required")
        for name, entry in manifest.products.items():
            _check_path(problems, f"products.{name}.stack", entry.stack)
            _check_path(problems, f"products.{name}.max_stack", entry.max_stack, required=False)
        if manifest.blinding:
            clash = set(manifest.products) & {m.value for m in Method}
            if clash:
                problems.append(f"products: names {sorted(clash)} collide with method names")
    if upto >= STAGES.index("run"):
        try:
            validate_lattice(manifest.design_lattice())
        except GeomvError as exc:
            problems.append(f"lattice: {exc}")
    if problems:
        raise ManifestError(f"manifest cannot run stage {stage!r}", problems)


# ---------- inputs ----------


def load_stack(path: Path, variable: Variable) -> GridStack:
    """A `.wxstack` file or a directory of daily ASCII grids."""
    path = Path(path)
    stack = read_ascii_stack(path, variable) if path.is_dir() else read_stack(path)
    if stack.variable is not Variable(variable):
        raise FormatError(f"{path}: holds {stack.variable.value}, manifest says {Variable(variable).value}")
    return stack


def _record_window(stack: GridStack, manifest: RunManifest) -> GridStack:
    start = manifest.record_start or stack.start_date
    end = manifest.record_end or stack.end_date
    if (start, end) == (stack.start_date, stack.end_date):
        return stack
    return stack.window(start, end)


def _write_series(
    series: Sequence[DailySeries], directory: Path, stem: str, variable: Variable, layout: RunLayout
) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    coded = [DailySeries(layout.label(s.feature_id), s.start_date, s.values, s.flags) for s in series]
    fmt = layout.manifest.extraction.series_format
    if fmt in ("binary", "both"):
        write_series_binary(coded, directory / f"{stem}{SERIES_SUFFIX}", variable)
    if fmt in ("csv", "both"):
        write_series_csv(coded, directory / f"{stem}.csv")


def _read_series(directory: Path, stem: str, layout: RunLayout) -> List[DailySeries]:
    binary = directory / f"{stem}{SERIES_SUFFIX}"
    stored = read_series_binary(binary) if binary.is_file() else read_series_csv(directory / f"{stem}.csv")
    return [DailySeries(layout.reveal(s.feature_id), s.start_date, s.values, s.flags) for s in stored.values()]


# ---------- stages ----------


def cmd_mask(manifest: RunManifest) -> Path:
    """Masked features for every household and method, one CSV per country."""
    validate(manifest, "mask")
    layout = RunLayout(manifest)
    if layout.done("mask"):
        logger.info(f"mask: {layout.stage('mask')} is up to date")
        return layout.stage("mask")

    params = manifest.mask.params(manifest.seed)
    echo = manifest_json(manifest)
    with _staged(layout, "mask", echo=echo) as out:
        summaries = []
        for country, entry in manifest.countries.items():
            households = read_households(entry.households)
            polygons = read_polygons(entry.polygons)
            features = build_features(households, polygons, params, manifest.parallelism)
            write_features(features, out / f"features_{country}.csv")
            summaries.append(displacement_summary(features, households).assign(country=country))
            logger.info(f"mask: {country}: {len(features)} features for {len(households)} households")
        _write_table(pd.concat(summaries, ignore_index=True), out / "displacement_summary.csv")
    return layout.stage("mask")


def cmd_extract(manifest: RunManifest) -> Path:
    """Daily series for every product and feature, grouped by country, product and method."""
    validate(manifest, "extract")
    layout = RunLayout(manifest)
    if layout.done("extract"):
        logger.info(f"extract: {layout.stage('extract')} is up to date")
        return layout.stage("extract")
    cmd_mask(manifest)

    features = {c: read_features(layout.stage("mask") / f"features_{c}.csv") for c in manifest.countries}
    interpolation = PointInterpolation(manifest.extraction.point_interpolation)
    with _staged(layout, "extract") as out:
        for product, entry in manifest.products.items():
            sources = [("", entry.stack)]
            if entry.max_stack is not None:
                sources.append((MAX_SUFFIX, entry.max_stack))
            for suffix, path in sources:
                stack = _record_window(load_stack(path, entry.variable), manifest)
                service = ExtractionService(stack, interpolation)
                for country, feats in features.items():
                    series = service.extract_all(feats)
                    by_method: Dict[Method, List[DailySeries]] = {}
                    for f, s in zip(feats, series):
                        by_method.setdefault(f.method, []).append(s)
                    target = out / country / layout.label(product)
                    for method, group in by_method.items():
                        _write_series(group, target, layout.label(method.value) + suffix, entry.variable, layout)
            logger.info(f"extract: {product} done for {len(features)} countries")

        waves = [w for c in manifest.countries for w in manifest.waves_of(c)]
        datasets = enumerate_datasets(waves, list(manifest.products), list(Method), layout.key)
        if layout.key is not None:
            inventory = pd.DataFrame([(d.code, d.country_wave) for d in datasets], columns=["code", "country_wave"])
        else:
            inventory = pd.DataFrame(
                [(d.code, d.country_wave, d.product, d.method.value) for d in datasets],
                columns=["code", "country_wave", "product", "method"],
            )
        _write_table(inventory, out / "datasets.csv")
    return layout.stage("extract")


def _regions(manifest: RunManifest, country: str):
    households = read_households(manifest.countries[country].households)
    return {feature_id_for(h.household_id, m): h.season_region for h in households for m in Method}


def cmd_metrics(manifest: RunManifest) -> Path:
    """Wide and long seasonal metric tables per country and product, plus a descriptive summary."""
    validate(manifest, "metrics")
    layout = RunLayout(manifest)
    if layout.done("metrics"):
        logger.info(f"metrics: {layout.stage('metrics')} is up to date")
        return layout.stage("metrics")
    cmd_extract(manifest)

    bounds = manifest.gdd.bounds()
    with _staged(layout, "metrics") as out:
        longs = []
        for country in manifest.countries:
            regions = _regions(manifest, country)
            calendar = manifest.calendar_of(country)
            for product, entry in manifest.products.items():
                source = layout.stage("extract") / country / layout.label(product)
                rows = []
                for method in Method:
                    stem = layout.label(method.value)
                    series = _read_series(source, stem, layout)
                    maxes = None
                    if entry.max_stack is not None:
                        maxes = {s.feature_id: s for s in _read_series(source, stem + MAX_SUFFIX, layout)}
                    rows.extend(series_metrics(series, calendar, regions, entry.variable, bounds, maxes))
                _write_table(layout.export(wide_table(rows)), out / country / f"{layout.label(product)}.csv")
                long = long_table(rows)
                long = long.assign(method=long["feature_id"].str.rpartition(":")[2], product=product, country=country)
                _write_table(layout.export(long), out / country / f"{layout.label(product)}.long.csv")
                longs.append(long)
                logger.info(f"metrics: {country}/{product}: {len(rows)} feature-seasons")
        summary = metric_summary(pd.concat(longs, ignore_index=True), by=("country", "product", "method", "harvest_year"))
        _write_table(layout.export(summary), out / "metric_summary.csv")
    return layout.stage("metrics")


def panel_store(manifest: RunManifest, layout: RunLayout) -> PanelStore:
    metrics = {}
    for country in manifest.countries:
        for product in manifest.products:
            path = layout.stage("metrics") / country / f"{layout.label(product)}.csv"
            wide = pd.read_csv(path, dtype={"feature_id": str, "household_id": str, "method": str, "flags": str})
            if layout.key is not None:
                wide = unblind(wide, layout.key)
            for method, table in wide.groupby("method", sort=False):
                metrics[(country, product, method)] = table.reset_index(drop=True)
    outcomes = {c: read_outcomes(e.outcomes) for c, e in manifest.countries.items()}
    return PanelStore(metrics, outcomes)


def summarize(results: pd.DataFrame, alpha_levels: Sequence[float], ci_method: str = "wald") -> Dict[str, pd.DataFrame]:
    """Aggregate tables, verdicts and specification curves of one lattice run."""
    share = Statistic.SHARE_SIGNIFICANT
    tables: Dict[str, pd.DataFrame] = {}
    tables["loglik_by_spec_method"] = aggregate(results, Statistic.MEAN_LOGLIK, ["spec", "method"])
    for name, by in (("share_by_family_method", ["family", "method"]),
                     ("share_by_country_method", ["country", "family", "method"])):
        tables[name] = pd.concat(
            [aggregate(results, share, by, alpha, ci_method).assign(alpha=alpha) for alpha in alpha_levels],
            ignore_index=True,
        )
    quadratic = results[results["spec"].str.startswith("quadratic")]
    tables["share_beta2_by_family_method"] = pd.concat(
        [aggregate(quadratic.assign(p1=quadratic["p2"]), share, ["family", "method"], alpha, ci_method).assign(alpha=alpha)
         for alpha in alpha_levels],
        ignore_index=True,
    )
    tables["verdicts"] = pd.concat(
        [
            compare_to_baseline(results, Statistic.MEAN_LOGLIK, ["spec"]),
            compare_to_baseline(results, share, ["family"], ci_method=ci_method),
            compare_to_baseline(results, share, ["country", "family"], ci_method=ci_method),
            compare_to_baseline(results, Statistic.COEFFICIENT, ["country", "product", "metric", "outcome", "spec"]),
        ],
        ignore_index=True,
    )
    tables["country_comparisons"] = compare_groups(results, "country", share, ["family"], ci_method=ci_method)

    focus = [m for metrics in FOCUS_METRICS.values() for m in metrics]
    curves = []
    for (country, family, metric, spec), curve in spec_curve_panels(results[results["metric"].isin(focus)]).items():
        curves.append(curve.assign(country=country, family=family, metric=metric, spec=spec))
    tables["spec_curves"] = pd.concat(curves, ignore_index=True) if curves else pd.DataFrame(columns=SPEC_CURVE_COLUMNS)
    return tables


def _chart_alpha(tables: Dict[str, pd.DataFrame]) -> Optional[float]:
    alphas = sorted(tables["share_by_family_method"]["alpha"].unique())
    if not alphas:
        return None
    return min(alphas, key=lambda a: abs(a - 0.05))


def render_charts(tables: Dict[str, pd.DataFrame], directory: Path, baseline: str) -> List[Path]:
    """One SVG per aggregate slice and per specification curve panel."""
    written = []
    loglik = tables["loglik_by_spec_method"]
    for spec, rows in loglik.groupby("spec", sort=True):
        written.append(bar_chart(rows, "method", directory / f"loglik_{spec}.svg",
                                 title=f"mean log-likelihood, {spec}", ylabel="log-likelihood", baseline=baseline))
    alpha = _chart_alpha(tables)
    if alpha is not None:
        share = tables["share_by_family_method"]
        for family, rows in share[share["alpha"] == alpha].groupby("family", sort=True):
            written.append(bar_chart(rows, "method", directory / f"share_{family}.svg",
                                     title=f"share p < {alpha:g}, {family}", ylabel="share", baseline=baseline))
        by_country = tables["share_by_country_method"]
        for (country, family), rows in by_country[by_country["alpha"] == alpha].groupby(["country", "family"], sort=True):
            written.append(bar_chart(rows, "method", directory / f"share_{country}_{family}.svg",
                                     title=f"share p < {alpha:g}, {country}, {family}", ylabel="share",
                                     baseline=baseline))
    curves = tables.get("spec_curves")
    if curves is not None and not curves.empty:
        for (country, family, metric, spec), curve in curves.groupby(["country", "family", "metric", "spec"], sort=True):
            curve = curve.sort_values("rank").reset_index(drop=True)
            written.append(spec_curve_chart(curve, marker_matrix(curve, SPEC_CURVE_AXES),
                                            directory / f"spec_curve_{country}_{family}_{metric}_{spec}.svg",
                                            title=f"{country}, {metric}, {spec}"))
    return written


def cmd_run(manifest: RunManifest) -> Path:
    """Fit the whole lattice (resumable), then aggregate, compare and chart."""
    validate(manifest, "run")
    layout = RunLayout(manifest)
    if layout.done("run"):
        logger.info(f"run: {layout.stage('run')} is up to date")
        return layout.stage("run")
    cmd_metrics(manifest)

    tasks = enumerate_tasks(manifest.design_lattice())
    store = panel_store(manifest, layout)
    layout.state.mkdir(parents=True, exist_ok=True)
    engine = journal_engine(layout.state / "journal.sqlite")
    try:
        journal = SQLAlchemyJournalRepository(session_factory(engine))
        results = run_lattice(tasks, store, manifest.parallelism, journal)
    finally:
        engine.dispose()
    failed = int((results["status"] != "ok").sum())
    if failed:
        logger.warning(f"run: {failed} of {len(results)} regressions failed; see the error column")

    tables = summarize(results, manifest.alpha_levels, manifest.ci_method)
    with _staged(layout, "run") as out:
        _write_table(layout.export(results), out / "results.csv")
        exported = {name: layout.export(table) for name, table in tables.items()}
        for name, table in exported.items():
            _write_table(table, out / f"{name}.csv")
        charts = render_charts(exported, out / "charts", layout.label(BASELINE_METHOD.value))
        logger.info(f"run: {len(results)} results, {len(tables)} tables, {len(charts)} charts")
    return layout.stage("run")


# ---------- unblinding ----------

CHART_TABLES = ("loglik_by_spec_method", "share_by_family_method", "share_by_country_method", "spec_curves")


def cmd_unblind(manifest: RunManifest) -> Path:
    """Reveal every exported table of a blinded run into ``unblinded/``."""
    if not manifest.blinding:
        raise ConfigError("manifest has blinding off; nothing to unblind")
    layout = RunLayout(manifest)
    key_path = layout.sealed / KEY_FILE
    if not key_path.is_file():
        raise ConfigError(f"no sealed key at {key_path}; run the pipeline first")
    if layout.done("unblinded"):
        logger.info(f"unblind: {layout.stage('unblinded')} is up to date")
        return layout.stage("unblinded")
    key = load_key(key_path)

    echo = manifest_json(manifest)
    with _staged(layout, "unblinded", echo=echo) as out:
        n_tables = 0
        for stage in STAGES[1:]:
            if not layout.done(stage):
                continue
            source = layout.stage(stage)
            for path in sorted(source.rglob("*.csv")):
                relative = Path(*(unblind_name(part, key) for part in path.relative_to(source).parts))
                frame = pd.read_csv(path, dtype=str, keep_default_na=False)
                target = out / stage / relative
                target.parent.mkdir(parents=True, exist_ok=True)
                unblind(frame, key).to_csv(target, index=False)
                n_tables += 1
        if layout.done("run"):
            tables = {}
            for name in CHART_TABLES:
                path = out / "run" / f"{name}.csv"
                tables[name] = pd.read_csv(path)
            render_charts(tables, out / "run" / "charts", BASELINE_METHOD.value)
        logger.info(f"unblind: {n_tables} tables revealed")
    return layout.stage("unblinded")


# ---------- synthetic fixtures ----------


def synth_manifest(manifest: RunManifest, stack_paths: Dict[str, str]) -> dict:
    """A runnable pipeline manifest over the generated fixture (paths relative to it)."""
    config = manifest.synth
    return {
        "seed": manifest.seed,
        "blinding": manifest.blinding,
        "output_root": "out",
        "products": {p.name: {"variable": p.variable.value, "stack": stack_paths[p.name]} for p in config.products},
        "countries": {
            c: {"households": f"{c}/households.csv", "polygons": f"{c}/polygons.txt", "outcomes": f"{c}/outcomes.csv"}
            for c in config.countries
        },
        "lattice": {
            "rainfall_metrics": list(FOCUS_METRICS[RAINFALL]),
            "temperature_metrics": list(FOCUS_METRICS[TEMPERATURE]),
        },
    }


def cmd_synth(manifest: RunManifest) -> Path:
    """Write a synthetic fixture directory with known ground truth and a manifest to run it."""
    if manifest.synth is None:
        raise ManifestError("manifest has no [synth] section")
    config = manifest.synth
    root = output_root(manifest) / f"synth-{manifest.digest()}"
    if (root / DONE).is_file():
        logger.info(f"synth: {root} is up to date")
        return root

    fixture = build_fixture(config)
    tmp = root.parent / f".{root.name}.tmp"
    shutil.rmtree(tmp, ignore_errors=True)
    tmp.mkdir(parents=True)
    try:
        stack_paths = {}
        for name, stack in fixture.stacks.items():
            if name in config.ascii_products:
                stack_paths[name] = f"stacks/{name}"
                write_ascii_stack(stack, tmp / stack_paths[name])
            else:
                stack_paths[name] = f"stacks/{name}.wxstack"
                (tmp / "stacks").mkdir(exist_ok=True)
                write_stack(stack, tmp / stack_paths[name])
        for country in config.countries:
            target = tmp / country
            target.mkdir()
            write_households(fixture.households[country], target / "households.csv")
            write_polygons(fixture.polygons[country], target / "polygons.txt")
            write_outcomes(fixture.panels[country], target / "outcomes.csv")
            truth = fixture.truth[country]
            _write_table(truth.components, target / "truth.csv")
        (tmp / "synth_config.json").write_text(config.model_dump_json(indent=2), encoding="utf-8")
        (tmp / "manifest.toml").write_text(tomli_w.dumps(synth_manifest(manifest, stack_paths)), encoding="utf-8")
        (tmp / DONE).write_text(manifest.digest() + "\n", encoding="utf-8")
        shutil.rmtree(root, ignore_errors=True)
        os.replace(tmp, root)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    logger.info(f"synth: fixture written to {root}")
    return root
