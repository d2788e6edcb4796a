from pathlib import Path

import pandas as pd
import tomli_w
from behave import given, when, then
from typer.testing import CliRunner

from geomv.domain.entities.feature import BASELINE_METHOD, Method
from geomv.main import app

runner = CliRunner()

PRODUCTS = ["rain_p05", "rain_p25", "temp_p05"]


def _study(blinding: bool) -> dict:
    return {
        "seed": 3,
        "blinding": blinding,
        "synth": {
            "seed": 3,
            "countries": ["ethiopia"],
            "first_year": 2001,
            "n_years": 3,
            "n_eas": 4,
            "households_per_ea": 3,
            "products": [
                {"name": "rain_p05", "variable": "precipitation_mm", "cell_size": 0.05},
                {"name": "rain_p25", "variable": "precipitation_mm", "cell_size": 0.25},
                {"name": "temp_p05", "variable": "temperature_c", "cell_size": 0.05},
            ],
        },
    }


def _invoke(context, command, manifest):
    context.result = runner.invoke(app, [command, "--manifest", str(manifest)])
    if context.result.exit_code == 0:
        context.last_path = Path(context.result.output.strip().splitlines()[-1])


# === Given Steps ===

@given("a synthetic study manifest")
def step_study_manifest(context):
    context.study = context.scenario_dir / "study.toml"
    context.study.write_text(tomli_w.dumps(_study(False)), encoding="utf-8")


@given("a synthetic study manifest with blinding")
def step_blinded_study_manifest(context):
    context.study = context.scenario_dir / "study.toml"
    context.study.write_text(tomli_w.dumps(_study(True)), encoding="utf-8")


# === When Steps ===

@when('I run "{command}" on the study manifest')
def step_run_on_study(context, command):
    _invoke(context, command, context.study)
    if command == "synth" and context.result.exit_code == 0:
        context.generated = context.last_path / "manifest.toml"


@when('I run "{command}" on the generated manifest')
def step_run_on_generated(context, command):
    _invoke(context, command, context.generated)
    if command == "run" and context.result.exit_code == 0:
        context.run_root = context.last_path.parent


@when('I run "{command}" on a manifest that does not exist')
def step_run_on_missing(context, command):
    _invoke(context, command, context.scenario_dir / "absent.toml")


# === Then Steps ===

@then("the command succeeds")
def step_succeeds(context):
    assert context.result.exit_code == 0, f"exit {context.result.exit_code}: {context.result.output}"


@then("the command exits with code {code:d}")
def step_exit_code(context, code):
    assert context.result.exit_code == code, f"exit {context.result.exit_code}: {context.result.output}"


@then("every stage of the run is marked done")
def step_stages_done(context):
    for stage in ("mask", "extract", "metrics", "run"):
        assert (context.run_root / stage / "DONE").is_file(), f"{stage} has no DONE marker"


@then("the run directory holds charts")
def step_has_charts(context):
    assert list((context.run_root / "run" / "charts").glob("*.svg"))


@then("no method or product name appears in the run outputs")
def step_blinded(context):
    names = [m.value for m in Method] + PRODUCTS
    for stage in ("extract", "metrics", "run"):
        for path in (context.run_root / stage).rglob("*"):
            if path.is_file():
                text = path.read_bytes().decode("latin-1")
                leaked = [n for n in names if n in text or n in path.name]
                assert not leaked, f"{leaked} visible in {path}"


@then("the unblinded results name the baseline method")
def step_unblinded(context):
    results = pd.read_csv(context.last_path / "run" / "results.csv")
    assert BASELINE_METHOD.value in set(results["method"])
