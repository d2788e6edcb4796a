import os
import shutil
import tempfile
from pathlib import Path

from geomv.config import settings
from geomv.logging_config import configure_logging


def before_all(context):
    # GEOMV_OUT from scripts/behave_ci.py wins; otherwise use a scratch directory
    configured = os.environ.get("GEOMV_OUT")
    context.owns_out = configured is None
    context.out_root = Path(configured) if configured else Path(tempfile.mkdtemp(prefix="geomv-behave-"))
    settings.OUT = context.out_root
    configure_logging()


def before_scenario(context, scenario):
    context.scenario_dir = Path(tempfile.mkdtemp(prefix="scenario-", dir=context.out_root))
    context.result = None


def after_scenario(context, scenario):
    if not os.environ.get("BEHAVE_KEEP_OUT"):
        shutil.rmtree(context.scenario_dir, ignore_errors=True)


def after_all(context):
    settings.OUT = None
    if context.owns_out and not os.environ.get("BEHAVE_KEEP_OUT"):
        shutil.rmtree(context.out_root, ignore_errors=True)
