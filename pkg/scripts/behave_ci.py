"""Run the behave scenarios against a throwaway output root.

Usage (from repo root):
python scripts/behave_ci.py [behave args...]

GEOMV_OUT and GEOMV_LOG_DIR point into a fresh temporary directory that is
removed afterwards, pass or fail. Set BEHAVE_KEEP_OUT=true to keep it for
inspection.
"""
from __future__ import annotations

import os
import shutil
import subprocess
import sys
import tempfile
from pathlib import Path


def scenario_env(out_root: Path) -> dict:
    env = dict(os.environ)
    env.update(
        GEOMV_OUT=str(out_root),
        GEOMV_LOG_DIR=str(out_root / "logs"),
        GEOMV_APP_ENV=env.get("GEOMV_APP_ENV", "test"),
    )
    return env


def main(argv: list[str]) -> int:
    out_root = Path(tempfile.mkdtemp(prefix="geomv-behave-ci-"))
    keep = os.environ.get("BEHAVE_KEEP_OUT", "false").lower() == "true"
    cmd = [sys.executable, "-m", "behave", *argv]
    print("Running:", " ".join(cmd))
    try:
        return subprocess.run(cmd, env=scenario_env(out_root)).returncode
    finally:
        if keep:
            print(f"Outputs kept in {out_root}")
        else:
            shutil.rmtree(out_root, ignore_errors=True)


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
