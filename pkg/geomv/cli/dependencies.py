from pathlib import Path
from typing import Annotated, Callable, Optional

import typer

from geomv.application.dto.manifest import RunManifest, load_manifest
from geomv.domain.errors import GeomvError
from geomv.logging_config import logger

ManifestOption = Annotated[Path, typer.Option("--manifest", "-m", help="Run manifest (TOML)")]
ParallelismOption = Annotated[
    Optional[int], typer.Option("--parallelism", "-p", min=1, help="Worker processes; overrides the manifest")
]
SeedOption = Annotated[Optional[int], typer.Option("--seed", help="Master seed; overrides the manifest")]


def execute(command: Callable[[RunManifest], Path], manifest: Path, parallelism: Optional[int], seed: Optional[int]):
    """Load the manifest, run one command, print its output directory.

    Library errors end the process with their exit code.
    """
    name = command.__name__.removeprefix("cmd_")
    try:
        loaded = load_manifest(manifest, parallelism=parallelism, seed=seed)
        logger.info(f"{name}: manifest {manifest} (digest {loaded.digest()})")
        out = command(loaded)
    except GeomvError as exc:
        logger.error(f"{name} failed: {type(exc).__name__}: {exc}")
        typer.echo(f"error: {exc}", err=True)
        raise typer.Exit(code=exc.exit_code)
    typer.echo(str(out))
    return out
