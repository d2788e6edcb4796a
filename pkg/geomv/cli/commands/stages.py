from geomv.application.use_cases.pipeline import cmd_extract, cmd_mask, cmd_metrics, cmd_run
from geomv.cli.dependencies import ManifestOption, ParallelismOption, SeedOption, execute


def mask(manifest: ManifestOption, parallelism: ParallelismOption = None, seed: SeedOption = None):
    """Displace household locations and build the ten spatial features per household."""
    execute(cmd_mask, manifest, parallelism, seed)


def extract(manifest: ManifestOption, parallelism: ParallelismOption = None, seed: SeedOption = None):
    """Extract daily weather series for every product and feature."""
    execute(cmd_extract, manifest, parallelism, seed)


def metrics(manifest: ManifestOption, parallelism: ParallelismOption = None, seed: SeedOption = None):
    """Compute the seasonal weather metrics."""
    execute(cmd_metrics, manifest, parallelism, seed)


def run(manifest: ManifestOption, parallelism: ParallelismOption = None, seed: SeedOption = None):
    """Fit the regression lattice and write aggregates, verdicts and charts."""
    execute(cmd_run, manifest, parallelism, seed)
