from geomv.application.use_cases.pipeline import cmd_unblind
from geomv.cli.dependencies import ManifestOption, ParallelismOption, SeedOption, execute


def unblind(manifest: ManifestOption, parallelism: ParallelismOption = None, seed: SeedOption = None):
    """Reveal method and product names in a blinded run using its sealed key."""
    execute(cmd_unblind, manifest, parallelism, seed)
