from geomv.application.use_cases.pipeline import cmd_synth
from geomv.cli.dependencies import ManifestOption, ParallelismOption, SeedOption, execute


def synth(manifest: ManifestOption, parallelism: ParallelismOption = None, seed: SeedOption = None):
    """Generate a synthetic fixture with known ground truth from the manifest's [synth] section."""
    execute(cmd_synth, manifest, parallelism, seed)
