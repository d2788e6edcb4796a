import typer

from .commands import stages, synth, unblind


cli = typer.Typer(no_args_is_help=True, add_completion=False, help="Geomasking measurement-error multiverse.")


cli.command("mask")(stages.mask)
cli.command("extract")(stages.extract)
cli.command("metrics")(stages.metrics)
cli.command("run")(stages.run)
cli.command("synth")(synth.synth)
cli.command("unblind")(unblind.unblind)
