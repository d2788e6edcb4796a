from geomv.cli.router import cli
from geomv.config import settings
from geomv.logging_config import configure_logging, logger

app = cli


@app.callback()
def startup():
    """Geomasking measurement-error multiverse."""
    configure_logging()
    logger.info(f"{settings.APP_NAME} starting (env={settings.APP_ENV})")


def run():
    app()


if __name__ == "__main__":
    run()
