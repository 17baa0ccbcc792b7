import click

try:
    from importlib.metadata import PackageNotFoundError, metadata, version
except ImportError:
    from importlib_metadata import PackageNotFoundError, metadata, version


def get_metadata_value(meta, key, default="Unknown"):
    return meta.get(key, default)


@click.command()
@click.pass_obj
def info(app):
    """Displays package metadata and the active runtime configuration."""
    package_name = "rasnet"

    try:
        meta = metadata(package_name)
        description = get_metadata_value(meta, "Summary")
        ver = version(package_name)
    except PackageNotFoundError:
        description, ver = "Not available", app.config.get("APP_VERSION", "unknown")

    click.echo(f"Name: {package_name}")
    click.echo(f"Version: {ver}")
    click.echo(f"Description: {description}")
    click.echo(f"Environment: {app.config['ENV']}")
    click.echo(f"Precision: {app.config['PRECISION']}")
    click.echo(f"Log file: {app.config.get('LOG_FILE') or 'disabled'}")
