"""Distribution name and version, stamped into run manifests and printed by ``gleh --version``."""

from importlib.metadata import PackageNotFoundError, version

NAME = "gle_homog"
UNINSTALLED_VERSION = "0.0.0+local"


def installed_version(distribution: str = NAME) -> str:
    """Version of an installed distribution; source checkouts that were never installed get a local tag."""
    try:
        return version(distribution)
    except PackageNotFoundError:
        return UNINSTALLED_VERSION


VERSION = installed_version()


def banner() -> str:
    return f"{NAME} {VERSION}"
