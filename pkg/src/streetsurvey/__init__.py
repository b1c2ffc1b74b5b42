"""Self-hosted crowdsourced street-level flood-vulnerability labeling."""

from importlib import resources


def fixture_path(name: str) -> str:
    """Absolute path of a bundled fixture file (codebook, region polygon)."""
    return str(resources.files(__name__).joinpath("fixtures", name))
