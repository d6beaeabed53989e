"""Bundled transmission test cases."""

from importlib import resources


def case_path(name: str) -> str:
    """Filesystem path of a bundled case file, e.g. case_path('ieee118.m')."""
    ref = resources.files(__package__).joinpath(name)
    if not ref.is_file():
        available = sorted(p.name for p in resources.files(__package__).iterdir()
                           if p.name.endswith((".m", ".json")))
        raise FileNotFoundError(f"no bundled case {name!r}; available: {available}")
    return str(ref)
