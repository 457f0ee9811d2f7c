"""Access to the model files shipped with the package."""

from importlib import resources

from .model import parse_model

BUNDLED = (
    "oscillator",
    "exponential",
    "mixed",
    "cawley",
    "particle",
    "christ_lee",
    "synthetic_gaugeless",
    "synthetic_coupled",
    "synthetic_bianchi",
    "synthetic_gauge",
)


def bundled_model_text(name):
    if name not in BUNDLED:
        raise KeyError(f"no bundled model called {name!r}; have {', '.join(BUNDLED)}")
    return resources.files("clairaut").joinpath(f"models/{name}.lag").read_text(encoding="utf-8")


def bundled_model_path(name):
    """Filesystem path of a bundled model (models ship as plain files)."""
    if name not in BUNDLED:
        raise KeyError(f"no bundled model called {name!r}; have {', '.join(BUNDLED)}")
    return str(resources.files("clairaut").joinpath(f"models/{name}.lag"))


def load_bundled(name):
    return parse_model(bundled_model_text(name), name=name)
