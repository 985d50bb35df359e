"""Registry of the evaluation models shipped with the package."""
from __future__ import annotations

import os
from importlib import resources

from .model import BiochemicalSystem, ModelError, load_model, parse_model

BUNDLED = ("fig2", "oscillatory", "enzyme", "ammonium")


def bundled_models() -> dict[str, str]:
    """Map each bundled model name to its JSON text."""
    root = resources.files("qdaa") / "models"
    return {name: (root / f"{name}.json").read_text(encoding="utf-8") for name in BUNDLED}


def get_model(name: str) -> BiochemicalSystem:
    """Parse a bundled model by name."""
    if name not in BUNDLED:
        raise KeyError(f"unknown model {name!r}; bundled models: {', '.join(BUNDLED)}")
    text = (resources.files("qdaa") / "models" / f"{name}.json").read_text(encoding="utf-8")
    return parse_model(text)


def resolve_model(name: str) -> BiochemicalSystem:
    """Load ``name`` as a file path if one exists, otherwise as a bundled name."""
    if os.path.exists(name):
        return load_model(name)
    if name in BUNDLED:
        return get_model(name)
    raise ModelError(f"no model file or bundled model named {name!r}; bundled models: {', '.join(BUNDLED)}")
