"""Registry of measured constants.

The inequalities checked by this package have unnamed constants. Each is
measured once on a fixed grid (see :func:`hubbardlab.bound_assembly.calibrate`),
multiplied by a safety factor, and frozen in ``constants.json`` next to this
module. Every entry records the raw measured maximum and the grid it came
from, so the file is reviewable and reproducible.
"""
import json
from functools import lru_cache
from pathlib import Path

from .errors import PreconditionError

__all__ = ["REGISTRY_PATH", "REGISTRY_VERSION", "load_registry", "get_constant", "save_registry", "clear_cache"]

REGISTRY_PATH = Path(__file__).with_name("constants.json")
REGISTRY_VERSION = 1


@lru_cache(maxsize=None)
def _load(path):
    with open(path) as fh:
        data = json.load(fh)
    if data.get("version") != REGISTRY_VERSION:
        raise PreconditionError(f"constants registry {path} has version {data.get('version')}, expected {REGISTRY_VERSION}")
    return data


def load_registry(path=None):
    """The registry as a dict ``{"version": .., "entries": {name: {...}}}``."""
    p = Path(path) if path is not None else REGISTRY_PATH
    if not p.exists():
        raise PreconditionError(f"constants registry not found at {p}; run `hubbardlab bound --recalibrate`")
    return _load(str(p.resolve()))


def get_constant(name, path=None):
    """Frozen value of the named constant."""
    entries = load_registry(path)["entries"]
    if name not in entries:
        raise PreconditionError(f"constant {name!r} missing from the registry")
    return float(entries[name]["value"])


def save_registry(entries, path=None):
    """Write entries (sorted, 17 significant digits) and drop the cache."""
    p = Path(path) if path is not None else REGISTRY_PATH
    data = {"version": REGISTRY_VERSION, "entries": {k: entries[k] for k in sorted(entries)}}
    text = json.dumps(data, indent=2, sort_keys=False, default=float)
    p.write_text(text + "\n")
    clear_cache()
    return p


def clear_cache():
    _load.cache_clear()
