"""Simulation engine selection.

Two interchangeable engines exist: the pure-Python reference (sim.run) and
a compiled extension (_speedups.run) that produces bit-identical traces,
fingerprints, and events.  The compiled engine is preferred when built;
set BYZGATHER_ENGINE=python or BYZGATHER_ENGINE=fast to force a choice.
"""

from __future__ import annotations

import os

from . import sim as _sim

ENV_VAR = "BYZGATHER_ENGINE"


def _load_fast():
    from . import _speedups
    return _speedups.run


def available_engines() -> tuple:
    names = ["python"]
    try:
        _load_fast()
        names.insert(0, "fast")
    except ImportError:
        pass
    return tuple(names)


def run_with(name: str, cfg):
    """Run one simulation on the named engine ("python" or "fast")."""
    if name == "python":
        return _sim.run(cfg)
    if name == "fast":
        return _load_fast()(cfg)
    raise ValueError(f"unknown engine {name!r}")


def _select():
    choice = os.environ.get(ENV_VAR, "").strip().lower()
    if choice == "python":
        return _sim.run, "python"
    try:
        fast = _load_fast()
    except ImportError:
        if choice == "fast":
            raise ImportError(
                "compiled engine requested via "
                f"{ENV_VAR}=fast but the extension is not built")
        return _sim.run, "python"
    if choice not in ("", "fast"):
        raise ValueError(f"{ENV_VAR} must be 'python' or 'fast'")
    return fast, "fast"


run, ENGINE_NAME = _select()
