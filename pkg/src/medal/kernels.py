"""Kernel backend selection.

Prefers the compiled extension when it imported cleanly, else falls back to
the numpy implementation. MEDAL_KERNEL=c|py|auto overrides (c errors out if
the extension is unavailable rather than silently degrading).
"""

from __future__ import annotations

import os

from . import _scorekern_py

try:
    from . import _scorekern
except ImportError:
    _scorekern = None

from .errors import ConfigError

_BACKENDS = {"py": _scorekern_py}
if _scorekern is not None:
    _BACKENDS["c"] = _scorekern


def get_backend(name: str):
    """Return the kernel module for `name` (c, py, or auto)."""
    name = name.lower()
    if name == "auto":
        return _BACKENDS.get("c", _scorekern_py)
    if name not in _BACKENDS:
        raise ConfigError(
            f"kernel backend {name!r} unavailable; have {sorted(_BACKENDS)}"
        )
    return _BACKENDS[name]


def available_backends() -> list[str]:
    return sorted(_BACKENDS)


_impl = get_backend(os.environ.get("MEDAL_KERNEL", "auto"))

BACKEND: str = _impl.BACKEND
score_rows = _impl.score_rows
entropy_rows = _impl.entropy_rows
