"""Numeric kernel backend selection.

At import time the compiled core is preferred; the pure numpy fallback is
used when the extension was not built.  Set NAVCONTRAST_KERNELS=python or
NAVCONTRAST_KERNELS=compiled to force a backend (the latter raises if the
extension is unavailable).
"""

from __future__ import annotations

import os

from . import _purepy

_forced = os.environ.get("NAVCONTRAST_KERNELS", "").strip().lower()

if _forced == "python":
    _impl = _purepy
elif _forced == "compiled":
    from . import _core as _impl  # type: ignore[no-redef]
else:
    try:
        from . import _core as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _purepy

BACKEND = _impl.BACKEND_NAME

circle_terms = _impl.circle_terms
infonce_terms = _impl.infonce_terms
mine_pair_masks = _impl.mine_pair_masks
dtw_cost = _impl.dtw_cost


def available_backends() -> dict:
    """Importable backend modules keyed by name."""
    out = {"python": _purepy}
    try:
        from . import _core
        out["compiled"] = _core
    except ImportError:
        pass
    return out
