"""Engine backend selection.

The compiled engine is used when its extension module imports cleanly;
set BRWLAB_PURE_PYTHON=1 to force the reference engine.  Both produce
bit-identical trajectories, so the switch only changes speed.
"""

from __future__ import annotations

import os

from . import _engine_py

if os.environ.get("BRWLAB_PURE_PYTHON", "") not in ("", "0"):
    _impl = _engine_py
    BACKEND = "python"
else:
    try:
        from . import _engine_cy as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _impl = _engine_py
        BACKEND = "python"

run_events = _impl.run_events
