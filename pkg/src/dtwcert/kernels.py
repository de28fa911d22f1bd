"""Kernel backend selection.

Imports the compiled kernels when the extension built, otherwise the numpy
fallback. ``DTWCERT_BACKEND=c`` or ``=python`` forces one side (the benchmark
and the cross-backend tests use this).
"""

import os

_forced = os.environ.get("DTWCERT_BACKEND")
if _forced == "python":
    from . import _pykern as _impl
elif _forced == "c":
    from . import _ckern as _impl
else:
    try:
        from . import _ckern as _impl
    except ImportError:
        from . import _pykern as _impl

BACKEND = "c" if _impl.__name__.endswith("_ckern") else "python"
band_dtw = _impl.band_dtw
envelope = _impl.envelope
lb_keogh = _impl.lb_keogh

P_CODES = {1: 1, 2: 2, "inf": 0}
