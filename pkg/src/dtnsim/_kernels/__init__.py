"""Kernel selection: compiled extension if available, else pure Python.

Set DTNSIM_PURE=1 to force the fallback (used by tests and benchmarks).
Both implementations are bit-compatible; see fallback.py.
"""

import os

from dtnsim._kernels import fallback as _fallback

if os.environ.get("DTNSIM_PURE") == "1":
    _impl = _fallback
    COMPILED = False
else:
    try:
        from dtnsim._kernels import _speedups as _impl  # type: ignore[no-redef]

        COMPILED = True
    except ImportError:
        _impl = _fallback
        COMPILED = False

move_step = _impl.move_step
contact_delta = _impl.contact_delta
check_pairs = _impl.check_pairs

KERNEL_MODE = "compiled" if COMPILED else "pure-python"
