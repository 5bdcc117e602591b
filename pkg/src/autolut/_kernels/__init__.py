"""Kernel selection: compiled extension if built, numpy fallback otherwise.

Both kernels implement ``group_forward`` with identical per-element operation
order, so their outputs are bit-identical. Set AUTOLUT_KERNEL=python or
=compiled to force one; the default picks the extension when importable.
"""

import importlib
import os

from . import _py

_FORCED = os.environ.get("AUTOLUT_KERNEL", "auto").lower()

_core = None
if _FORCED in ("auto", "compiled"):
    try:
        _core = importlib.import_module(__name__ + "._core")
    except ImportError:
        if _FORCED == "compiled":
            raise ImportError(
                "AUTOLUT_KERNEL=compiled but the autolut._kernels._core "
                "extension is not built (pip install -e . --no-build-isolation)"
            ) from None

_impl = _core if _core is not None else _py


def kernel_name() -> str:
    """Name of the active kernel: 'compiled' or 'python'."""
    return "compiled" if _impl is _core and _core is not None else "python"


def get_group_forward(which: str = "active"):
    """Return a group_forward implementation: 'active', 'python', 'compiled'."""
    if which == "python":
        return _py.group_forward
    if which == "compiled":
        if _core is None:
            raise ImportError("compiled kernel not available")
        return _core.group_forward
    return _impl.group_forward


group_forward = _impl.group_forward
