"""Kernel backend selection.

The compiled Cython core is preferred when importable; the numpy reference
backend is the fallback.  ``UASAM_KERNELS`` overrides: ``c`` demands the
compiled core (ImportError if missing), ``py`` forces the reference backend,
``auto``/unset picks compiled-if-available.
"""

import os

from . import reference

_choice = os.environ.get("UASAM_KERNELS", "auto").strip().lower()

if _choice in ("py", "python", "reference"):
    _impl = reference
    BACKEND = "python"
elif _choice in ("auto", "", "c", "cython"):
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "c"
    except ImportError:
        if _choice in ("c", "cython"):
            raise
        _impl = reference
        BACKEND = "python"
else:
    raise ValueError(f"UASAM_KERNELS must be 'auto', 'c', or 'py', got {_choice!r}")

gelu_fwd = _impl.gelu_fwd
gelu_bwd = _impl.gelu_bwd
softmax_fwd = _impl.softmax_fwd
softmax_bwd = _impl.softmax_bwd
layernorm_fwd = _impl.layernorm_fwd
layernorm_bwd = _impl.layernorm_bwd
adam_update = _impl.adam_update
