"""Hot per-round kernels: compiled extension when built, numpy fallback otherwise.

Set ``RESIST_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _fallback

if os.environ.get("RESIST_PURE_PYTHON", "") not in ("", "0"):
    _impl = _fallback
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl
        BACKEND = "cython"
    except ImportError:
        _impl = _fallback
        BACKEND = "python"

cwtm_round = _impl.cwtm_round
mixing_round = _impl.mixing_round

__all__ = ["BACKEND", "cwtm_round", "mixing_round"]
