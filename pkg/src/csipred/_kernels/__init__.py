"""Channel-synthesis kernels: compiled extension with numpy fallback.

The Cython kernel is used when the extension was built; otherwise the
numpy implementation takes over. Set CSIPRED_PURE_PYTHON=1 to force the
numpy kernel (used by the parity tests and the benchmark).
"""

import os

if os.environ.get("CSIPRED_PURE_PYTHON"):
    from csipred._kernels import synth_np as _backend
else:
    try:
        from csipred._kernels import synth as _backend  # type: ignore[attr-defined]
    except ImportError:
        from csipred._kernels import synth_np as _backend

synthesize = _backend.synthesize
BACKEND = _backend.BACKEND

__all__ = ["synthesize", "BACKEND"]
