"""Hash kernel backend selection.

Prefers the compiled extension; falls back to the numpy implementation when
the extension was not built.  INKWELL_PURE_PYTHON=1 forces the fallback
(useful for benchmarking and for testing backend equivalence).
"""

import os

from . import numpy_backend

if os.environ.get("INKWELL_PURE_PYTHON") == "1":
    _impl = numpy_backend
else:
    try:
        from . import _hashcore as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = numpy_backend

BACKEND = _impl.BACKEND_NAME
hash_candidates = _impl.hash_candidates
hash_positions = _impl.hash_positions

__all__ = ["BACKEND", "hash_candidates", "hash_positions", "numpy_backend"]
