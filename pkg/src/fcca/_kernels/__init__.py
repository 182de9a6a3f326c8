"""Search-kernel selection.

The hot kernels (counterfactual candidate search, optimal-tree search) exist
twice: a compiled Cython extension and a pure-Python fallback with identical
semantics. The compiled module is preferred when importable; set
FCCA_PURE_PYTHON=1 to force the fallback. `IMPLEMENTATION` reports which one
is active ("compiled" or "python").
"""

import os

if os.environ.get("FCCA_PURE_PYTHON", "") not in ("", "0"):
    from . import _pyfallback as _impl
else:
    try:
        from . import _core as _impl  # type: ignore[attr-defined]
    except ImportError:
        from . import _pyfallback as _impl

IMPLEMENTATION = _impl.IMPLEMENTATION
mckp_solve = _impl.mckp_solve
tree_search = _impl.tree_search

__all__ = ["IMPLEMENTATION", "mckp_solve", "tree_search"]
