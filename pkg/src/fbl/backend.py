"""Kernel backend selection.

The hot per-batch kernels (dense forward/backward, SGD update) exist twice:
a compiled Cython extension (``fbl._core``) and a pure-numpy fallback
(``fbl._core_py``). One of them is picked at import time:

* ``FBL_BACKEND=auto`` (default): compiled if built, else numpy.
* ``FBL_BACKEND=cython``: compiled, error if it is not built.
* ``FBL_BACKEND=python``: numpy, always.

Both backends agree to floating-point accumulation order; a given run is
bit-reproducible on a fixed backend.
"""

from __future__ import annotations

import os

_CHOICES = ("auto", "python", "cython")


def _select():
    choice = os.environ.get("FBL_BACKEND", "auto").strip().lower() or "auto"
    if choice not in _CHOICES:
        raise RuntimeError(f"FBL_BACKEND must be one of {_CHOICES}, got {choice!r}")
    if choice in ("auto", "cython"):
        try:
            from . import _core

            return _core
        except ImportError:
            if choice == "cython":
                raise RuntimeError(
                    "FBL_BACKEND=cython but the compiled extension is not built; "
                    "run `pip install -e . --no-build-isolation` or "
                    "`python setup.py build_ext --inplace`"
                ) from None
    from . import _core_py

    return _core_py


kernels = _select()
active_backend: str = kernels.BACKEND_NAME


def available_backends() -> dict[str, object]:
    """Importable kernel modules keyed by backend name."""
    from . import _core_py

    out = {"python": _core_py}
    try:
        from . import _core

        out["cython"] = _core
    except ImportError:
        pass
    return out
