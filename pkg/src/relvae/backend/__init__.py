"""Kernel backend selection.

The hot kernels (1-d convolution, LSTM cell, embedding scatter-add) exist
twice: a Cython extension (``_ckernels``) and a numpy fallback
(``_pykernels``) with identical signatures and semantics.  The compiled one
is used when it imported successfully; set ``RELVAE_BACKEND=python`` or
``RELVAE_BACKEND=c`` to force a choice (forcing ``c`` raises if the
extension is unavailable).

``benchmarks/bench_kernels.py`` compares the two.
"""

from __future__ import annotations

import os

from . import _pykernels

try:
    from . import _ckernels
except ImportError:
    _ckernels = None

_choice = os.environ.get("RELVAE_BACKEND", "").lower()
if _choice in ("python", "py"):
    kernels = _pykernels
elif _choice in ("c", "cython", "compiled"):
    if _ckernels is None:
        raise ImportError(
            "RELVAE_BACKEND=c requested but the compiled kernels are not built; "
            "run `pip install -e . --no-build-isolation` to build them"
        )
    kernels = _ckernels
else:
    kernels = _ckernels if _ckernels is not None else _pykernels


def active_backend() -> str:
    """Name of the kernel set in use: 'c' or 'python'."""
    return kernels.NAME


def available_backends():
    """All importable kernel modules, reference implementation first."""
    mods = [_pykernels]
    if _ckernels is not None:
        mods.append(_ckernels)
    return mods
