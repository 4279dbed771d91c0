"""Decode-kernel backend selection.

The compiled Cython kernel is preferred; the pure-Python twin is selected
when the extension is unavailable or ``HYPSEL_PURE=1`` is set.  Both produce
bit-identical results.
"""

import os
import warnings

from .pure import kbest_viterbi as pure_kbest_viterbi

_force_pure = os.environ.get("HYPSEL_PURE", "") not in ("", "0")

native_kbest_viterbi = None
if not _force_pure:
    try:
        from ._viterbi import kbest_viterbi as native_kbest_viterbi
    except ImportError:
        warnings.warn(
            "compiled decoder kernel not built; falling back to the slow "
            "pure-Python kernel (pip install -e . rebuilds it)",
            RuntimeWarning,
            stacklevel=2,
        )

if native_kbest_viterbi is not None:
    kbest_viterbi = native_kbest_viterbi
    BACKEND = "native"
else:
    kbest_viterbi = pure_kbest_viterbi
    BACKEND = "pure"

__all__ = ["kbest_viterbi", "pure_kbest_viterbi", "native_kbest_viterbi", "BACKEND"]
