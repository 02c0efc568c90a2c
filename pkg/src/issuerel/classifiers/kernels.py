"""Solver kernel selection.

The compiled extension is used when importable. Set ``ISSUEREL_KERNELS`` to
``python`` to force the numpy fallback, or to ``compiled`` to fail loudly when
the extension is missing.
"""
import os

from . import _pykernels

_choice = os.environ.get("ISSUEREL_KERNELS", "auto").lower()

if _choice == "python":
    _impl = _pykernels
else:
    try:
        from . import _ckernels as _impl
    except ImportError:
        if _choice == "compiled":
            raise
        _impl = _pykernels

BACKEND = "compiled" if _impl is not _pykernels else "python"

cd_logistic_l1 = _impl.cd_logistic_l1
prox_subgradient_hinge = _impl.prox_subgradient_hinge
soft_threshold = _impl.soft_threshold


def backends():
    """Return the importable kernel modules keyed by name."""
    found = {"python": _pykernels}
    try:
        from . import _ckernels
        found["compiled"] = _ckernels
    except ImportError:
        pass
    return found
