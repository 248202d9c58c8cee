"""Backend selection for the hot kernels.

The compiled module is used when it imports; otherwise the numpy fallback.
Set ``TRADESHOCK_BACKEND=python`` to force the fallback.
"""

import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("TRADESHOCK_BACKEND", "").lower() != "python":
    try:
        from . import _kernels as _compiled
    except ImportError:
        pass
    else:
        _impl = _compiled
        BACKEND = "compiled"

cd_gram = _impl.cd_gram
build_tree = _impl.build_tree
tree_apply = _impl.tree_apply


def implementations():
    """Available backends as ``{name: module}``; the fallback is always present."""
    out = {"python": _kernels_py}
    try:
        from . import _kernels as compiled
    except ImportError:
        return out
    out["compiled"] = compiled
    return out
