"""Import-time choice between the compiled solver and the numpy fallback."""
import os

from . import _kernels_py

solver = _kernels_py
NAME = "python"

if not os.environ.get("SPINCHAIN_PURE_PYTHON"):
    try:
        from . import _kernels as solver  # noqa: F811
        NAME = "compiled"
    except ImportError:  # extension not built
        pass


def get(name: str | None = None):
    """Return the solver module; ``name`` forces ``"python"`` or ``"compiled"``."""
    if name is None:
        return solver
    if name == "python":
        return _kernels_py
    if name == "compiled":
        from . import _kernels
        return _kernels
    raise ValueError(f"unknown backend {name!r}")
