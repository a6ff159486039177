"""Select the compiled core when available, else the pure-Python twin.

Set ``FSLAB_PURE_PYTHON=1`` to force the fallback.
"""
import os

if os.environ.get("FSLAB_PURE_PYTHON"):
    from fslab import _core_py as core
else:
    try:
        from fslab import _core as core
    except ImportError:  # extension not built
        from fslab import _core_py as core

from fslab import _core_py as pycore

BACKEND = core.BACKEND


def get_core(name=None):
    """Return the core module by name ('compiled' or 'python'); default active one."""
    if name is None:
        return core
    if name == "python":
        return pycore
    if name == "compiled":
        from fslab import _core

        return _core
    raise ValueError(f"unknown backend {name!r}")
