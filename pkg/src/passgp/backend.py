"""Selection of the compute backend for the hot kernels.

Two implementations exist: a numba-JIT path and a pure-numpy fallback.
The environment variable ``PASSGP_BACKEND`` picks one at process level
("numba" or "numpy"); without it the JIT path is used whenever numba
imports. ``set_backend`` overrides the choice at runtime (used by tests
and the benchmark).
"""

import importlib
import os

ENV_VAR = "PASSGP_BACKEND"
_BACKENDS = ("numba", "numpy")
_override = None


def _default_name():
    env = os.environ.get(ENV_VAR)
    if env is not None:
        name = env.strip().lower()
        if name not in _BACKENDS:
            raise ValueError(
                f"{ENV_VAR}={env!r}: expected one of {', '.join(_BACKENDS)}"
            )
        return name
    try:
        importlib.import_module("numba")
    except ImportError:
        return "numpy"
    return "numba"


def backend_name():
    """Name of the active backend ("numba" or "numpy")."""
    return _override if _override is not None else _default_name()


def set_backend(name):
    """Force a backend, or restore env/default selection with None."""
    global _override
    if name is not None and name not in _BACKENDS:
        raise ValueError(f"unknown backend {name!r}")
    _override = name


def get_module():
    """The module implementing the hot kernels for the active backend."""
    if backend_name() == "numba":
        from . import _sweep_numba

        return _sweep_numba
    from . import _sweep_numpy

    return _sweep_numpy


def concurrent_calls_safe():
    """Whether the hot kernels may be invoked from several threads at once.

    numba's last-resort workqueue threading layer is not reentrant; omp
    and tbb are fine, as is the pure-numpy path.
    """
    if backend_name() != "numba":
        return True
    import numpy as np

    import numba

    # force threading-layer resolution with a tiny parallel call
    get_module().sq_dists_sym(np.zeros((2, 1)))
    return numba.threading_layer() != "workqueue"
