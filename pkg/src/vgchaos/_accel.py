"""JIT switch for the numeric kernels.

Kernels are written as plain loops over numpy arrays.  When numba is
importable and ``VGCHAOS_DISABLE_NUMBA`` is unset (or ``0``), they are
compiled with ``numba.njit``.  Otherwise each kernel is replaced by its
registered fallback: a vectorized numpy version where the computation
vectorizes, or the loop body itself for scalar recurrences (continued
fractions, series) that do not.
"""
import os

_flag = os.environ.get("VGCHAOS_DISABLE_NUMBA", "0").strip().lower()
_disabled = _flag not in ("", "0", "false", "no")

try:
    if _disabled:
        raise ImportError
    import numba as _nb
    HAVE_NUMBA = True
except ImportError:
    _nb = None
    HAVE_NUMBA = False


_FALLBACKS = {}


def _key(fn):
    fn = getattr(fn, "py_func", fn)
    return f"{fn.__module__}.{fn.__qualname__}"


def jit(*args, fallback=None, **kwargs):
    """``numba.njit`` when available, the fallback otherwise.

    Usable bare (``@jit``) or with options (``@jit(fallback=numpy_version)``).
    Without an explicit ``fallback`` the undecorated function is used.
    """
    opts = {"cache": True, "nogil": True}
    opts.update(kwargs)

    def wrap(fn):
        _FALLBACKS[_key(fn)] = fallback if fallback is not None else fn
        if not HAVE_NUMBA:
            return _FALLBACKS[_key(fn)]
        return _nb.njit(**opts)(fn)

    if len(args) == 1 and callable(args[0]) and not kwargs and fallback is None:
        return wrap(args[0])
    return wrap


def py_func(fn):
    """Return the uncompiled Python body of a (possibly) jitted kernel."""
    return getattr(fn, "py_func", fn)


def fallback_of(fn):
    """The non-compiled implementation registered for kernel ``fn``."""
    return _FALLBACKS[_key(fn)]
