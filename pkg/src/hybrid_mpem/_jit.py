"""numba shim: compiled when numba is importable, plain Python otherwise."""

try:
    from numba import njit as _njit
except ImportError:  # pragma: no cover
    _njit = None


def njit(*args, **kwargs):
    if _njit is None:  # pragma: no cover
        if args and callable(args[0]):
            return args[0]
        return lambda f: f
    kwargs.setdefault("cache", True)
    return _njit(*args, **kwargs)
