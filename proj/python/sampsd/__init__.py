"""SAM-enhanced poisoned-sample detection lab: python bindings.

The heavy lifting lives in the compiled `_core` module; this package just
re-exports it so `import sampsd` works both from an installed wheel and from
a CMake build tree (with the build directory on PYTHONPATH).
"""

try:
    from ._core import *  # noqa: F401,F403
    from ._core import __version__  # noqa: F401
except ImportError:  # build-tree layout
    from _core import *  # noqa: F401,F403
    from _core import __version__  # noqa: F401
