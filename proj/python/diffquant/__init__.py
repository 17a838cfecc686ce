"""Python surface of the quantization core.

The compiled module carries everything; this package re-exports it so the
installed layout (extension inside the package) and the build-tree layout
(extension on PYTHONPATH) import the same way.
"""

try:
    from ._diffquant import *  # noqa: F401,F403
    from . import _diffquant as _impl
except ImportError:
    from _diffquant import *  # noqa: F401,F403
    import _diffquant as _impl

__version__ = _impl.__version__
