"""Reversal-curse laboratory: python surface over the C++ core."""

import os
import sys

try:
    from ._core import *  # noqa: F401,F403
    from . import _core as _core_module
except ImportError:  # build-tree layout: extension next to the build dir
    _ext_dir = os.environ.get("REVLAB_EXT_DIR")
    if not _ext_dir:
        raise
    sys.path.insert(0, _ext_dir)
    from _core import *  # noqa: F401,F403
    import _core as _core_module

__all__ = [name for name in dir(_core_module) if not name.startswith("_")]
__version__ = "0.1.0"
