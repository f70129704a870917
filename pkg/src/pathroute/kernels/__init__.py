"""Convolution gather/scatter kernels with import-time backend selection.

If the compiled extension has been built (``python setup.py build_ext
--inplace`` or a regular install), it is used; otherwise the pure-numpy
fallback takes over transparently.  ``BACKEND`` records which one is
live.  Set ``PATHROUTE_FORCE_NUMPY=1`` to force the fallback, e.g. for
the benchmark in ``benchmarks/bench_conv.py``.
"""

import os

from . import fallback

BACKEND = "numpy"
im2col = fallback.im2col
col2im = fallback.col2im

if not os.environ.get("PATHROUTE_FORCE_NUMPY"):
    try:
        from . import _convext

        BACKEND = "cython"
        im2col = _convext.im2col
        col2im = _convext.col2im
    except ImportError:
        pass
