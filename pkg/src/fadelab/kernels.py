"""Backend selection for the hot loops.

The compiled extension ``fadelab._kernels`` is used when it imports;
otherwise, or when ``FADELAB_PURE_PYTHON=1`` is set, the numpy versions in
``fadelab._kernels_py`` are used. Both expose the same three functions.
"""

import os

from . import _kernels_py as python_impl

try:
    from . import _kernels as compiled_impl
except ImportError:  # extension not built
    compiled_impl = None

if compiled_impl is not None and os.environ.get("FADELAB_PURE_PYTHON", "") in ("", "0"):
    _impl = compiled_impl
    BACKEND = "cython"
else:
    _impl = python_impl
    BACKEND = "python"

sos_channel = _impl.sos_channel
gru_recur_forward = _impl.gru_recur_forward
gru_recur_backward = _impl.gru_recur_backward
