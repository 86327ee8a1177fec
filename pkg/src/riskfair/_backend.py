"""Pick the kernel implementation at import time.

The compiled extension is preferred. Set ``RISKFAIR_PURE_PYTHON=1`` to force
the numpy fallback (useful for benchmarking and for checking the two agree).
"""

import logging
import os

from . import _pykernels

logger = logging.getLogger(__name__)

python_kernels = _pykernels

try:
    from . import _ckernels as compiled_kernels
except ImportError:  # extension not built
    compiled_kernels = None

if compiled_kernels is not None and os.environ.get("RISKFAIR_PURE_PYTHON", "") not in ("1", "true"):
    kernels = compiled_kernels
else:
    kernels = _pykernels

logger.debug("riskfair kernel backend: %s", kernels.NAME)


def available_backends():
    """Kernel modules importable in this environment, compiled first."""
    out = []
    if compiled_kernels is not None:
        out.append(compiled_kernels)
    out.append(_pykernels)
    return out
