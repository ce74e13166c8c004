"""Backend selection for the statevector kernels.

The Cython extension is used when it was built; otherwise the numpy
implementation in ``_pykernels`` is loaded. Setting ``FRAGSIM_PURE_PYTHON=1``
forces the fallback.
"""

from __future__ import annotations

import os

from fragsim import _pykernels

python_backend = _pykernels

if os.environ.get("FRAGSIM_PURE_PYTHON", "") not in ("", "0"):
    _impl = _pykernels
    BACKEND = "python"
else:
    try:
        from fragsim import _kernels as _impl  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels
        BACKEND = "python"

compiled_backend = _impl if BACKEND == "cython" else None

RX, RY, CRZ = 0, 1, 2

apply_terms = _impl.apply_terms
circuit_forward = _impl.circuit_forward
circuit_adjoint = _impl.circuit_adjoint
