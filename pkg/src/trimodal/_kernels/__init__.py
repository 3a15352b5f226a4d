"""Kernel backend selection.

The compiled extension is preferred when importable; the NumPy reference
implementation is the fallback. TRIMODAL_KERNELS=python|compiled|auto
overrides the choice at import time (compiled raises if the extension is
missing). Both backends implement the same four functions with identical
semantics; see _ref.py for the contract.
"""

from __future__ import annotations

import os

from . import _ref


def load_backend(name: str):
    """Return the backend module for 'python' or 'compiled'."""
    if name == "python":
        return _ref
    if name == "compiled":
        from . import _fast
        return _fast
    raise ValueError(f"unknown kernel backend {name!r}")


def available_backends() -> list[str]:
    names = ["python"]
    try:
        load_backend("compiled")
        names.append("compiled")
    except ImportError:
        pass
    return names


_requested = os.environ.get("TRIMODAL_KERNELS", "auto")
if _requested == "auto":
    try:
        _impl = load_backend("compiled")
    except ImportError:
        _impl = _ref
elif _requested in ("python", "compiled"):
    _impl = load_backend(_requested)
else:
    raise ValueError(f"TRIMODAL_KERNELS={_requested!r}: expected auto, python or compiled")


def set_backend(name: str) -> None:
    """Switch the active backend (used by tests and benchmarks)."""
    global _impl
    _impl = load_backend(name)


def backend_name() -> str:
    return _impl.BACKEND


def lstm_step_forward(*args):
    return _impl.lstm_step_forward(*args)


def lstm_step_backward(*args):
    return _impl.lstm_step_backward(*args)


def lstm_seq_forward(*args):
    return _impl.lstm_seq_forward(*args)


def lstm_seq_backward(*args):
    return _impl.lstm_seq_backward(*args)
