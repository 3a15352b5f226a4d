"""Central finite-difference verification of tape gradients."""

from __future__ import annotations

import numpy as np

from .tape import NumericalError, Parameter, ParameterStore, Tape


def _named_params(params):
    if isinstance(params, ParameterStore):
        return list(params.items())
    return list(params)


def grad_check(f, params, step: float = 1e-5) -> float:
    """Worst relative error between tape and finite-difference gradients.

    `f(tape)` must rebuild the computation and return the scalar loss
    tensor; `f(None)` must evaluate the same loss at the parameters'
    current values without recording. Frozen parameters are skipped; with
    nothing to check the error over the empty set is defined as 0.

    The error for one scalar is |analytic - numeric| divided by
    max(|analytic|, |numeric|, 1e-8), with numeric the central difference
    (f(x+step) - f(x-step)) / (2 step).
    """
    if not 1e-7 <= step <= 1e-3:
        raise ValueError(f"step {step} outside [1e-7, 1e-3]")

    named = [(name, p) for name, p in _named_params(params) if not p.frozen]

    tape = Tape()
    loss = f(tape)
    if not np.isfinite(loss.data):
        raise NumericalError("grad_check: loss is not finite")
    tape.backward(loss)

    analytic = {}
    for name, p in named:
        g = tape.peek(p.tensor)
        analytic[name] = np.zeros_like(p.tensor.data) if g is None else g.copy()

    worst = 0.0
    for name, p in named:
        flat = p.tensor.data.reshape(-1)
        ga = analytic[name].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = float(f(None).data)
            flat[i] = orig - step
            down = float(f(None).data)
            flat[i] = orig
            if not (np.isfinite(up) and np.isfinite(down)):
                raise NumericalError(f"grad_check: non-finite loss perturbing {name}[{i}]")
            numeric = (up - down) / (2.0 * step)
            denom = max(abs(ga[i]), abs(numeric), 1e-8)
            err = abs(ga[i] - numeric) / denom
            if err > worst:
                worst = err
    return worst
