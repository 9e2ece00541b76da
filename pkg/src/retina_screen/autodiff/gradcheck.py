"""Finite-difference gradient verification.

Central differences are the independent oracle for every differentiable
operation: the analytic gradient from a tape's backward pass is compared
coordinate by coordinate against (f(x+h) - f(x-h)) / 2h.
"""

import numpy as np

from ..errors import DimensionError, OracleFailure
from .tensor import Tape, Tensor


def finite_diff_check(f, at: Tensor, step: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``f`` maps one tensor to a scalar tensor and must be deterministic and
    twice differentiable at the probe point. The relative error per
    coordinate is |analytic - numeric| / max(1, |analytic|).

    Raises :class:`OracleFailure` when f produces a non-finite value at or
    around the probe point, which is a broken oracle rather than a
    gradient mismatch.
    """
    probe = Tensor(at.data.copy(), requires_grad=True)
    with Tape() as tape:
        out = f(probe)
    if out.size != 1:
        raise DimensionError(f"finite_diff_check needs a scalar f, got shape {out.shape}")
    if not np.isfinite(out.data).all():
        raise OracleFailure("f returned a non-finite value at the probe point")
    tape.backward(out)
    analytic = probe.grad_array()
    if not np.isfinite(analytic).all():
        raise OracleFailure("analytic gradient is non-finite")

    flat = at.data.reshape(-1)
    numeric = np.zeros_like(flat)
    for i in range(flat.size):
        numeric[i] = (_eval_shifted(f, flat, at.data.shape, i, step)
                      - _eval_shifted(f, flat, at.data.shape, i, -step)) / (2.0 * step)
    if not np.isfinite(numeric).all():
        raise OracleFailure("central differences hit a non-finite value of f")

    analytic_flat = analytic.reshape(-1)
    rel = np.abs(analytic_flat - numeric) / np.maximum(1.0, np.abs(analytic_flat))
    return float(rel.max())


def _eval_shifted(f, flat, shape, index, delta):
    shifted = flat.copy()
    shifted[index] += delta
    value = f(Tensor(shifted.reshape(shape)))
    return float(value.data.reshape(-1)[0])
