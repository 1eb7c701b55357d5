"""Central-difference verification of analytic gradients."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..errors import FcgraphError
from .params import Params

# Relative-error denominator floor: keeps coordinates whose true gradient is
# numerically zero from reporting spurious O(1) errors from FD noise.
_DENOM_FLOOR = 1e-6

LossAndGrads = Callable[[Params], tuple[float, dict[str, np.ndarray]]]


@dataclass
class GradCheckReport:
    per_param: dict[str, float]
    max_rel_error: float
    step: float
    tolerance: float
    passed: bool

    def __str__(self) -> str:
        lines = [
            f"grad check (h={self.step:g}, tol={self.tolerance:g}): "
            f"{'PASS' if self.passed else 'FAIL'} "
            f"(max rel err {self.max_rel_error:.3e})"
        ]
        for name, err in self.per_param.items():
            lines.append(f"  {name:<24s} {err:.3e}")
        return "\n".join(lines)


def grad_check(
    loss_and_grads: LossAndGrads,
    params: Params,
    h: float = 1e-5,
    tolerance: float = 1e-5,
    rng: np.random.Generator | None = None,
    min_coords: int = 32,
) -> GradCheckReport:
    """Compare analytic gradients to (f(p+h) - f(p-h)) / 2h per coordinate.

    Checks a random subsample of at least ``min_coords`` coordinates per
    parameter (all of them for small tensors). The closure must be
    deterministic: run it with dropout disabled.
    """
    rng = rng or np.random.default_rng(0)
    loss0, grads = loss_and_grads(params)
    if not math.isfinite(loss0):
        raise FcgraphError(f"non-finite loss {loss0!r} during gradient check")
    per_param: dict[str, float] = {}
    for name in params.names():
        tensor = params[name]
        analytic = grads[name]
        size = tensor.size
        n_probe = min(size, min_coords)
        coords = rng.choice(size, size=n_probe, replace=False)
        worst = 0.0
        flat = tensor.reshape(-1)
        for c in coords:
            orig = flat[c]
            flat[c] = orig + h
            f_plus, _ = loss_and_grads(params)
            flat[c] = orig - h
            f_minus, _ = loss_and_grads(params)
            flat[c] = orig
            if not (math.isfinite(f_plus) and math.isfinite(f_minus)):
                raise FcgraphError("non-finite loss during gradient check")
            numeric = (f_plus - f_minus) / (2.0 * h)
            a = float(analytic.reshape(-1)[c])
            rel = abs(a - numeric) / max(abs(a) + abs(numeric), _DENOM_FLOOR)
            worst = max(worst, rel)
        per_param[name] = worst
    max_rel = max(per_param.values()) if per_param else 0.0
    return GradCheckReport(
        per_param=per_param,
        max_rel_error=max_rel,
        step=h,
        tolerance=tolerance,
        passed=max_rel < tolerance,
    )
