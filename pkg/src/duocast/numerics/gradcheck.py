"""Central-difference verification of tape gradients."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .layers import Parameter
from .tensor import backward


@dataclass
class ParamCheck:
    name: str
    max_rel_error: float
    worst_index: int
    analytic: float
    numeric: float


@dataclass
class GradcheckReport:
    tol: float
    eps: float
    checks: list[ParamCheck] = field(default_factory=list)

    @property
    def max_rel_error(self) -> float:
        return max((c.max_rel_error for c in self.checks), default=0.0)

    @property
    def failures(self) -> list[ParamCheck]:
        return [c for c in self.checks if c.max_rel_error >= self.tol]

    @property
    def ok(self) -> bool:
        return not self.failures

    def summary(self) -> str:
        status = "PASS" if self.ok else "FAIL"
        return (f"gradcheck {status}: {len(self.checks)} params, "
                f"max rel err {self.max_rel_error:.3e} (tol {self.tol:.1e})")


def _rel_error(a: float, n: float, floor: float = 1e-7) -> float:
    scale = max(abs(a), abs(n))
    if scale < floor:
        return 0.0
    return abs(a - n) / scale


def gradcheck(f, params: list[Parameter], eps: float = 1e-6, tol: float = 1e-4) -> GradcheckReport:
    """Compare tape gradients of the scalar ``f()`` against central differences.

    ``f`` must be a deterministic closure over ``params``. Run in 64-bit
    mode; 32-bit differencing is dominated by rounding noise.
    """
    report = GradcheckReport(tol=tol, eps=eps)
    for p in params:
        p.zero_grad()
    loss = f()
    backward(loss)
    analytic = {p.name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.value.data))
                for p in params}

    for p in params:
        base = p.value.data.copy()
        flat = base.ravel()
        a_flat = analytic[p.name].ravel()
        worst = ParamCheck(p.name, 0.0, -1, 0.0, 0.0)
        for i in range(flat.size):
            saved = flat[i]
            try:
                flat[i] = saved + eps
                p.value.data = flat.reshape(base.shape)
                f_plus = f().item()
                flat[i] = saved - eps
                p.value.data = flat.reshape(base.shape)
                f_minus = f().item()
            finally:
                flat[i] = saved
                p.value.data = flat.reshape(base.shape)
            numeric = (f_plus - f_minus) / (2.0 * eps)
            rel = _rel_error(a_flat[i], numeric)
            if rel > worst.max_rel_error:
                worst = ParamCheck(p.name, rel, i, float(a_flat[i]), float(numeric))
        report.checks.append(worst)
    return report
