"""Per-step survival, instantaneous decay rate, and the compound survival product.

Two branches are available wherever the step survival enters a product:

``literal``
    the exact step survival ``Tr(lam rho(delta))`` is compounded as is;
``idealized``
    the homogeneous idealization ``1 - delta * rate`` with ``rate`` taken from
    :func:`instantaneous_rate`.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ValidationError
from .operators import (
    _as_density,
    _as_projector,
    _check_same_dim,
    check_hermitian,
    evolve,
    propagator,
    trace_prob,
)

logger = logging.getLogger(__name__)

IMAG_RESIDUE_TOL = 1e-10
BRANCHES = ("idealized", "literal")


@dataclass(frozen=True)
class SequencePlan:
    """``steps`` equally spaced interactions over ``total_time``."""

    total_time: float
    steps: int

    def __post_init__(self):
        if not (np.isfinite(self.total_time) and self.total_time > 0):
            raise ValidationError(f"total_time must be positive and finite, got {self.total_time}")
        if int(self.steps) != self.steps or self.steps < 1:
            raise ValidationError(f"steps must be a positive integer, got {self.steps}")
        object.__setattr__(self, "steps", int(self.steps))

    @property
    def delta(self) -> float:
        return self.total_time / self.steps

    def times(self) -> np.ndarray:
        """Interaction times ``delta, 2 delta, ..., total_time``."""
        return self.total_time * np.arange(1, self.steps + 1) / self.steps


@dataclass(frozen=True)
class RateEstimate:
    rate: float
    method: str
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.method not in ("formula", "finite_difference", "fit"):
            raise ValueError(f"unknown rate method {self.method!r}")
        if not math.isfinite(self.rate):
            raise ValidationError(f"rate is not finite: {self.rate}")

    def __float__(self):
        return float(self.rate)


def _check_triple(lam, rho, h):
    lam = _as_projector(lam)
    rho = _as_density(rho)
    h = check_hermitian(h, "hamiltonian")
    _check_same_dim(lam.matrix, rho.matrix, h)
    return lam, rho, h


def instantaneous_rate(lam, rho, h, hbar=1.0) -> RateEstimate:
    """Decay rate ``(i/hbar) Tr(rho [lam, H])`` at zero elapsed time.

    This equals ``-d/ddelta Tr(lam rho(delta))`` at ``delta = 0``.  The
    imaginary part, which must vanish for Hermitian inputs, is kept in the
    diagnostics and raises if larger than ``1e-10``.
    """
    lam, rho, h = _check_triple(lam, rho, h)
    L, R = lam.matrix, rho.matrix
    value = 1j / hbar * np.trace(R @ (L @ h - h @ L))
    residue = abs(value.imag)
    if residue > IMAG_RESIDUE_TOL:
        raise ValidationError(f"rate has imaginary residue {residue:.3e}")
    return RateEstimate(float(value.real), "formula", {"imag_residue": float(residue), "hbar": hbar})


def per_step_survival(lam, rho, h, delta, hbar=1.0) -> float:
    if delta < 0:
        raise ValidationError("delta must be non-negative")
    return trace_prob(lam, evolve(rho, h, delta, hbar))


def _step_decay(lam, rho, h, delta, hbar):
    """Trace-normalized decay probability after evolving for ``delta``.

    Both probabilities are squared Frobenius norms of ``P U sqrt(rho)``, so a
    leakage that vanishes exactly (the commuting case) comes out at rounding
    error squared rather than rounding error.
    """
    lam, rho, h = _check_triple(lam, rho, h)
    w, vecs = np.linalg.eigh(rho.matrix)
    # populations at eigen-solver noise level are zero; their square roots are not small
    w = np.where(w > rho.dim * np.finfo(float).eps * w[-1], w, 0.0)
    root = vecs * np.sqrt(w)
    moved = propagator(h, delta, hbar) @ root
    kept = lam.matrix @ moved
    p = float(np.sum(np.abs(kept) ** 2))
    q = float(np.sum(np.abs(moved - kept) ** 2))
    return q / (p + q)


def rate_finite_difference(lam, rho, h, delta, hbar=1.0) -> RateEstimate:
    """Central difference ``-[s(delta) - s(-delta)] / (2 delta)`` of the step survival."""
    if not delta > 0:
        raise ValidationError("delta must be positive")
    lam, rho, h = _check_triple(lam, rho, h)
    # difference of decay probabilities: same value, better conditioned near s = 1
    plus = _step_decay(lam, rho, h, delta, hbar)
    minus = _step_decay(lam, rho, h, -delta, hbar)
    rate = (plus - minus) / (2 * delta)
    return RateEstimate(rate, "finite_difference", {"delta": delta, "hbar": hbar})


def compound_product(step_survival, n) -> float:
    """``step_survival ** n`` accumulated in log space; 0 if the step survival is 0."""
    if not 0 <= step_survival <= 1:
        raise ValidationError(f"step survival {step_survival} outside [0, 1]")
    if step_survival == 0:
        return 0.0
    return math.exp(n * math.log(step_survival))


def _compound_from_decay(q, n):
    if q >= 1:
        return 0.0
    return math.exp(n * math.log1p(-q))


def idealized_step_survival(rate, delta) -> float:
    return 1.0 - delta * float(rate)


def idealized_survival(rate, plan: SequencePlan) -> float:
    """Compound the idealized step survival ``1 - delta * rate`` over the plan."""
    q = plan.delta * float(rate)
    if q < 0:
        raise ValidationError("idealized survival needs a non-negative rate")
    return _compound_from_decay(q, plan.steps)


def compound_survival(lam, rho, h, plan: SequencePlan, hbar=1.0, branch="literal") -> float:
    """Probability that all ``plan.steps`` interactions find the system undecayed."""
    if branch == "literal":
        q = _step_decay(lam, rho, h, plan.delta, hbar)
        return _compound_from_decay(q, plan.steps)
    if branch == "idealized":
        rate = instantaneous_rate(lam, rho, h, hbar).rate
        return idealized_survival(max(rate, 0.0), plan)
    raise ValueError(f"unknown branch {branch!r}; expected one of {BRANCHES}")


@dataclass(frozen=True)
class SweepResult:
    """Rows of ``(N, survival, |survival - exp(-rate t)|)``."""

    rows: list
    rate: float
    total_time: float
    branch: str
    decaying: bool

    def errors(self) -> np.ndarray:
        return np.array([r[2] for r in self.rows])


def convergence_sweep(lam, rho, h, t, n_values, hbar=1.0, branch="idealized") -> SweepResult:
    """Compound survival at total time ``t`` for each step count in ``n_values``.

    The reference curve is ``exp(-rate t)`` with ``rate`` from
    :func:`instantaneous_rate`.  In the idealized branch a non-positive rate
    is reported as non-decaying (survival 1 for every ``N``).
    """
    n_values = [int(n) for n in n_values]
    if not n_values or any(b <= a for a, b in zip(n_values, n_values[1:])):
        raise ValidationError("n_values must be non-empty and strictly ascending")
    rate = instantaneous_rate(lam, rho, h, hbar).rate
    limit = math.exp(-rate * t)
    decaying = rate > 0
    rows = []
    for n in n_values:
        plan = SequencePlan(t, n)
        if branch == "idealized":
            if not decaying:
                if rate < 0:
                    logger.warning("negative formula rate %.3e: reported as non-decaying", rate)
                rows.append((n, 1.0, abs(1.0 - limit) if rate < 0 else 0.0))
                continue
            surv = idealized_survival(rate, plan)
        elif branch == "literal":
            surv = compound_survival(lam, rho, h, plan, hbar, branch="literal")
        else:
            raise ValueError(f"unknown branch {branch!r}; expected one of {BRANCHES}")
        rows.append((n, surv, abs(surv - limit)))
    return SweepResult(rows, rate, float(t), branch, decaying)
