"""Riemannian trust-region solver with truncated conjugate gradient.

The outer loop follows the standard scheme: build a quadratic model of
the objective in the tangent space at the current point, solve it
approximately inside the trust radius with a Steihaug-Toint truncated
conjugate gradient, retract the step, and accept or reject it based on
the ratio of actual to predicted decrease.  The radius shrinks by 1/4 on
poor steps and doubles (capped) on very successful steps that pressed
against the boundary.

The solver is generic over the objective variant: it only needs values,
Riemannian gradients, and Riemannian Hessian products bound to a point.
It never materializes a Hessian matrix.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .manifold import RetractionError, inner, norm, retract
from .objectives import NonFiniteError, Objective, ObjectiveAt

__all__ = [
    "INTERIOR",
    "BOUNDARY",
    "NEGATIVE_CURVATURE",
    "SolverConfig",
    "StepRecord",
    "SolverTrace",
    "minimize",
    "tcg_subproblem",
]

INTERIOR = "interior"
BOUNDARY = "boundary"
NEGATIVE_CURVATURE = "negative_curvature"

_MAX_CONSECUTIVE_NONFINITE = 30


@dataclass(frozen=True)
class SolverConfig:
    """Trust-region parameters.

    ``None`` entries are resolved from the problem size at solve time:
    the maximum radius defaults to the square root of the manifold's
    real dimension, the initial radius to 1/8 of that, and the inner
    iteration cap to the ambient real dimension.  ``scaling_norm`` is the
    Frobenius norm the driver rescales input pencils to before solving.
    """

    grad_tol: float = 1e-10
    max_outer_iters: int = 10_000
    max_inner_iters: int | None = None
    initial_radius: float | None = None
    max_radius: float | None = None
    rho_accept: float = 0.1
    kappa: float = 0.1
    theta: float = 1.0
    scaling_norm: float = 100.0

    def __post_init__(self) -> None:
        if not self.grad_tol > 0:
            raise ValueError("grad_tol must be positive")
        if self.max_outer_iters < 0:
            raise ValueError("max_outer_iters must be nonnegative")
        if not 0 < self.rho_accept < 0.25:
            raise ValueError("rho_accept must lie in (0, 1/4)")
        if not 0 < self.kappa < 1:
            raise ValueError("kappa must lie in (0, 1)")
        if not self.theta > 0:
            raise ValueError("theta must be positive")
        if not self.scaling_norm > 0:
            raise ValueError("scaling_norm must be positive")
        if self.initial_radius is not None and not self.initial_radius > 0:
            raise ValueError("initial_radius must be positive")
        if self.max_radius is not None and not self.max_radius > 0:
            raise ValueError("max_radius must be positive")
        if (
            self.initial_radius is not None
            and self.max_radius is not None
            and self.initial_radius > self.max_radius
        ):
            raise ValueError("initial_radius cannot exceed max_radius")

    def resolved(self, n: int, iscomplex: bool) -> tuple[int, float, float]:
        """(max_inner, initial_radius, max_radius) for an n x n problem."""
        manifold_dim = 2 * n * n if iscomplex else n * (n - 1)
        ambient_dim = 4 * n * n if iscomplex else 2 * n * n
        max_inner = self.max_inner_iters if self.max_inner_iters is not None else ambient_dim
        rmax = self.max_radius if self.max_radius is not None else math.sqrt(max(manifold_dim, 1))
        r0 = self.initial_radius if self.initial_radius is not None else rmax / 8.0
        return max(int(max_inner), 1), min(r0, rmax), rmax


@dataclass(frozen=True)
class StepRecord:
    """One outer iteration: inner-solve outcome and acceptance decision."""

    tcg_kind: str
    accepted: bool
    rho: float
    radius: float
    model_decrease: float
    cauchy_decrease: float
    inner_iterations: int
    f_before: float
    f_candidate: float
    grad_norm: float


@dataclass
class SolverTrace:
    """Diagnostics of one minimize call.

    ``objective_history`` holds the value at the start point followed by
    the value after every accepted step.  It is non-increasing up to the
    acceptance regularization floor of ``max(1, |f|) * 2.3e-12`` per
    step; steps whose decrease is below that floor are indistinguishable
    from roundoff but must still be taken for the gradient norm to reach
    tight tolerances.
    """

    iterations: int = 0
    final_gradient_norm: float = math.nan
    objective_history: list[float] = field(default_factory=list)
    steps: list[StepRecord] = field(default_factory=list)
    wall_time_seconds: float = 0.0
    converged: bool = False
    tie_events: int = 0

    @property
    def step_kinds(self) -> list[tuple[str, str]]:
        """Per step: ("accepted" | "rejected", tcg termination kind)."""
        return [("accepted" if s.accepted else "rejected", s.tcg_kind) for s in self.steps]


def _to_boundary(e_pe: float, e_pd: float, d_pd: float, radius: float) -> float:
    """Positive tau with ||eta + tau * delta|| = radius."""
    disc = e_pd * e_pd + d_pd * (radius * radius - e_pe)
    return (-e_pd + math.sqrt(max(disc, 0.0))) / d_pd


def _cauchy_decrease(gnorm: float, g_hg: float, radius: float) -> float:
    """Best model decrease along the steepest descent direction."""
    if gnorm == 0.0:
        return 0.0
    tb = radius / gnorm
    if g_hg <= 0:
        t = tb
    else:
        t = min(gnorm * gnorm / g_hg, tb)
    return t * gnorm * gnorm - 0.5 * t * t * g_hg


def _tcg(
    pe: ObjectiveAt,
    grad: np.ndarray,
    radius: float,
    kappa: float,
    theta: float,
    max_inner: int,
):
    """Steihaug-Toint truncated CG on the tangent-space model.

    Minimizes <grad, eta> + <eta, H eta>/2 within ||eta|| <= radius.
    Returns (eta, H eta, kind, inner iterations, cauchy decrease).  The
    Hessian product of the returned step is tracked incrementally so the
    caller gets the exact model decrease without an extra product.
    """
    eta = np.zeros_like(grad)
    heta = np.zeros_like(grad)
    r = grad.copy()
    r_r = inner(r, r)
    norm_r0 = math.sqrt(r_r)
    if norm_r0 == 0.0:
        return eta, heta, INTERIOR, 0, 0.0
    stop_tol = norm_r0 * min(norm_r0**theta, kappa)
    delta = -r
    e_pe = 0.0
    e_pd = 0.0
    d_pd = r_r
    cauchy = 0.0
    model = 0.0
    stagnant = 0
    for j in range(max_inner):
        hdelta = pe.riemannian_hessian_vec(delta)
        d_hd = inner(delta, hdelta)
        if j == 0:
            # delta = -grad here, so d_hd = <grad, H grad>.
            cauchy = _cauchy_decrease(norm_r0, d_hd, radius)
        if d_hd <= 0.0:
            tau = _to_boundary(e_pe, e_pd, d_pd, radius)
            return eta + tau * delta, heta + tau * hdelta, NEGATIVE_CURVATURE, j + 1, cauchy
        alpha = r_r / d_hd
        e_pe_new = e_pe + 2.0 * alpha * e_pd + alpha * alpha * d_pd
        if e_pe_new >= radius * radius:
            tau = _to_boundary(e_pe, e_pd, d_pd, radius)
            return eta + tau * delta, heta + tau * hdelta, BOUNDARY, j + 1, cauchy
        e_pe = e_pe_new
        eta = eta + alpha * delta
        heta = heta + alpha * hdelta
        r = r + alpha * hdelta
        r_r_new = inner(r, r)
        if math.sqrt(r_r_new) <= stop_tol:
            return eta, heta, INTERIOR, j + 1, cauchy
        # In exact arithmetic the model decreases strictly every CG step;
        # once it stops improving the residual target is below the
        # roundoff floor (e.g. along flat symmetry directions) and
        # further products are wasted.
        model_new = inner(grad, eta) + 0.5 * inner(eta, heta)
        stagnant = stagnant + 1 if model_new >= model - abs(model) * 1e-14 else 0
        if stagnant >= 2:
            return eta, heta, INTERIOR, j + 1, cauchy
        model = model_new
        beta = r_r_new / r_r
        r_r = r_r_new
        delta = -r + beta * delta
        e_pd = beta * (e_pd + alpha * d_pd)
        d_pd = r_r + beta * beta * d_pd
    return eta, heta, INTERIOR, max_inner, cauchy


def tcg_subproblem(
    spec: Objective,
    x: np.ndarray,
    grad: np.ndarray,
    radius: float,
    cfg: SolverConfig | None = None,
) -> tuple[np.ndarray, str]:
    """Approximately minimize the quadratic model at x within the radius.

    Returns the step and its termination kind (interior, boundary, or
    negative_curvature).
    """
    if not radius > 0:
        raise ValueError("radius must be positive")
    cfg = cfg or SolverConfig()
    pe = spec.at(x)
    max_inner, _, _ = cfg.resolved(x.shape[-1], np.iscomplexobj(x) or np.iscomplexobj(spec.pencil.coeffs))
    eta, _, kind, _, _ = _tcg(pe, grad, radius, cfg.kappa, cfg.theta, max_inner)
    return eta, kind


def minimize(
    spec: Objective,
    x0: np.ndarray,
    cfg: SolverConfig | None = None,
) -> tuple[np.ndarray, SolverTrace]:
    """Trust-region minimization of the objective from a starting point.

    Stops when the Riemannian gradient norm drops below ``grad_tol`` or
    the outer iteration cap is reached (the cap is reported through
    ``trace.converged``, not an exception).  Deterministic: identical
    inputs produce identical traces.
    """
    cfg = cfg or SolverConfig()
    t0 = time.perf_counter()
    iscomplex = np.iscomplexobj(x0) or np.iscomplexobj(spec.pencil.coeffs)
    max_inner, radius, rmax = cfg.resolved(x0.shape[-1], iscomplex)

    trace = SolverTrace()
    x = x0
    pe = spec.at(x)
    fx = pe.value
    trace.objective_history.append(fx)
    if pe.tie:
        trace.tie_events += 1
    grad = pe.riemannian_gradient()
    gnorm = norm(grad)
    rho_reg_eps = float(np.finfo(np.float64).eps) * 1e4
    nonfinite_streak = 0

    while trace.iterations < cfg.max_outer_iters:
        if gnorm <= cfg.grad_tol:
            trace.converged = True
            break
        eta, heta, kind, inner_iters, cauchy = _tcg(
            pe, grad, radius, cfg.kappa, cfg.theta, max_inner
        )
        mdec = -(inner(grad, eta) + 0.5 * inner(eta, heta))
        if not np.isfinite(mdec):
            raise NonFiniteError("non-finite trust-region model decrease")
        f_cand = math.inf
        pe_cand = None
        try:
            cand = retract(x, eta)
            pe_cand = spec.at(cand)
            f_cand = pe_cand.value
        except (RetractionError, NonFiniteError):
            pe_cand = None  # treated as an infinitely bad candidate
        if pe_cand is None:
            nonfinite_streak += 1
            if nonfinite_streak > _MAX_CONSECUTIVE_NONFINITE:
                raise NonFiniteError("trust-region candidates keep evaluating non-finite")
            rho = -math.inf
        else:
            nonfinite_streak = 0
            # Regularize the ratio so steps whose true decrease sits below
            # the floating-point resolution of f are still accepted; the
            # gradient keeps shrinking even when f differences cannot.
            reg = max(1.0, abs(fx)) * rho_reg_eps
            rho = (fx - f_cand + reg) / (mdec + reg) if mdec > 0 else -math.inf
        accepted = np.isfinite(rho) and rho > cfg.rho_accept
        trace.steps.append(
            StepRecord(
                tcg_kind=kind,
                accepted=accepted,
                rho=rho,
                radius=radius,
                model_decrease=mdec,
                cauchy_decrease=cauchy,
                inner_iterations=inner_iters,
                f_before=fx,
                f_candidate=f_cand,
                grad_norm=gnorm,
            )
        )
        trace.iterations += 1
        if rho < 0.25:
            radius *= 0.25
        elif rho > 0.75 and kind in (BOUNDARY, NEGATIVE_CURVATURE):
            radius = min(2.0 * radius, rmax)
        if accepted:
            x = cand
            pe = pe_cand
            fx = f_cand
            trace.objective_history.append(fx)
            if pe.tie:
                trace.tie_events += 1
            grad = pe.riemannian_gradient()
            gnorm = norm(grad)
        if radius < 1e-130:
            break  # radius underflow: numerically stalled
    trace.final_gradient_norm = gnorm
    trace.wall_time_seconds = time.perf_counter() - t0
    return x, trace
