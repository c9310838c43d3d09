"""Levenberg–Marquardt least squares shared by every fitter in the package.

The engine minimizes ``0.5 * ||r(x)||^2`` for a residual callable ``r``. Each
trial step solves the damped Gauss–Newton system as the augmented
least-squares problem ``[J; sqrt(lam) D] dx = [-r; 0]`` with Marquardt's
diagonal scaling ``D = sqrt(diag(J^T J))``, so parameters with very different
units (seconds next to dimensionless amplitudes) are treated evenly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from xduct.errors import ConvergenceError, SingularMatrixError, ValidationError

ResidualFn = Callable[[np.ndarray], np.ndarray]
JacobianFn = Callable[[np.ndarray], np.ndarray]

MAX_ITER = 200
XTOL = 1e-10
FTOL = 1e-12
DIFF_STEP = 1e-6
_LAMBDA_INIT = 1e-3
_LAMBDA_UP = 10.0
_LAMBDA_DOWN = 0.1
_LAMBDA_MAX = 1e16
_RCOND = 1e-13


@dataclass(frozen=True)
class NllsResult:
    x: np.ndarray
    covariance: np.ndarray
    stderr: np.ndarray
    residual_norm: float
    chi2_reduced: float
    residuals: np.ndarray
    jacobian: np.ndarray
    niter: int
    nfev: int
    status: str


def forward_difference_jacobian(fun: ResidualFn, x: np.ndarray, r0: np.ndarray | None = None,
                                rel_step: float = DIFF_STEP) -> np.ndarray:
    """Forward-difference Jacobian with a per-parameter relative step.

    Parameters sitting at exactly zero get an absolute step of ``rel_step``.
    """
    x = np.asarray(x, dtype=float)
    r0 = fun(x) if r0 is None else r0
    jac = np.empty((r0.size, x.size))
    for j in range(x.size):
        h = rel_step * abs(x[j]) if x[j] != 0 else rel_step
        xp = x.copy()
        xp[j] += h
        h = xp[j] - x[j]  # exactly representable step
        jac[:, j] = (fun(xp) - r0) / h
    return jac


def central_difference_jacobian(fun: ResidualFn, x: np.ndarray, rel_step: float = 1e-5) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    cols = []
    for j in range(x.size):
        h = rel_step * abs(x[j]) if x[j] != 0 else rel_step
        xp, xm = x.copy(), x.copy()
        xp[j] += h
        xm[j] -= h
        cols.append((fun(xp) - fun(xm)) / (xp[j] - xm[j]))
    return np.column_stack(cols)


def _covariance(jac: np.ndarray, chi2_red: float) -> np.ndarray:
    # Column equilibration before the pseudo-inverse keeps unit disparities from
    # masquerading as rank deficiency.
    norms = np.linalg.norm(jac, axis=0)
    if np.any(norms == 0):
        raise SingularMatrixError("Jacobian has an all-zero column; a parameter is unconstrained")
    js = jac / norms
    u, s, vt = np.linalg.svd(js, full_matrices=False)
    if s[-1] <= _RCOND * s[0]:
        raise SingularMatrixError("Jacobian is rank deficient at the solution")
    inv_jtj = (vt.T / s**2) @ vt
    return chi2_red * inv_jtj / np.outer(norms, norms)


def nlls(
    fun: ResidualFn,
    x0: Sequence[float],
    jac: JacobianFn | None = None,
    bounds: tuple[Sequence[float], Sequence[float]] | None = None,
    *,
    max_iter: int = MAX_ITER,
    xtol: float = XTOL,
    ftol: float = FTOL,
    scale_covariance: bool = True,
) -> NllsResult:
    """Minimize the sum of squared residuals with a Levenberg–Marquardt schedule.

    Args:
        fun: residual vector as a function of the parameter vector.
        x0: starting point; must lie inside ``bounds``.
        jac: analytic Jacobian of ``fun``. Forward differences (relative step
            1e-6) are used when omitted.
        bounds: optional ``(lower, upper)`` arrays; trial points are clipped.
        max_iter: iteration cap.
        xtol: stop when the accepted step is below ``xtol`` relative to ``|x|``.
        ftol: stop when an accepted step changes the cost by less than ``ftol``
            relative.
        scale_covariance: multiply ``(J^T J)^-1`` by the reduced chi-square.

    Returns:
        NllsResult with the solution, covariance and standard errors.

    Raises:
        ConvergenceError: the iteration cap was reached.
        SingularMatrixError: the Jacobian at the solution is rank deficient.
    """
    x = np.array(x0, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise ValidationError("x0 must be a non-empty 1-D vector")
    if bounds is None:
        lo = np.full(x.size, -np.inf)
        hi = np.full(x.size, np.inf)
    else:
        lo = np.broadcast_to(np.asarray(bounds[0], dtype=float), x.shape).copy()
        hi = np.broadcast_to(np.asarray(bounds[1], dtype=float), x.shape).copy()
    if np.any(x < lo) or np.any(x > hi):
        raise ValidationError("initial point lies outside the bounds")

    nfev = 0

    def evaluate(p):
        nonlocal nfev
        nfev += 1
        out = np.asarray(fun(p), dtype=float)
        return out

    def jacobian(p, r):
        nonlocal nfev
        if jac is not None:
            return np.asarray(jac(p), dtype=float)
        nfev += p.size
        return forward_difference_jacobian(fun, p, r)

    r = evaluate(x)
    if not np.all(np.isfinite(r)):
        raise ValidationError("residuals are not finite at the initial point")
    cost = 0.5 * float(r @ r)
    lam = None
    status = ""
    niter = 0
    J = jacobian(x, r)

    while True:
        if cost == 0.0:
            status = "zero residual"
            break
        if niter >= max_iter:
            raise ConvergenceError(f"no convergence after {max_iter} iterations")
        niter += 1

        diag = np.sqrt(np.sum(J * J, axis=0))
        diag[diag == 0] = 1.0
        if lam is None:
            lam = _LAMBDA_INIT
        accepted = False
        while not accepted:
            aug_a = np.vstack([J, math.sqrt(lam) * np.diag(diag)])
            aug_b = np.concatenate([-r, np.zeros(x.size)])
            step, *_ = np.linalg.lstsq(aug_a, aug_b, rcond=None)
            x_new = np.clip(x + step, lo, hi)
            step = x_new - x
            small_step = np.linalg.norm(step * diag) <= xtol * np.linalg.norm(x * diag)
            r_new = evaluate(x_new)
            cost_new = 0.5 * float(r_new @ r_new) if np.all(np.isfinite(r_new)) else math.inf
            if cost_new <= cost:
                accepted = True
                d_cost = (cost - cost_new) / cost
                x, r, cost = x_new, r_new, cost_new
                lam = max(lam * _LAMBDA_DOWN, 1e-12)
                if small_step:
                    status = "xtol"
                elif d_cost < ftol:
                    status = "ftol"
            else:
                lam *= _LAMBDA_UP
                if small_step or lam > _LAMBDA_MAX:
                    # No downhill step exists above round-off: stationary point.
                    status = "stationary"
                    break
        if status:
            break
        J = jacobian(x, r)

    J = jacobian(x, r)
    dof = r.size - x.size
    chi2_red = 2.0 * cost / dof if dof > 0 else math.nan
    if scale_covariance:
        cov = _covariance(J, chi2_red if dof > 0 else math.nan)
    else:
        cov = _covariance(J, 1.0)
    return NllsResult(
        x=x,
        covariance=cov,
        stderr=np.sqrt(np.abs(np.diag(cov))),
        residual_norm=math.sqrt(2.0 * cost),
        chi2_reduced=chi2_red,
        residuals=r,
        jacobian=J,
        niter=niter,
        nfev=nfev,
        status=status,
    )


def curve_fit(model: Callable[..., np.ndarray], x, y, p0: Sequence[float],
              jac: Callable[..., np.ndarray] | None = None, sigma=None, **kwargs) -> NllsResult:
    """Fit ``y ≈ model(x, *params)``; ``jac(x, *params)`` returns d model / d params."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    w = 1.0 if sigma is None else 1.0 / np.asarray(sigma, dtype=float)
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValidationError("data must be finite")

    def residuals(p):
        return (model(x, *p) - y) * w

    jfun = None
    if jac is not None:
        def jfun(p):
            return jac(x, *p) * (w if np.ndim(w) == 0 else w[:, None])

    return nlls(residuals, p0, jac=jfun, **kwargs)
