"""Kinetic-inductance flux tuning.

A screening current raises the kinetic inductance quadratically, which pulls
the resonance down approximately as ``f(B) = f0 * (1 - k B^2)``. Biases are in
mT, frequencies in Hz.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from xduct.errors import SingularMatrixError, ValidationError

# Relative slack when testing a target against the tuning window edges.
_EDGE_RTOL = 1e-12


@dataclass(frozen=True)
class KineticInductanceLaw:
    l_k0: float
    i_star: float

    def __post_init__(self) -> None:
        if not (self.l_k0 > 0 and self.i_star > 0):
            raise ValidationError("l_k0 and i_star must be > 0")


def kinetic_inductance(law: KineticInductanceLaw, current):
    """L_k0 * (1 + (I/I*)^2). Warns when |I| exceeds I*, where the expansion is unreliable."""
    i = np.asarray(current, dtype=float)
    if np.any(np.abs(i) > law.i_star):
        warnings.warn("screening current exceeds the characteristic current", stacklevel=2)
    out = law.l_k0 * (1.0 + (i / law.i_star) ** 2)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class FluxTuneModel:
    """Quadratic tuning law for one flux-tunable resonance.

    Attributes:
        f0: zero-field resonance frequency (Hz).
        k: quadratic coefficient (1/mT^2).
        b_max: largest usable bias (mT).
    """

    f0: float
    k: float
    b_max: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.f0) and self.f0 > 0):
            raise ValidationError(f"f0 must be > 0, got {self.f0!r}")
        if not (math.isfinite(self.k) and self.k >= 0):
            raise ValidationError(f"k must be >= 0, got {self.k!r}")
        if not (math.isfinite(self.b_max) and self.b_max > 0):
            raise ValidationError(f"b_max must be > 0, got {self.b_max!r}")
        if self.max_fractional_shift >= 1:
            raise ValidationError("k * b_max^2 must be < 1 so the resonance stays positive")

    @property
    def max_fractional_shift(self) -> float:
        return self.k * self.b_max**2

    @property
    def f_min(self) -> float:
        """Lowest reachable frequency (at b_max)."""
        return self.f0 * (1.0 - self.max_fractional_shift)

    @classmethod
    def from_shift(cls, f0: float, delta_f: float, b: float, b_max: float | None = None) -> "FluxTuneModel":
        """Model whose resonance moves by ``delta_f`` (negative for red shift) at bias ``b``."""
        k = -delta_f / (f0 * b**2)
        return cls(f0=f0, k=k, b_max=b if b_max is None else b_max)


def frequency_at_bias(model: FluxTuneModel, b):
    b_arr = np.asarray(b, dtype=float)
    if np.any(b_arr < 0) or np.any(b_arr > model.b_max) or np.any(np.isnan(b_arr)):
        raise ValidationError(f"bias must lie in [0, {model.b_max}] mT")
    out = model.f0 * (1.0 - model.k * b_arr**2)
    return float(out) if out.ndim == 0 else out


def solve_bias(model: FluxTuneModel, f_target: float) -> float | None:
    """Bias (mT) that tunes the resonance onto ``f_target``.

    Returns ``None`` when the target lies above f0 or below the tuning floor;
    that is a coverage gap, not an error.
    """
    tol = _EDGE_RTOL * model.f0
    if f_target > model.f0 + tol or f_target < model.f_min - tol:
        return None
    if f_target >= model.f0 or model.k == 0:
        return 0.0 if abs(f_target - model.f0) <= tol else None
    b = math.sqrt((model.f0 - f_target) / (model.k * model.f0))
    return min(b, model.b_max)


@dataclass(frozen=True)
class FluxFit:
    model: FluxTuneModel
    f0_stderr: float
    k_stderr: float
    chi2_reduced: float
    covariance: np.ndarray

    def to_dict(self) -> dict:
        return {
            "f0_hz": self.model.f0,
            "k_per_mT2": self.model.k,
            "f0_stderr": self.f0_stderr,
            "k_stderr": self.k_stderr,
            "chi2_reduced": self.chi2_reduced,
        }


def fit_flux_quadratic(points, b_max: float | None = None) -> FluxFit:
    """Least-squares fit of ``f = f0 (1 - k b^2)`` to (b_mT, f_hz) pairs.

    The model is linear in ``(f0, f0*k)``; standard errors come from the
    residual covariance, propagated to ``k`` to first order. With exactly two
    distinct biases and two points there are no residual degrees of freedom and
    the standard errors are NaN.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValidationError("points must be a sequence of (b_mT, f_hz) pairs")
    b, f = pts[:, 0], pts[:, 1]
    if not np.all(np.isfinite(pts)):
        raise ValidationError("points must be finite")
    n_distinct = len(np.unique(b**2))
    if n_distinct < 2:
        raise SingularMatrixError("need at least two distinct |b| values to separate f0 from k")

    # Column scaling keeps the 2x2 normal system well conditioned (b^2 ~ 10, f ~ 1e9).
    x = b**2
    x_scale = float(np.max(x)) or 1.0
    design = np.column_stack([np.ones_like(x), -x / x_scale])
    coef, _, rank, _ = np.linalg.lstsq(design, f, rcond=None)
    if rank < 2:
        raise SingularMatrixError("degenerate design matrix")
    f0, f0k = coef[0], coef[1] / x_scale
    k = f0k / f0

    dof = len(f) - 2
    resid = f - (f0 - f0k * x)
    if dof > 0:
        chi2_red = float(resid @ resid / dof)
        xtx_inv = np.linalg.inv(design.T @ design)
        cov_ab = chi2_red * xtx_inv
        scale = np.diag([1.0, 1.0 / x_scale])
        cov_ab = scale @ cov_ab @ scale
        # Jacobian of (f0, k) w.r.t. (f0, f0k)
        jac = np.array([[1.0, 0.0], [-f0k / f0**2, 1.0 / f0]])
        cov = jac @ cov_ab @ jac.T
    else:
        chi2_red = math.nan
        cov = np.full((2, 2), math.nan)

    if b_max is None:
        b_max = float(np.max(np.abs(b))) or 1.0
    model = FluxTuneModel(f0=float(f0), k=float(k), b_max=b_max)
    return FluxFit(
        model=model,
        f0_stderr=float(math.sqrt(cov[0, 0])) if dof > 0 else math.nan,
        k_stderr=float(math.sqrt(cov[1, 1])) if dof > 0 else math.nan,
        chi2_reduced=chi2_red,
        covariance=cov,
    )


def tuning_curve(model: FluxTuneModel, n: int = 101) -> np.ndarray:
    """Rows of (b_mT, delta_f_hz) from 0 to b_max for plotting."""
    b = np.linspace(0.0, model.b_max, n)
    return np.column_stack([b, frequency_at_bias(model, b) - model.f0])
