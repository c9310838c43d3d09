"""Two-mode microwave converter with parametric gain on the idler.

Mode ``a`` is the signal, ``b`` the idler, pumped both by a beam-splitter
(conversion) tone of strength ``g`` and a degenerate parametric tone of
strength ``eps``. In the rotating frame

    H/ħ = −Δa a†a − Δb b†b + g(e^{−iφg} a b† + e^{iφg} a† b)
          + (ε/2)(e^{−iφε} b² + e^{iφε} b†²)

and, with da/dt = −i[a, H] − (κ/2)a + √κ_ex a_in + √κ_in a_loss, the
doubled vector v = (a, b, a†, b†) obeys dv/dt = M v + inputs. Outputs follow
a_out = √κ_ex a − a_in, so a critically coupled empty cavity absorbs
perfectly on resonance.

All rates are ordinary frequencies in Hz; ``omega`` arguments are probe
detunings in Hz. Since every entry of M is a rate, the 2π factor is common
and dropped: M and ω are both expressed in Hz throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from xduct.errors import ConvergenceError, InstabilityError, ValidationError

A, B, AD, BD = 0, 1, 2, 3
J4 = np.diag([1.0, 1.0, -1.0, -1.0])
J8 = np.diag([1.0, 1.0, -1.0, -1.0, 1.0, 1.0, -1.0, -1.0])
# Swaps (a, b) with (a†, b†).
SIGMA = np.block([[np.zeros((2, 2)), np.eye(2)], [np.eye(2), np.zeros((2, 2))]])

# Solves are refused when the smallest singular value of (−iω − M) falls below
# this fraction of its largest one.
_SINGULAR_RCOND = 1e-13


@dataclass(frozen=True)
class MmParams:
    delta_a: float
    delta_b: float
    g: float
    phi_g: float
    eps: float
    phi_eps: float
    kappa_a_in: float
    kappa_a_ex: float
    kappa_b_in: float
    kappa_b_ex: float

    def __post_init__(self) -> None:
        for name in ("kappa_a_in", "kappa_a_ex", "kappa_b_in", "kappa_b_ex", "g", "eps"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0):
                raise ValidationError(f"{name} must be finite and >= 0, got {value!r}")
        if self.kappa_a <= 0 or self.kappa_b <= 0:
            raise ValidationError("total decay rates must be > 0")

    @property
    def kappa_a(self) -> float:
        return self.kappa_a_in + self.kappa_a_ex

    @property
    def kappa_b(self) -> float:
        return self.kappa_b_in + self.kappa_b_ex

    @property
    def cooperativity(self) -> float:
        return 4.0 * self.g**2 / (self.kappa_a * self.kappa_b)

    def replace(self, **changes) -> "MmParams":
        fields = {k: getattr(self, k) for k in self.__dataclass_fields__}
        fields.update(changes)
        return MmParams(**fields)

    @classmethod
    def from_modes(cls, signal, idler, *, cooperativity: float = 0.0, eps: float = 0.0,
                   phi_g: float = 0.0, phi_eps: float = 0.0,
                   delta_a: float = 0.0, delta_b: float = 0.0) -> "MmParams":
        """Build parameters from two ``ModeSpec`` rates, setting g from a target C."""
        ka, kb = signal.total(), idler.total()
        g = math.sqrt(cooperativity * ka * kb) / 2.0
        return cls(delta_a, delta_b, g, phi_g, eps, phi_eps,
                   signal.kappa_in, signal.kappa_ex, idler.kappa_in, idler.kappa_ex)


@dataclass(frozen=True)
class DoubledSystem:
    m: np.ndarray
    k_ext: np.ndarray
    k_in: np.ndarray


@dataclass(frozen=True)
class NoiseInputs:
    """Thermal occupancies (quanta) of the four input baths."""

    a_ext: float = 0.0
    b_ext: float = 0.0
    a_loss: float = 0.0
    b_loss: float = 0.0

    def __post_init__(self) -> None:
        for name in ("a_ext", "b_ext", "a_loss", "b_loss"):
            if not getattr(self, name) >= 0:
                raise ValidationError(f"{name} occupancy must be >= 0")


def build_doubled_system(params: MmParams) -> DoubledSystem:
    p = params
    m = np.zeros((4, 4), dtype=complex)
    m[A, A] = 1j * p.delta_a - p.kappa_a / 2
    m[B, B] = 1j * p.delta_b - p.kappa_b / 2
    m[AD, AD] = np.conj(m[A, A])
    m[BD, BD] = np.conj(m[B, B])
    bs = p.g * np.exp(1j * p.phi_g)
    m[A, B] = -1j * bs
    m[B, A] = -1j * np.conj(bs)
    m[AD, BD] = 1j * np.conj(bs)
    m[BD, AD] = 1j * bs
    sq = p.eps * np.exp(1j * p.phi_eps)
    m[B, BD] = -1j * sq
    m[BD, B] = 1j * np.conj(sq)
    k_ext = np.diag([p.kappa_a_ex, p.kappa_b_ex, p.kappa_a_ex, p.kappa_b_ex]).astype(float)
    k_in = np.diag([p.kappa_a_in, p.kappa_b_in, p.kappa_a_in, p.kappa_b_in]).astype(float)
    return DoubledSystem(m=m, k_ext=k_ext, k_in=k_in)


def _system(obj) -> DoubledSystem:
    return build_doubled_system(obj) if isinstance(obj, MmParams) else obj


@dataclass(frozen=True)
class Scattering:
    """External 4×4 block and full 4×8 (external + loss inputs) scattering."""

    ext: np.ndarray
    full: np.ndarray

    def entry(self, out_port: int, in_port: int) -> complex:
        return complex(self.ext[out_port, in_port])


def scattering_matrix(sys, omega: float = 0.0) -> Scattering:
    """Input–output scattering at probe detuning ``omega`` (Hz).

    ``full`` maps (a_ex, b_ex, a_ex†, b_ex†, a_loss, b_loss, a_loss†, b_loss†)
    onto the four external outputs.

    Raises:
        InstabilityError: the system is at or beyond its parametric threshold,
            where (−iω − M) becomes singular on resonance and the linear
            response no longer describes a steady state.
    """
    sys = _system(sys)
    _require_stable(sys)
    lhs = -1j * omega * np.eye(4) - sys.m
    sv = np.linalg.svd(lhs, compute_uv=False)
    if sv[-1] <= _SINGULAR_RCOND * sv[0]:
        raise InstabilityError("dynamical matrix is singular at this frequency (instability threshold)")
    sk_ext = np.sqrt(sys.k_ext)
    coupling = np.hstack([sk_ext, np.sqrt(sys.k_in)])
    response = np.linalg.solve(lhs, coupling)
    full = sk_ext @ response
    full[:, :4] -= np.eye(4)
    return Scattering(ext=full[:, :4].copy(), full=full)


def symplectic_residual(s: Scattering) -> float:
    """max |S J S† − J| over the full doubled-basis scattering."""
    return float(np.max(np.abs(s.full @ J8 @ s.full.conj().T - J4)))


@dataclass(frozen=True)
class Stability:
    stable: bool
    max_real_eigenvalue: float


def stability(params) -> Stability:
    sys = _system(params)
    re_max = float(np.max(np.linalg.eigvals(sys.m).real))
    return Stability(stable=re_max < 0.0, max_real_eigenvalue=re_max)


def _require_stable(sys: DoubledSystem) -> None:
    st = stability(sys)
    if not st.stable:
        raise InstabilityError(f"system is unstable (max Re λ = {st.max_real_eigenvalue:.6g} Hz)")


def parametric_threshold(params: MmParams, *, rtol: float = 1e-13) -> float:
    """Smallest pump strength ε at which the system stops being stable.

    Found by bracketing the sign change of the largest real eigenvalue of M
    and refining with Brent's method.
    """
    def margin(eps: float) -> float:
        return stability(params.replace(eps=eps)).max_real_eigenvalue

    lo = 0.0
    if margin(lo) >= 0:
        return 0.0
    hi = max(params.kappa_b, params.kappa_a)
    while margin(hi) < 0:
        lo, hi = hi, 2.0 * hi
        if hi > 1e6 * (params.kappa_a + params.kappa_b + params.g):
            raise ConvergenceError("no parametric threshold found")
    return float(brentq(margin, lo, hi, xtol=1e-300, rtol=rtol, maxiter=500))


@dataclass(frozen=True)
class ConversionEfficiency:
    total: float
    internal: float
    cooperativity: float


def conversion_efficiency(params: MmParams) -> ConversionEfficiency:
    """On-resonance signal→idler power conversion |S_ba(0)|² without parametric gain."""
    if params.eps != 0.0:
        raise ValidationError("conversion efficiency is defined for eps = 0")
    if params.delta_a != 0.0 or params.delta_b != 0.0:
        raise ValidationError("conversion efficiency is defined for zero detunings")
    s = scattering_matrix(params, 0.0)
    c = params.cooperativity
    return ConversionEfficiency(
        total=abs(s.entry(B, A)) ** 2,
        internal=4.0 * c / (1.0 + c) ** 2,
        cooperativity=c,
    )


def conversion_efficiency_closed_form(params: MmParams) -> float:
    c = params.cooperativity
    return (params.kappa_a_ex / params.kappa_a) * (params.kappa_b_ex / params.kappa_b) * 4.0 * c / (1.0 + c) ** 2


def cooperativity_for_internal_efficiency(eta_internal: float) -> tuple[float, float]:
    """Both roots C of 4C/(1+C)² = η (the two roots are reciprocal)."""
    if not 0 < eta_internal <= 1:
        raise ValidationError("internal efficiency must lie in (0, 1]")
    # η(1+C)² = 4C  →  ηC² + (2η − 4)C + η = 0
    disc = math.sqrt((2 * eta_internal - 4) ** 2 - 4 * eta_internal**2)
    lo = ((4 - 2 * eta_internal) - disc) / (2 * eta_internal)
    return lo, 1.0 / lo


@dataclass(frozen=True)
class PhaseGain:
    gain: float
    g_max: float
    g_min: float


def phase_sensitive_gain(params, input_phase: float = 0.0, omega: float = 0.0) -> PhaseGain:
    """Power gain of a coherent tone of phase θ reflected off the idler port.

    gain(θ) = |S_bb + e^{−2iθ} S_{b,b†}|², whose extrema over θ are
    (|S_bb| ± |S_{b,b†}|)².
    """
    sys = _system(params)
    _require_stable(sys)
    s = scattering_matrix(sys, omega)
    s_bb, s_bbd = s.entry(B, B), s.entry(B, BD)
    gain = abs(s_bb + np.exp(-2j * input_phase) * s_bbd) ** 2
    return PhaseGain(gain=gain, g_max=(abs(s_bb) + abs(s_bbd)) ** 2, g_min=(abs(s_bb) - abs(s_bbd)) ** 2)


def output_occupancy(sys, noise: NoiseInputs, omega: float = 0.0) -> np.ndarray:
    """Occupancy (quanta) of the a and b external outputs.

    Symmetrized covariance transport: V_out = S V_in S† with input diagonal
    (n_j + 1/2); each output reports V_out,ii − 1/2.
    """
    sys = _system(sys)
    _require_stable(sys)
    s = scattering_matrix(sys, omega)
    n = np.array([noise.a_ext, noise.b_ext, noise.a_ext, noise.b_ext,
                  noise.a_loss, noise.b_loss, noise.a_loss, noise.b_loss])
    v_in = np.diag(n + 0.5)
    v_out = s.full @ v_in @ s.full.conj().T
    occ = np.real(np.diag(v_out))[:2] - 0.5
    return occ


def snr_enhancement(gain, eta_chain: float, n_add: float, n_hemt: float):
    """SNR improvement from a preamplifier of gain G ahead of a lossy link and a HEMT.

    ΔSNR = G (½ + n_HEMT) / (η G (½ + n_add) + n_HEMT), all in linear power units.
    """
    g = np.asarray(gain, dtype=float)
    if np.any(g < 1) or eta_chain < 0 or n_add < 0 or n_hemt < 0:
        raise ValidationError("need gain >= 1 and non-negative eta, n_add, n_hemt")
    return _snr_model(g, eta_chain * (0.5 + n_add), n_hemt)


def _snr_model(gain, p, n_hemt):
    out = gain * (0.5 + n_hemt) / (p * gain + n_hemt)
    return float(out) if np.ndim(out) == 0 else out


def snr_asymptote(p: float, n_hemt: float) -> float:
    """Large-gain limit (½ + n_HEMT) / p of the SNR enhancement, with p = η(½ + n_add)."""
    return (0.5 + n_hemt) / p


@dataclass(frozen=True)
class SnrFit:
    p: float
    p_stderr: float
    n_hemt: float
    chi2_reduced: float
    nfev: int

    def n_add_bound(self, eta_min: float) -> float:
        """Upper bound on the added noise, p/η_min − ½, given η ≥ η_min."""
        if eta_min <= 0:
            raise ValidationError("eta_min must be > 0")
        return self.p / eta_min - 0.5

    def to_dict(self, eta_min: float | None = None) -> dict:
        doc = {
            "params": {"p": self.p, "n_hemt": self.n_hemt},
            "stderr": {"p": self.p_stderr},
            "chi2_reduced": self.chi2_reduced,
        }
        if eta_min is not None:
            bound = self.n_add_bound(eta_min)
            doc["n_add_bound"] = {
                "eta_min": eta_min,
                "exact": bound,
                "rounded_up": math.ceil(bound * 10.0 - 1e-9) / 10.0,
            }
        return doc


def fit_snr_curve(gain_db, delta_snr_db, n_hemt: float, p0: float = 0.3) -> SnrFit:
    """Fit the composite p = η(½ + n_add) to measured ΔSNR-versus-gain points.

    Both axes are in dB and residuals are taken in dB, which is how the data
    are measured. ``n_hemt`` is held fixed.
    """
    from xduct.nlls import nlls

    x = np.asarray(gain_db, dtype=float)
    y = np.asarray(delta_snr_db, dtype=float)
    if x.shape != y.shape or x.ndim != 1 or x.size < 3:
        raise ValidationError("need at least 3 (gain_db, delta_snr_db) points")
    if np.ptp(x) < 10.0:
        raise ValidationError("gain points must span at least 10 dB")
    g_lin = 10.0 ** (x / 10.0)

    def residuals(theta):
        return 10.0 * np.log10(_snr_model(g_lin, theta[0], n_hemt)) - y

    def jac(theta):
        p = theta[0]
        return (-10.0 / math.log(10.0) * g_lin / (p * g_lin + n_hemt))[:, None]

    res = nlls(residuals, [p0], jac=jac, bounds=([1e-12], [np.inf]))
    return SnrFit(p=float(res.x[0]), p_stderr=float(res.stderr[0]), n_hemt=n_hemt,
                  chi2_reduced=res.chi2_reduced, nfev=res.nfev)


__all__ = [
    "A", "B", "AD", "BD", "J4", "J8", "SIGMA",
    "ConversionEfficiency", "DoubledSystem", "MmParams", "NoiseInputs", "PhaseGain",
    "Scattering", "SnrFit", "Stability",
    "build_doubled_system", "conversion_efficiency", "conversion_efficiency_closed_form",
    "cooperativity_for_internal_efficiency", "fit_snr_curve", "output_occupancy",
    "parametric_threshold", "phase_sensitive_gain", "scattering_matrix", "snr_asymptote",
    "snr_enhancement", "stability", "symplectic_residual",
]
