"""Electro-optic (microwave-to-optical) conversion stage.

Rates on the device card are ordinary frequencies; the formulas below work in
angular units internally where the 2π factors do not cancel.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from xduct.errors import ValidationError
from xduct.params import CONSTANTS, DeviceCard

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class EoOperatingPoint:
    """Device card plus pump power (W) and triple-resonance mismatch δ (Hz).

    ``microwave_detuning`` is ω_m − (ω₊ − ω₋). It defaults to 0, i.e. the
    optical splitting has been tuned onto the microwave mode.
    """

    card: DeviceCard
    pump_power_onchip: float
    microwave_detuning: float = 0.0
    probe_detuning: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self) -> None:
        if not (math.isfinite(self.pump_power_onchip) and self.pump_power_onchip >= 0):
            raise ValidationError(f"pump power must be >= 0 W, got {self.pump_power_onchip!r}")
        object.__setattr__(self, "probe_detuning", np.asarray(self.probe_detuning, dtype=float))

    def with_power(self, power: float) -> "EoOperatingPoint":
        return EoOperatingPoint(self.card, power, self.microwave_detuning, self.probe_detuning)


def pump_photon_number(point: EoOperatingPoint) -> float:
    """Intracavity pump photons, 4 P κ₋,ex / (ħ ω₋ κ₋²), pump on the ω₋ resonance."""
    om = point.card.optical_minus
    kappa_ex = TWO_PI * om.kappa_ex
    kappa = TWO_PI * om.total()
    omega = TWO_PI * om.frequency
    return 4.0 * point.pump_power_onchip * kappa_ex / (CONSTANTS.hbar * omega * kappa**2)


def cooperativity(point: EoOperatingPoint) -> float:
    """C_eo = 4 n_p g_eo² / (κ_m κ₊); the 2π factors cancel."""
    card = point.card
    n_p = pump_photon_number(point)
    return 4.0 * n_p * card.g_eo**2 / (card.microwave.total() * card.optical_plus.total())


def extraction_bound(card: DeviceCard) -> float:
    """(κ₊,ex/κ₊)(κ_m,ex/κ_m): the efficiency ceiling reached at C_eo = 1."""
    return card.optical_plus.extraction_ratio * card.microwave.extraction_ratio


def internal_efficiency(c: float) -> float:
    return 4.0 * c / (1.0 + c) ** 2


def on_chip_efficiency(point: EoOperatingPoint) -> float:
    return extraction_bound(point.card) * internal_efficiency(cooperativity(point))


def optimal_pump_power(card: DeviceCard) -> float:
    """Pump power (W) that puts C_eo at exactly 1."""
    c_per_watt = cooperativity(EoOperatingPoint(card, 1.0))
    return 1.0 / c_per_watt


def _susceptibility(kappa_hz: float, detuning_hz):
    return 1.0 / (TWO_PI * kappa_hz / 2.0 - 1j * TWO_PI * np.asarray(detuning_hz, dtype=float))


def transduction_spectrum(point: EoOperatingPoint, probe_detuning=None) -> np.ndarray:
    """Complex S_eo on the probe-detuning grid (Hz from the microwave resonance).

    Product-of-susceptibilities lineshape,
    ``S ∝ sqrt(κ_m,ex κ₊,ex) · G · χ_m(Δ) χ₊(Δ − δ)`` with ``G = g_eo sqrt(n_p)``,
    scaled by 1/(1 + C_eo) so that at Δ = δ = 0 it reproduces the peak
    on-chip efficiency exactly.
    """
    grid = point.probe_detuning if probe_detuning is None else np.asarray(probe_detuning, dtype=float)
    if grid.size == 0:
        raise ValidationError("probe detuning grid is empty")
    card = point.card
    coupling = TWO_PI * card.g_eo * math.sqrt(pump_photon_number(point))
    prefactor = TWO_PI * math.sqrt(card.microwave.kappa_ex * card.optical_plus.kappa_ex)
    chi_m = _susceptibility(card.microwave.total(), grid)
    chi_p = _susceptibility(card.optical_plus.total(), grid - point.microwave_detuning)
    return prefactor * coupling * chi_m * chi_p / (1.0 + cooperativity(point))


def bandwidth_3db(detuning, mag2) -> float:
    """Full width between the half-power crossings of a sampled peak.

    Crossings are located by linear interpolation between the bracketing
    samples on either side of the global maximum.

    Raises:
        ValidationError: the peak sits on a grid edge or the spectrum never
            drops to half power on one side.
    """
    x = np.asarray(detuning, dtype=float)
    y = np.asarray(mag2, dtype=float)
    if x.shape != y.shape or x.ndim != 1 or x.size < 3:
        raise ValidationError("need matching 1-D arrays with at least 3 samples")
    i_pk = int(np.argmax(y))
    if i_pk == 0 or i_pk == len(y) - 1:
        raise ValidationError("no half-power crossing: peak at grid edge")
    half = y[i_pk] / 2.0

    below_left = np.nonzero(y[:i_pk] <= half)[0]
    below_right = np.nonzero(y[i_pk:] <= half)[0]
    if below_left.size == 0 or below_right.size == 0:
        raise ValidationError("no half-power crossing: width exceeds the grid")
    i = below_left[-1]
    x_lo = x[i] + (half - y[i]) * (x[i + 1] - x[i]) / (y[i + 1] - y[i])
    j = i_pk + below_right[0]
    x_hi = x[j - 1] + (half - y[j - 1]) * (x[j] - x[j - 1]) / (y[j] - y[j - 1])
    return float(x_hi - x_lo)


@dataclass(frozen=True)
class FieldProfiles:
    """Mode-solver fields sampled on a rectangular (r, z) grid of shape (nr, nz).

    ``r33`` is in pm/V, ``ring_radius`` in m, ``omegas`` = (f₋, f₊, f_m) in Hz.
    """

    dr: float
    dz: float
    u_oz: np.ndarray
    u_mr: np.ndarray
    u_mz: np.ndarray
    eps_ozz: np.ndarray
    eps_mrr: np.ndarray
    eps_mzz: np.ndarray
    r33: float
    ring_radius: float
    omegas: tuple[float, float, float]

    def __post_init__(self) -> None:
        shape = np.shape(self.u_oz)
        for name in ("u_oz", "u_mr", "u_mz", "eps_ozz", "eps_mrr", "eps_mzz"):
            arr = np.asarray(getattr(self, name))
            if arr.shape != shape or arr.ndim != 2:
                raise ValidationError(f"{name} must be 2-D with shape {shape}")
            object.__setattr__(self, name, arr)
        if not (self.dr > 0 and self.dz > 0):
            raise ValidationError("grid spacings must be > 0")
        if self.ring_radius <= 0:
            raise ValidationError("ring_radius must be > 0")
        if len(self.omegas) != 3 or min(self.omegas) <= 0:
            raise ValidationError("omegas must be three positive frequencies")


def _trapz2(values: np.ndarray, dr: float, dz: float):
    return np.trapezoid(np.trapezoid(values, dx=dz, axis=1), dx=dr, axis=0)


def compute_geo(profiles: FieldProfiles) -> float:
    """Single-photon electro-optic coupling rate (Hz) from field overlaps.

    Evaluates

        g = sqrt(ħ ω₋ ω₊ ω_m / (8π ε₀ R))
            · ∬ ε_o,zz² r33 |u_o,z|² u_m,z / ∬ ε_o,zz |u_o,z|²
            / sqrt(∬ ε_m,rr |u_m,r|² + ε_m,zz |u_m,z|²)

    by 2-D trapezoidal quadrature and returns |g| / 2π.
    """
    p = profiles
    w_minus, w_plus, w_m = (TWO_PI * f for f in p.omegas)
    r33 = p.r33 * 1e-12
    opt2 = np.abs(p.u_oz) ** 2
    norm_o = _trapz2(p.eps_ozz * opt2, p.dr, p.dz)
    norm_m = _trapz2(p.eps_mrr * np.abs(p.u_mr) ** 2 + p.eps_mzz * np.abs(p.u_mz) ** 2, p.dr, p.dz)
    if norm_o == 0:
        raise ValidationError("optical field is identically zero")
    if norm_m == 0:
        raise ValidationError("microwave field is identically zero")
    overlap = _trapz2(p.eps_ozz**2 * r33 * opt2 * p.u_mz, p.dr, p.dz)
    prefactor = math.sqrt(CONSTANTS.hbar * w_minus * w_plus * w_m / (8.0 * math.pi * CONSTANTS.epsilon_0 * p.ring_radius))
    g = prefactor * overlap / norm_o / math.sqrt(float(np.real(norm_m)))
    return float(abs(g)) / TWO_PI


def _read_array(doc: dict, key: str, shape: tuple[int, int]) -> np.ndarray:
    if key not in doc:
        raise ValidationError(f"field profile file missing {key!r}")
    raw = doc[key]
    if isinstance(raw, dict):
        arr = np.asarray(raw["re"], dtype=float) + 1j * np.asarray(raw.get("im", 0.0), dtype=float)
    else:
        arr = np.asarray(raw, dtype=float)
    if arr.size != shape[0] * shape[1]:
        raise ValidationError(f"{key}: expected {shape[0] * shape[1]} values, got {arr.size}")
    return arr.reshape(shape)


def load_field_profiles(path: str | Path) -> FieldProfiles:
    """Read a JSON field-profile container.

    Arrays are flattened row-major over (nr, nz); complex arrays may be given
    as ``{"re": [...], "im": [...]}``.
    """
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    shape = (int(doc["nr"]), int(doc["nz"]))
    arrays = {k: _read_array(doc, k, shape) for k in ("u_oz", "u_mr", "u_mz", "eps_ozz", "eps_mrr", "eps_mzz")}
    return FieldProfiles(
        dr=float(doc["dr_m"]),
        dz=float(doc["dz_m"]),
        r33=float(doc.get("r33_pm_per_V", 1.0)),
        ring_radius=float(doc["ring_radius_m"]),
        omegas=tuple(float(v) for v in doc["frequencies_hz"]),
        **arrays,
    )
