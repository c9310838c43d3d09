"""Domain types, constants and device-card I/O.

All linewidths and coupling rates are stored as ordinary frequencies in Hz
(a tabulated ``2π·X`` value is stored as ``X``). Angular factors are applied
inside the formulas that need them.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np
from scipy import constants as _sc

from xduct.errors import MissingFieldError, ValidationError

_TOTAL_RTOL = 1e-9
_DATA_DIR = Path(__file__).resolve().parent / "data"


@dataclass(frozen=True)
class PhysicalConstants:
    """CODATA constants at double precision (SI units)."""

    h: float = _sc.h
    hbar: float = _sc.h / (2.0 * math.pi)
    k_B: float = _sc.k
    epsilon_0: float = _sc.epsilon_0


CONSTANTS = PhysicalConstants()


@dataclass(frozen=True)
class ModeSpec:
    """One resonant mode: frequency and intrinsic/external decay rates (Hz)."""

    frequency: float
    kappa_in: float
    kappa_ex: float

    def __post_init__(self) -> None:
        for name in ("frequency", "kappa_in", "kappa_ex"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ValidationError(f"{name} must be finite, got {value!r}")
        if self.frequency <= 0:
            raise ValidationError(f"frequency must be > 0, got {self.frequency}")
        if self.kappa_in < 0 or self.kappa_ex < 0:
            raise ValidationError(
                f"decay rates must be >= 0, got kappa_in={self.kappa_in}, kappa_ex={self.kappa_ex}"
            )

    def total(self) -> float:
        return self.kappa_in + self.kappa_ex

    @property
    def extraction_ratio(self) -> float:
        """kappa_ex / kappa (fraction of decay into the measured port)."""
        return self.kappa_ex / self.total()


@dataclass(frozen=True)
class QubitSpec:
    readout_frequency: float
    readout_kappa: float
    qubit_frequency: float

    def __post_init__(self) -> None:
        for name in ("readout_frequency", "readout_kappa", "qubit_frequency"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValidationError(f"qubit.{name} must be finite and > 0, got {value!r}")


@dataclass(frozen=True)
class DeviceCard:
    """Measured mode frequencies and coupling rates of one cascaded device.

    ``optical_minus`` is the pumped (red) optical mode, ``optical_plus`` the
    mode that receives the converted photon; ``mm_signal``/``mm_idler`` are the
    microwave-to-microwave converter pair.
    """

    label: str
    optical_minus: ModeSpec
    optical_plus: ModeSpec
    microwave: ModeSpec
    g_eo: float
    mm_signal: ModeSpec
    mm_idler: ModeSpec
    qubit: QubitSpec
    matched: bool = False

    def __post_init__(self) -> None:
        if not (math.isfinite(self.g_eo) and self.g_eo > 0):
            raise ValidationError(f"g_eo must be > 0, got {self.g_eo!r}")
        for name in ("optical_minus", "optical_plus", "microwave", "mm_signal", "mm_idler"):
            mode: ModeSpec = getattr(self, name)
            if mode.kappa_in <= 0 or mode.kappa_ex <= 0:
                raise ValidationError(f"{name}: all rates on a device card must be > 0")
        if self.matched:
            mismatch = self.optical_splitting - self.microwave.frequency
            if abs(mismatch) > 2.0 * self.microwave.total():
                warnings.warn(
                    f"card {self.label!r} flagged matched but optical splitting is "
                    f"{mismatch / 1e6:.1f} MHz away from the microwave mode",
                    stacklevel=2,
                )

    @property
    def optical_splitting(self) -> float:
        return self.optical_plus.frequency - self.optical_minus.frequency

    @property
    def triple_resonance_mismatch(self) -> float:
        """ω_m − (ω₊ − ω₋) in Hz."""
        return self.microwave.frequency - self.optical_splitting


_MODE_KEYS = ("optical_minus", "optical_plus", "microwave", "mm_signal", "mm_idler")
_QUBIT_KEYS = {
    "readout_frequency": "readout_frequency_hz",
    "readout_kappa": "readout_kappa_hz",
    "qubit_frequency": "qubit_frequency_hz",
}


def _require(doc: dict, key: str, where: str) -> Any:
    if not isinstance(doc, dict):
        raise ValidationError(f"{where} must be a JSON object")
    if key not in doc:
        raise MissingFieldError(f"missing field {where}.{key}")
    return doc[key]


def _as_float(value: Any, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(f"{where} must be a number, got {value!r}")
    return float(value)


def _mode_from_dict(doc: dict, where: str) -> ModeSpec:
    f = _as_float(_require(doc, "frequency_hz", where), f"{where}.frequency_hz")
    k_in = _as_float(_require(doc, "kappa_in_hz", where), f"{where}.kappa_in_hz")
    k_ex = _as_float(_require(doc, "kappa_ex_hz", where), f"{where}.kappa_ex_hz")
    mode = ModeSpec(f, k_in, k_ex)
    if "kappa_total_hz" in doc:
        total = _as_float(doc["kappa_total_hz"], f"{where}.kappa_total_hz")
        if abs(total - mode.total()) > _TOTAL_RTOL * max(abs(total), mode.total()):
            raise ValidationError(
                f"{where}: kappa_total_hz={total} differs from kappa_in + kappa_ex = {mode.total()}"
            )
    return mode


def card_from_dict(doc: dict) -> DeviceCard:
    """Build and validate a card from its JSON document form."""
    label = _require(doc, "label", "card")
    if not isinstance(label, str):
        raise ValidationError("card.label must be a string")
    modes = {key: _mode_from_dict(_require(doc, key, "card"), key) for key in _MODE_KEYS}
    g_eo = _as_float(_require(doc, "g_eo_hz", "card"), "card.g_eo_hz")
    qdoc = _require(doc, "qubit", "card")
    qubit = QubitSpec(
        **{attr: _as_float(_require(qdoc, key, "qubit"), f"qubit.{key}") for attr, key in _QUBIT_KEYS.items()}
    )
    matched = doc.get("matched", False)
    if not isinstance(matched, bool):
        raise ValidationError("card.matched must be a boolean")
    return DeviceCard(label=label, g_eo=g_eo, qubit=qubit, matched=matched, **modes)


def card_to_dict(card: DeviceCard) -> dict:
    doc: dict[str, Any] = {"label": card.label}
    for key in _MODE_KEYS:
        mode: ModeSpec = getattr(card, key)
        doc[key] = {
            "frequency_hz": mode.frequency,
            "kappa_in_hz": mode.kappa_in,
            "kappa_ex_hz": mode.kappa_ex,
            "kappa_total_hz": mode.total(),
        }
    doc["g_eo_hz"] = card.g_eo
    doc["qubit"] = {key: getattr(card.qubit, attr) for attr, key in _QUBIT_KEYS.items()}
    doc["matched"] = card.matched
    return doc


def load_device_card(path: str | Path) -> DeviceCard:
    """Read a device card JSON file.

    Raises:
        ValidationError: the file is not valid JSON or violates an invariant.
        MissingFieldError: a required key is absent.
        FileNotFoundError: the path does not exist.
    """
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: malformed JSON ({exc})") from exc
    return card_from_dict(doc)


def dump_device_card(card: DeviceCard, path: str | Path) -> None:
    Path(path).write_text(json.dumps(card_to_dict(card), indent=2) + "\n", encoding="utf-8")


def packaged_data_path(name: str) -> Path:
    """Path of a reference file shipped inside the package (e.g. ``reference_device.json``)."""
    path = _DATA_DIR / name
    if not path.exists():
        raise FileNotFoundError(f"no packaged data file named {name!r}")
    return path


def reference_card() -> DeviceCard:
    return load_device_card(packaged_data_path("reference_device.json"))


def bose_occupancy(temperature, frequency):
    """Mean thermal photon number 1/(exp(hf/k_B T) − 1).

    Works elementwise on arrays; returns a float for scalar input.
    """
    t = np.asarray(temperature, dtype=float)
    f = np.asarray(frequency, dtype=float)
    if np.any(f <= 0) or not np.all(np.isfinite(f)):
        raise ValidationError("frequency must be finite and > 0")
    if np.any(t < 0) or np.any(np.isnan(t)):
        raise ValidationError("temperature must be >= 0")
    t, f = np.broadcast_arrays(t, f)
    out = np.zeros(t.shape)
    hot = t > 0
    x = CONSTANTS.h * f[hot] / (CONSTANTS.k_B * t[hot])
    out[hot] = 1.0 / np.expm1(x)
    return float(out) if out.ndim == 0 else out


def dbm_to_watts(dbm: float) -> float:
    return 1e-3 * 10.0 ** (dbm / 10.0)


def watts_to_dbm(watts: float) -> float:
    return 10.0 * math.log10(watts / 1e-3)


def db_to_linear(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


def linear_to_db(x):
    return 10.0 * np.log10(np.asarray(x, dtype=float))


__all__ = [
    "CONSTANTS",
    "DeviceCard",
    "ModeSpec",
    "PhysicalConstants",
    "QubitSpec",
    "bose_occupancy",
    "card_from_dict",
    "card_to_dict",
    "db_to_linear",
    "dbm_to_watts",
    "dump_device_card",
    "linear_to_db",
    "load_device_card",
    "packaged_data_path",
    "reference_card",
    "watts_to_dbm",
]
