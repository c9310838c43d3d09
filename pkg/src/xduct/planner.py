"""Frequency matching for the cascaded converter chain.

A multimode comb converts a signal mode onto an idler mode, which the
flux-tunable optical transducer then picks up. Both devices only tune
downwards, so a target is reachable when some comb mode sits at most a
fraction ``k·b_max²`` above it and, at that comb bias, another comb mode lands
inside the transducer's tuning window.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path


from xduct.errors import ValidationError
from xduct.flux import FluxTuneModel, solve_bias

# Alignment tolerance used when reporting plan residuals (Hz).
ALIGN_TOL_HZ = 1.0


@dataclass(frozen=True)
class CombModel:
    """Evenly spaced multimode spectrum with a shared quadratic flux shift.

    Mode ``n`` sits at ``(f_ref + n·fsr)·(1 − k·b²)``.
    """

    f_ref: float
    fsr: float
    n_min: int
    n_max: int
    k: float
    b_max: float

    def __post_init__(self) -> None:
        if not (self.f_ref > 0 and self.fsr > 0):
            raise ValidationError("f_ref and fsr must be > 0")
        if self.n_max < self.n_min:
            raise ValidationError("index range is empty")
        if self.k < 0 or self.b_max <= 0:
            raise ValidationError("need k >= 0 and b_max > 0")
        if self.zero_bias(self.n_min) <= 0:
            raise ValidationError("lowest comb mode must have positive frequency")
        if self.max_fractional_shift >= 10.0 * self.fsr / self.f_ref:
            raise ValidationError("tuning range is implausibly large compared with the mode spacing")

    @property
    def max_fractional_shift(self) -> float:
        return self.k * self.b_max**2

    @property
    def indices(self) -> range:
        return range(self.n_min, self.n_max + 1)

    def zero_bias(self, n: int) -> float:
        return self.f_ref + n * self.fsr

    def mode_model(self, n: int) -> FluxTuneModel:
        return FluxTuneModel(f0=self.zero_bias(n), k=self.k, b_max=self.b_max)

    def tuned(self, n: int, b: float) -> float:
        return self.zero_bias(n) * (1.0 - self.k * b**2)

    @classmethod
    def from_dict(cls, doc: dict) -> "CombModel":
        try:
            return cls(
                f_ref=float(doc["f_ref_hz"]),
                fsr=float(doc["fsr_hz"]),
                n_min=int(doc["n_min"]),
                n_max=int(doc["n_max"]),
                k=float(doc["k_per_mT2"]),
                b_max=float(doc["b_max_mT"]),
            )
        except KeyError as exc:
            raise ValidationError(f"comb description missing {exc.args[0]!r}") from exc

    def to_dict(self) -> dict:
        return {"f_ref_hz": self.f_ref, "fsr_hz": self.fsr, "n_min": self.n_min, "n_max": self.n_max,
                "k_per_mT2": self.k, "b_max_mT": self.b_max}


def flux_model_from_dict(doc: dict) -> FluxTuneModel:
    try:
        return FluxTuneModel(f0=float(doc["f0_hz"]), k=float(doc["k_per_mT2"]), b_max=float(doc["b_max_mT"]))
    except KeyError as exc:
        raise ValidationError(f"flux model description missing {exc.args[0]!r}") from exc


def load_comb(path: str | Path) -> CombModel:
    return CombModel.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def load_flux_model(path: str | Path) -> FluxTuneModel:
    return flux_model_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def comb_frequencies(comb: CombModel, b: float) -> list[tuple[int, float]]:
    if not 0 <= b <= comb.b_max:
        raise ValidationError(f"bias must lie in [0, {comb.b_max}] mT")
    return [(n, comb.tuned(n, b)) for n in comb.indices]


@dataclass(frozen=True)
class Plan:
    feasible: bool
    f_target: float
    signal_index: int | None = None
    idler_index: int | None = None
    b_mm: float = math.nan
    b_mo: float = math.nan
    f_signal: float = math.nan
    f_idler: float = math.nan
    f_pump_conv: float = math.nan
    f_pump_amp: float = math.nan
    slack: float = 0.0
    diagnostic: str = ""

    def to_dict(self) -> dict:
        def num(v):
            return None if isinstance(v, float) and math.isnan(v) else v

        return {
            "feasible": self.feasible,
            "f_target_hz": self.f_target,
            "signal_index": self.signal_index,
            "idler_index": self.idler_index,
            "b_mm_mT": num(self.b_mm),
            "b_mo_mT": num(self.b_mo),
            "f_signal_hz": num(self.f_signal),
            "f_idler_hz": num(self.f_idler),
            "f_pump_conv_hz": num(self.f_pump_conv),
            "f_pump_amp_hz": num(self.f_pump_amp),
            "slack_hz": self.slack,
            "diagnostic": self.diagnostic,
        }


def _signal_candidates(f_target: float, comb: CombModel) -> list[tuple[float, int]]:
    out = []
    for n in comb.indices:
        b = solve_bias(comb.mode_model(n), f_target)
        if b is not None:
            out.append((b, n))
    return sorted(out)


def _window_distance(f: float, m2o: FluxTuneModel) -> float:
    if f > m2o.f0:
        return f - m2o.f0
    if f < m2o.f_min:
        return m2o.f_min - f
    return 0.0


def plan_match(f_target: float, comb: CombModel, m2o: FluxTuneModel) -> Plan:
    """Choose signal/idler modes, both flux biases and the pump tones for one target.

    Signal candidates are tried in order of increasing comb bias; for each,
    the idler is the other comb mode that the transducer can reach with the
    smallest bias. The first complete match wins, so the result is the
    smallest-|b_mm|, then smallest-|b_mo| solution. An unreachable target
    yields ``feasible=False`` with a diagnostic rather than an exception.
    """
    if not (math.isfinite(f_target) and f_target > 0):
        raise ValidationError("target frequency must be > 0")
    candidates = _signal_candidates(f_target, comb)
    if not candidates:
        # distance to the nearest reachable signal interval
        gaps = []
        for n in comb.indices:
            top = comb.zero_bias(n)
            bottom = top * (1.0 - comb.max_fractional_shift)
            gaps.append(bottom - f_target if f_target < bottom else f_target - top)
        return Plan(False, f_target, slack=float(min(gaps)),
                    diagnostic="no comb mode can be tuned onto the target")

    best_slack = math.inf
    for b_mm, n in candidates:
        options = []
        for j in comb.indices:
            if j == n:
                continue
            f_j = comb.tuned(j, b_mm)
            b_mo = solve_bias(m2o, f_j)
            if b_mo is None:
                best_slack = min(best_slack, _window_distance(f_j, m2o))
            else:
                options.append((b_mo, j, f_j))
        if options:
            b_mo, j, f_idler = min(options)
            f_signal = comb.tuned(n, b_mm)
            return Plan(
                feasible=True,
                f_target=f_target,
                signal_index=n,
                idler_index=j,
                b_mm=b_mm,
                b_mo=b_mo,
                f_signal=f_signal,
                f_idler=f_idler,
                f_pump_conv=abs(f_signal - f_idler),
                f_pump_amp=2.0 * f_idler,
                slack=0.0,
            )
    return Plan(False, f_target, signal_index=candidates[0][1], b_mm=candidates[0][0], slack=float(best_slack),
                diagnostic="signal reachable but no idler lands in the transducer tuning window")


def plan_residuals(plan: Plan, comb: CombModel, m2o: FluxTuneModel) -> tuple[float, float]:
    """(|tuned signal − target|, |tuned idler − tuned transducer|) after applying both flux laws."""
    signal = comb.tuned(plan.signal_index, plan.b_mm)
    idler = comb.tuned(plan.idler_index, plan.b_mm)
    m2o_f = m2o.f0 * (1.0 - m2o.k * plan.b_mo**2)
    return abs(signal - plan.f_target), abs(idler - m2o_f)


# ---------------------------------------------------------------- coverage


def _merge(intervals):
    merged: list[list[float]] = []
    for lo, hi in sorted(intervals):
        if merged and lo <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], hi)
        else:
            merged.append([lo, hi])
    return merged


@dataclass(frozen=True)
class Coverage:
    fraction: float
    gaps: list[tuple[float, float]] = field(default_factory=list)
    covered: list[tuple[float, float]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"fraction": self.fraction, "gaps": [list(g) for g in self.gaps]}


def reachable_intervals(comb: CombModel, m2o: FluxTuneModel, gate_idler: bool = True):
    """Merged frequency intervals that some plan can lock onto."""
    delta = comb.max_fractional_shift
    intervals = []
    for n in comb.indices:
        f_n = comb.zero_bias(n)
        if not gate_idler:
            intervals.append((f_n * (1.0 - delta), f_n))
            continue
        for j in comb.indices:
            if j == n:
                continue
            f_j = comb.zero_bias(j)
            # fractional shifts s for which f_j (1 − s) is inside the transducer window
            s_lo = max(0.0, 1.0 - m2o.f0 / f_j)
            s_hi = min(delta, 1.0 - m2o.f_min / f_j)
            if s_lo <= s_hi:
                intervals.append((f_n * (1.0 - s_hi), f_n * (1.0 - s_lo)))
    return _merge(intervals)


def coverage(band: tuple[float, float], comb: CombModel, m2o: FluxTuneModel, gate_idler: bool = True) -> Coverage:
    """Fraction of ``band`` that can be matched, plus the uncovered intervals.

    With ``gate_idler=False`` only the signal side is checked (each comb mode
    sweeps down by its fractional tuning range), which is the simple
    range-over-FSR estimate.
    """
    f_lo, f_hi = band
    if not f_lo < f_hi:
        raise ValidationError("band must satisfy f_lo < f_hi")
    covered = []
    for lo, hi in reachable_intervals(comb, m2o, gate_idler):
        lo, hi = max(lo, f_lo), min(hi, f_hi)
        if lo < hi:
            covered.append((lo, hi))
    total = sum(hi - lo for lo, hi in covered)
    gaps = []
    cursor = f_lo
    for lo, hi in covered:
        if lo > cursor:
            gaps.append((cursor, lo))
        cursor = max(cursor, hi)
    if cursor < f_hi:
        gaps.append((cursor, f_hi))
    return Coverage(fraction=total / (f_hi - f_lo), gaps=gaps, covered=covered)


# ---------------------------------------------------------------- chain composition


def chain_efficiency(eta_mo: float, eta_mm: float) -> float:
    for name, v in (("eta_mo", eta_mo), ("eta_mm", eta_mm)):
        if not 0 <= v <= 1:
            raise ValidationError(f"{name} must lie in [0, 1]")
    return eta_mo * eta_mm


def chain_added_noise(n_add_mm: float, n_add_mo: float, eta_mm: float) -> float:
    """Input-referred added noise of the cascade, n_mm + n_mo / η_mm.

    A Friis-style composition referred to the converter input; this is a model
    extension rather than a measured quantity.
    """
    if not 0 < eta_mm <= 1:
        raise ValidationError("eta_mm must lie in (0, 1]")
    if n_add_mm < 0 or n_add_mo < 0:
        raise ValidationError("added noise must be >= 0")
    return n_add_mm + n_add_mo / eta_mm


# ---------------------------------------------------------------- pulse timing

CHANNELS = ("mm_pump", "mm_amp_pump", "laser", "probe", "qubit_drive")


@dataclass(frozen=True)
class PulseEvent:
    channel: str
    start: float
    duration: float

    @property
    def end(self) -> float:
        return self.start + self.duration


@dataclass(frozen=True)
class PulseSchedule:
    events: tuple[PulseEvent, ...]
    period: float

    def __post_init__(self) -> None:
        if self.period <= 0:
            raise ValidationError("period must be > 0")
        for ev in self.events:
            if ev.channel not in CHANNELS:
                raise ValidationError(f"unknown channel {ev.channel!r}")
            if ev.start < 0 or ev.duration < 0:
                raise ValidationError(f"{ev.channel}: negative start or duration")
            if ev.end > self.period:
                raise ValidationError(f"{ev.channel} ends at {ev.end:.3g} s, beyond the {self.period:.3g} s period")

    def event(self, channel: str) -> PulseEvent:
        for ev in self.events:
            if ev.channel == channel:
                return ev
        raise KeyError(channel)

    def rows(self) -> list[tuple[str, float, float]]:
        return [(ev.channel, ev.start, ev.duration) for ev in self.events]


def pulse_schedule(kind: str, *, lead: float = 2e-6, window: float = 4e-6, period: float = 1e-3,
                   delay: float = 0.0, drive: float = 100e-9) -> PulseSchedule:
    """Timing of one repetition of a transduction or qubit-readout measurement.

    The converter pump(s) switch on ``lead`` seconds before the laser and probe
    and stay on through the ``window``-long readout. For ``qubit_readout`` a
    qubit drive of length ``drive`` ends exactly ``delay`` before the readout
    starts.
    """
    for name, v in (("lead", lead), ("window", window), ("period", period), ("delay", delay), ("drive", drive)):
        if not (math.isfinite(v) and v >= 0):
            raise ValidationError(f"{name} must be >= 0")
    if kind == "transduction":
        readout = lead
        events = [PulseEvent("mm_pump", 0.0, lead + window)]
    elif kind in ("qubit_readout", "qubit-readout"):
        if drive + delay >= lead:
            drive_start, readout = 0.0, drive + delay
        else:
            drive_start, readout = lead - delay - drive, lead
        pump_start = readout - lead
        events = [
            PulseEvent("qubit_drive", drive_start, drive),
            PulseEvent("mm_pump", pump_start, lead + window),
            PulseEvent("mm_amp_pump", pump_start, lead + window),
        ]
    else:
        raise ValidationError(f"unknown schedule kind {kind!r}")
    events += [PulseEvent("laser", readout, window), PulseEvent("probe", readout, window)]
    return PulseSchedule(events=tuple(events), period=period)


def coverage_near(target: float, comb: CombModel, m2o: FluxTuneModel, gate_idler: bool = False) -> Coverage:
    """Coverage over one FSR centred on ``target``."""
    return coverage((target - comb.fsr / 2.0, target + comb.fsr / 2.0), comb, m2o, gate_idler)


__all__ = [
    "ALIGN_TOL_HZ", "CHANNELS", "CombModel", "Coverage", "Plan", "PulseEvent", "PulseSchedule",
    "chain_added_noise", "chain_efficiency", "comb_frequencies", "coverage", "coverage_near",
    "flux_model_from_dict", "load_comb", "load_flux_model", "plan_match", "plan_residuals",
    "pulse_schedule", "reachable_intervals",
]
