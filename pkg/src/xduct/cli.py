"""Command-line front end.

Usage examples:
  xduct m2o-efficiency --card reference_device.json --power-dbm 0
  xduct m2m-scatter --cooperativity 1 --sweep -1e6:1e6:1e4 --format csv --out scatter.csv
  xduct plan --target-hz 7.339e9 --comb comb.json --m2o m2o.json
  xduct coverage --band 5.0e9:8.5e9
  xduct schedule --kind qubit-readout --delay-us 10
  xduct fit-qubit --kind t1 --data t1.csv

Exit codes: 0 success, 1 usage/validation/file error, 2 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import re
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from xduct import calib, eo, flux, mm, planner
from xduct.errors import NumericError, ValidationError
from xduct.params import bose_occupancy, dbm_to_watts, load_device_card, packaged_data_path, watts_to_dbm

log = logging.getLogger("xduct")

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERIC = 0, 1, 2
FORMATS = ("json", "csv")


class UsageError(ValidationError):
    pass


class _Parser(argparse.ArgumentParser):
    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        # let "-1e6:1e6:1e4" through as a value rather than an unknown flag
        self._negative_number_matcher = re.compile(r"^-\.?\d[\d.eE+-]*(:[-+\d.eE]+)*$")

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


@dataclass(frozen=True)
class RunConfig:
    subcommand: str
    out: Path | None
    fmt: str
    seed: int | None
    verbosity: int

    def __post_init__(self) -> None:
        if self.fmt not in FORMATS:
            raise UsageError(f"unsupported output format {self.fmt!r}")


def parse_sweep(spec: str) -> np.ndarray:
    """``start:stop:step`` → inclusive grid in base SI units."""
    try:
        start, stop, step = (float(v) for v in spec.split(":"))
    except ValueError as exc:
        raise UsageError(f"sweep must look like start:stop:step, got {spec!r}") from exc
    if not step > 0:
        raise UsageError("sweep step must be > 0")
    if not start < stop:
        raise UsageError("sweep start must be < stop")
    n = int(math.floor((stop - start) / step + 1e-9)) + 1
    return start + step * np.arange(n)


def parse_band(spec: str) -> tuple[float, float]:
    try:
        lo, hi = (float(v) for v in spec.split(":"))
    except ValueError as exc:
        raise UsageError(f"band must look like f_lo:f_hi, got {spec!r}") from exc
    if not lo < hi:
        raise UsageError("band must satisfy f_lo < f_hi")
    return lo, hi


def resolve_input(path: str) -> Path:
    """A user path, or the name of a reference file shipped with the package."""
    p = Path(path)
    if p.exists():
        return p
    try:
        return packaged_data_path(p.name)
    except FileNotFoundError:
        raise FileNotFoundError(f"input file not found: {path}") from None


def _num_workers() -> int:
    raw = os.environ.get("XDUCT_NUM_WORKERS", "")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _ordered_map(fn, items):
    """Map over sweep points; results keep sweep order regardless of worker count."""
    items = list(items)
    workers = min(_num_workers(), max(1, len(items)))
    if workers == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _emit(cfg: RunConfig, doc: dict | None = None, header=None, rows=None) -> None:
    if cfg.fmt == "csv" and rows is not None:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
        text = buf.getvalue()
    else:
        if doc is None:
            doc = {"columns": list(header), "rows": [list(r) for r in rows]}
        text = json.dumps(_clean(doc), indent=2, sort_keys=True) + "\n"
    if cfg.out is None:
        sys.stdout.write(text)
    else:
        cfg.out.write_text(text, encoding="utf-8")
        log.info("wrote %s", cfg.out)


def _read_csv(path: str) -> tuple[list[str], np.ndarray]:
    with open(resolve_input(path), newline="", encoding="utf-8") as fh:
        reader = csv.reader(row for row in fh if row.strip() and not row.startswith("#"))
        rows = list(reader)
    if not rows:
        raise ValidationError(f"{path}: empty CSV")
    header = [h.strip() for h in rows[0]]
    try:
        data = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float)
    except ValueError as exc:
        raise ValidationError(f"{path}: non-numeric value ({exc})") from exc
    if data.size == 0 or data.ndim != 2 or data.shape[1] != len(header):
        raise ValidationError(f"{path}: no data rows or ragged columns")
    return header, data


def _columns(path: str, *names: str) -> list[np.ndarray]:
    header, data = _read_csv(path)
    missing = [n for n in names if n not in header]
    if missing:
        raise ValidationError(f"{path}: missing column(s) {missing}; header is {header}")
    return [data[:, header.index(n)] for n in names]


# ---------------------------------------------------------------- subcommands


def _power_w(args) -> float:
    if args.power_dbm is not None:
        return dbm_to_watts(args.power_dbm)
    if args.power_w is not None:
        if args.power_w < 0:
            raise UsageError("--power-w must be >= 0")
        return args.power_w
    return dbm_to_watts(0.0)


def cmd_m2o_efficiency(args, cfg: RunConfig) -> None:
    card = load_device_card(resolve_input(args.card))
    point = eo.EoOperatingPoint(card, _power_w(args), args.microwave_detuning_hz)

    if args.sweep_power_dbm:
        levels = parse_sweep(args.sweep_power_dbm)
        rows = []
        for dbm in levels:
            pt = point.with_power(dbm_to_watts(dbm))
            rows.append((float(dbm), pt.pump_power_onchip, eo.pump_photon_number(pt), eo.cooperativity(pt),
                         eo.on_chip_efficiency(pt)))
        _emit(cfg, header=("power_dbm", "power_w", "n_p", "c_eo", "eta_eo"), rows=rows)
        return
    if args.sweep:
        grid = parse_sweep(args.sweep)
        spectrum = eo.transduction_spectrum(point, grid)
        mag2 = np.abs(spectrum) ** 2
        rows = list(zip(grid.tolist(), mag2.tolist()))
        if cfg.fmt == "csv":
            _emit(cfg, header=("detuning_hz", "mag2"), rows=rows)
        else:
            try:
                width = eo.bandwidth_3db(grid, mag2)
            except ValidationError:
                width = None
            _emit(cfg, {"detuning_hz": grid.tolist(), "mag2": mag2.tolist(), "bandwidth_3db_hz": width})
        return
    p_w = point.pump_power_onchip
    _emit(cfg, {
        "card": card.label,
        "power_w": p_w,
        "power_dbm": watts_to_dbm(p_w) if p_w > 0 else None,
        "n_p": eo.pump_photon_number(point),
        "c_eo": eo.cooperativity(point),
        "eta_eo": eo.on_chip_efficiency(point),
        "extraction_bound": eo.extraction_bound(card),
        "optimal_power_w": eo.optimal_pump_power(card),
    })


def _mm_params(args) -> tuple[mm.MmParams, dict]:
    card = load_device_card(resolve_input(args.card))
    s, i = card.mm_signal, card.mm_idler
    notes = {}
    ka, kb = s.total(), i.total()
    if args.pump_map_c is not None:
        if args.pump_power_w is None:
            raise UsageError("--pump-map-c requires --pump-power-w")
        g = args.pump_map_c * math.sqrt(args.pump_power_w)
        notes["g_source"] = "pump map g = c*sqrt(P) (uncalibrated)"
    elif args.g_hz is not None:
        g = args.g_hz
    else:
        g = math.sqrt(args.cooperativity * ka * kb) / 2.0
    base = mm.MmParams(args.delta_a_hz, args.delta_b_hz, g, args.phi_g, 0.0, args.phi_eps,
                       s.kappa_in, s.kappa_ex, i.kappa_in, i.kappa_ex)
    if args.eps_frac is not None:
        eps = args.eps_frac * mm.parametric_threshold(base)
    else:
        eps = args.eps_hz
    params = base.replace(eps=eps)
    notes.update({"g_hz": params.g, "eps_hz": params.eps, "cooperativity": params.cooperativity})
    return params, notes


def cmd_m2m_scatter(args, cfg: RunConfig) -> int:
    params, notes = _mm_params(args)
    st = mm.stability(params)
    omegas = parse_sweep(args.sweep) if args.sweep else np.array([0.0])

    def point(w):
        if not st.stable:
            return (float(w), math.nan, math.nan, math.nan, 0)
        s = mm.scattering_matrix(params, w)
        gain = mm.phase_sensitive_gain(params, 0.0, w)
        return (float(w), abs(s.entry(mm.B, mm.A)) ** 2, gain.g_max, gain.g_min, 1)

    rows = _ordered_map(point, omegas)
    header = ("omega_hz", "s_ba_mag2", "s_bb_gain_max", "s_bb_gain_min", "stable")
    if cfg.fmt == "csv":
        _emit(cfg, header=header, rows=rows)
    else:
        _emit(cfg, {"params": notes, "max_real_eigenvalue_hz": st.max_real_eigenvalue,
                    "columns": list(header), "rows": [list(r) for r in rows]})
    if not st.stable:
        log.error("operating point is beyond the parametric threshold")
        return EXIT_NUMERIC
    return EXIT_OK


def _load_chain_models(args):
    comb = planner.load_comb(resolve_input(args.comb))
    m2o = planner.load_flux_model(resolve_input(args.m2o))
    return comb, m2o


def cmd_plan(args, cfg: RunConfig) -> None:
    if not (math.isfinite(args.target_hz) and args.target_hz > 0):
        raise UsageError("--target-hz must be > 0")
    comb, m2o = _load_chain_models(args)
    _emit(cfg, planner.plan_match(args.target_hz, comb, m2o).to_dict())


def cmd_coverage(args, cfg: RunConfig) -> None:
    band = parse_band(args.band)
    comb, m2o = _load_chain_models(args)
    cov = planner.coverage(band, comb, m2o, gate_idler=not args.signal_only)
    doc = cov.to_dict()
    doc.update({"band_hz": list(band), "gate_idler": not args.signal_only})
    if cfg.fmt == "csv":
        _emit(cfg, header=("gap_lo_hz", "gap_hi_hz"), rows=cov.gaps)
    else:
        _emit(cfg, doc)


def cmd_schedule(args, cfg: RunConfig) -> None:
    sched = planner.pulse_schedule(
        args.kind.replace("-", "_"),
        lead=args.lead_us * 1e-6,
        window=args.window_us * 1e-6,
        period=args.period_us * 1e-6,
        delay=args.delay_us * 1e-6,
        drive=args.drive_us * 1e-6,
    )
    rows = sched.rows()
    if cfg.fmt == "json":
        _emit(cfg, {"period_s": sched.period,
                    "events": [{"channel": c, "start_s": s, "duration_s": d} for c, s, d in rows]})
    else:
        _emit(cfg, header=("channel", "start_s", "duration_s"), rows=rows)


def cmd_fit_flux(args, cfg: RunConfig) -> None:
    b, f = _columns(args.data, "b_mT", "f_hz")
    fit = flux.fit_flux_quadratic(np.column_stack([b, f]), b_max=args.b_max_mt)
    doc = fit.to_dict()
    doc["params"] = {"f0_hz": fit.model.f0, "k_per_mT2": fit.model.k}
    doc["stderr"] = {"f0_hz": fit.f0_stderr, "k_per_mT2": fit.k_stderr}
    doc["max_fractional_shift"] = fit.model.max_fractional_shift
    if args.curve_out:
        curve = flux.tuning_curve(fit.model)
        with open(args.curve_out, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("b_mT", "delta_f_hz"))
            w.writerows((repr(float(x)), repr(float(y))) for x, y in curve)
    _emit(cfg, doc)


def cmd_fit_snr(args, cfg: RunConfig) -> None:
    g_db, snr_db = _columns(args.data, "gain_db", "delta_snr_db")
    fit = mm.fit_snr_curve(g_db, snr_db, n_hemt=args.n_hemt)
    doc = fit.to_dict(eta_min=args.eta_min)
    asym = mm.snr_asymptote(fit.p, fit.n_hemt)
    doc["asymptote"] = {"linear": asym, "db": 10.0 * math.log10(asym)}
    _emit(cfg, doc)


def cmd_fit_noise(args, cfg: RunConfig) -> None:
    header, data = _read_csv(args.data)
    if "s_out" not in header:
        raise ValidationError(f"{args.data}: missing column 's_out'")
    s_out = data[:, header.index("s_out")]
    if "n_ex" in header:
        n_ex = data[:, header.index("n_ex")]
    elif "temperature_k" in header:
        temps = data[:, header.index("temperature_k")]
        if "frequency_hz" in header:
            freqs = data[:, header.index("frequency_hz")]
        elif args.frequency_hz is not None:
            freqs = np.full_like(temps, args.frequency_hz)
        else:
            raise UsageError("temperature data need a frequency_hz column or --frequency-hz")
        n_ex = bose_occupancy(temps, freqs)
    else:
        raise ValidationError(f"{args.data}: need an n_ex or temperature_k column")
    fit = calib.vts_fit(calib.NoiseSweep(n_ex, s_out), reflection=args.reflection, n_en=args.n_en)
    _emit(cfg, fit.to_dict())


def cmd_fit_qubit(args, cfg: RunConfig) -> None:
    t, y = _columns(args.data, "time_s", "population")
    trace = calib.CoherenceTrace(args.kind, t, y)
    fit = calib.fit_coherence(trace)
    doc = fit.to_dict()
    if args.bootstrap:
        doc["bootstrap"] = _bootstrap(trace, fit, args.bootstrap, cfg.seed)
    _emit(cfg, doc)


def _bootstrap(trace, fit, n: int, seed: int | None) -> dict:
    """Residual bootstrap of the coherence fit; deterministic for a given seed."""
    rng = np.random.default_rng(0 if seed is None else seed)
    model = {"t1": lambda p: calib.exp_decay(trace.time, p["t1"], p["amplitude"], p["offset"]),
             "rabi": lambda p: calib.damped_cosine(trace.time, p["rabi_frequency"], p["tau"],
                                                   p["amplitude"], p["phase"], p["offset"]),
             "ramsey": lambda p: calib.damped_cosine(trace.time, p["detuning"], p["t2"],
                                                     p["amplitude"], p["phase"], p["offset"])}[trace.kind]
    best = model(fit.params)
    resid = trace.population - best
    samples = {k: [] for k in fit.params}
    failures = 0
    for _ in range(n):
        y = best + rng.choice(resid, size=resid.size, replace=True)
        try:
            f = calib.fit_coherence(calib.CoherenceTrace(trace.kind, trace.time, y))
        except (NumericError, ValidationError):
            failures += 1
            continue
        for k, v in f.params.items():
            samples[k].append(v)
    return {
        "n": n,
        "failures": failures,
        "seed": seed,
        "stderr": {k: float(np.std(v, ddof=1)) if len(v) > 1 else None for k, v in samples.items()},
    }


def cmd_chain(args, cfg: RunConfig) -> None:
    doc = {"eta": planner.chain_efficiency(args.eta_mo, args.eta_mm),
           "eta_mo": args.eta_mo, "eta_mm": args.eta_mm}
    if args.n_add_mm is not None and args.n_add_mo is not None:
        doc["added_noise"] = {
            "value_quanta": planner.chain_added_noise(args.n_add_mm, args.n_add_mo, args.eta_mm),
            "referred_to": "M2M input",
            "model": "Friis-style cascade n_mm + n_mo/eta_mm (model extension)",
        }
    _emit(cfg, doc)


# ---------------------------------------------------------------- parser


def _common(p: argparse.ArgumentParser, default_format: str = "json") -> None:
    p.add_argument("--out", type=Path, default=None, help="output file (default: stdout)")
    p.add_argument("--format", choices=FORMATS, default=default_format, help="output format")
    p.add_argument("--seed", type=int, default=None, help="seed for Monte-Carlo options")
    p.add_argument("--verbose", action="count", default=0, help="more logging (repeatable)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="xduct", description="Cascaded microwave-optical transduction toolkit.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("m2o-efficiency", help="electro-optic efficiency, or its power/detuning sweep")
    p.add_argument("--card", default="reference_device.json", help="device card JSON")
    power = p.add_mutually_exclusive_group()
    power.add_argument("--power-dbm", type=float, help="on-chip pump power in dBm (default 0 dBm)")
    power.add_argument("--power-w", type=float, help="on-chip pump power in W")
    p.add_argument("--microwave-detuning-hz", type=float, default=0.0,
                   help="triple-resonance mismatch ω_m − (ω₊ − ω₋) in Hz")
    p.add_argument("--sweep", help="probe detuning sweep start:stop:step in Hz")
    p.add_argument("--sweep-power-dbm", help="pump power sweep start:stop:step in dBm")
    _common(p)
    p.set_defaults(func=cmd_m2o_efficiency)

    p = sub.add_parser("m2m-scatter", help="converter scattering, gain and stability versus probe detuning")
    p.add_argument("--card", default="reference_device.json", help="device card JSON (mm_signal / mm_idler rates)")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--cooperativity", type=float, default=1.0, help="conversion cooperativity 4g²/(κaκb)")
    g.add_argument("--g-hz", type=float, help="conversion rate g in Hz")
    g.add_argument("--pump-map-c", type=float, help="uncalibrated map g = c*sqrt(P) (Hz/sqrt(W))")
    p.add_argument("--pump-power-w", type=float, help="pump power for --pump-map-c")
    e = p.add_mutually_exclusive_group()
    e.add_argument("--eps-hz", type=float, default=0.0, help="parametric pump strength ε in Hz")
    e.add_argument("--eps-frac", type=float, help="ε as a fraction of the instability threshold")
    p.add_argument("--phi-g", type=float, default=0.0, help="conversion pump phase (rad)")
    p.add_argument("--phi-eps", type=float, default=0.0, help="amplification pump phase (rad)")
    p.add_argument("--delta-a-hz", type=float, default=0.0, help="signal rotating-frame detuning")
    p.add_argument("--delta-b-hz", type=float, default=0.0, help="idler rotating-frame detuning")
    p.add_argument("--sweep", help="probe detuning sweep start:stop:step in Hz (default: 0 only)")
    _common(p, "csv")
    p.set_defaults(func=cmd_m2m_scatter)

    p = sub.add_parser("plan", help="frequency-matching plan for one target")
    p.add_argument("--target-hz", type=float, required=True, help="frequency to bring onto a signal mode")
    p.add_argument("--comb", default="comb.json", help="comb model JSON")
    p.add_argument("--m2o", default="m2o.json", help="transducer flux model JSON")
    _common(p)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("coverage", help="fraction of a band the chain can match")
    p.add_argument("--band", required=True, help="f_lo:f_hi in Hz")
    p.add_argument("--comb", default="comb.json", help="comb model JSON")
    p.add_argument("--m2o", default="m2o.json", help="transducer flux model JSON")
    p.add_argument("--signal-only", action="store_true", help="skip the idler feasibility gate")
    _common(p)
    p.set_defaults(func=cmd_coverage)

    p = sub.add_parser("schedule", help="pulse timing for one repetition")
    p.add_argument("--kind", choices=("transduction", "qubit-readout"), default="transduction")
    p.add_argument("--delay-us", type=float, default=0.0, help="qubit drive to readout delay (µs)")
    p.add_argument("--lead-us", type=float, default=2.0, help="pump lead before readout (µs)")
    p.add_argument("--window-us", type=float, default=4.0, help="readout window (µs)")
    p.add_argument("--period-us", type=float, default=1000.0, help="repetition period (µs)")
    p.add_argument("--drive-us", type=float, default=0.1, help="qubit drive length (µs)")
    _common(p, "csv")
    p.set_defaults(func=cmd_schedule)

    p = sub.add_parser("fit-flux", help="quadratic flux-tuning fit from b_mT,f_hz CSV")
    p.add_argument("--data", required=True, help="CSV with columns b_mT,f_hz")
    p.add_argument("--b-max-mt", type=float, default=None, help="usable bias limit (default: largest |b|)")
    p.add_argument("--curve-out", default=None, help="also write b_mT,delta_f_hz for plotting")
    _common(p)
    p.set_defaults(func=cmd_fit_flux)

    p = sub.add_parser("fit-snr", help="SNR-enhancement fit from gain_db,delta_snr_db CSV")
    p.add_argument("--data", required=True, help="CSV with columns gain_db,delta_snr_db")
    p.add_argument("--n-hemt", type=float, default=10.9, help="HEMT noise in quanta")
    p.add_argument("--eta-min", type=float, default=0.16, help="lower bound on the link transmission")
    _common(p)
    p.set_defaults(func=cmd_fit_snr)

    p = sub.add_parser("fit-noise", help="gain and added noise from a variable-temperature sweep")
    p.add_argument("--data", required=True,
                   help="CSV with n_ex,s_out or temperature_k,s_out[,frequency_hz]")
    p.add_argument("--frequency-hz", type=float, default=None, help="frequency for temperature conversion")
    p.add_argument("--reflection", type=float, default=1.0, help="device power reflection at the operating point")
    p.add_argument("--n-en", type=float, default=0.0, help="intrinsic bath occupancy (quanta)")
    _common(p)
    p.set_defaults(func=cmd_fit_noise)

    p = sub.add_parser("fit-qubit", help="Rabi / T1 / Ramsey fit from time_s,population CSV")
    p.add_argument("--kind", choices=("rabi", "t1", "ramsey"), required=True)
    p.add_argument("--data", required=True, help="CSV with columns time_s,population")
    p.add_argument("--bootstrap", type=int, default=0, help="residual-bootstrap resamples (uses --seed)")
    _common(p)
    p.set_defaults(func=cmd_fit_qubit)

    p = sub.add_parser("chain", help="compose stage efficiencies and added noise")
    p.add_argument("--eta-mo", type=float, required=True, help="M2O stage efficiency")
    p.add_argument("--eta-mm", type=float, required=True, help="M2M stage efficiency")
    p.add_argument("--n-add-mm", type=float, default=None, help="M2M added noise (quanta)")
    p.add_argument("--n-add-mo", type=float, default=None, help="M2O added noise (quanta)")
    _common(p)
    p.set_defaults(func=cmd_chain)
    return parser


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s: %(message)s")
    try:
        cfg = RunConfig(args.command, args.out, args.format, args.seed, args.verbose)
        code = args.func(args, cfg)
    except (ValidationError, FileNotFoundError, OSError) as exc:
        print(f"xduct: error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericError as exc:
        print(f"xduct: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK if code is None else code


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
