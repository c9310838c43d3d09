"""Measurement analysis: efficiency extraction, noise calibration, coherence fits."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from xduct.eo import bandwidth_3db
from xduct.errors import SingularMatrixError, UnidentifiableError, ValidationError
from xduct.nlls import NllsResult, curve_fit


class NoOscillationError(UnidentifiableError):
    """Trace has no oscillating component to fit."""


# ---------------------------------------------------------------- efficiency


@dataclass(frozen=True)
class TraceSet:
    """Four two-port traces on a common frequency axis.

    Traces may be power (real, |S|²) or complex amplitudes, in which case
    ``|S|²`` is used. ``resonance_window`` is ``(f1, f2)`` in Hz; when omitted
    it defaults to the cross-trace peak ± 3 estimated linewidths.
    """

    freq: np.ndarray
    s_oo: np.ndarray
    s_oe: np.ndarray
    s_eo: np.ndarray
    s_ee: np.ndarray
    resonance_window: tuple[float, float] | None = None

    def __post_init__(self) -> None:
        f = np.asarray(self.freq, dtype=float)
        object.__setattr__(self, "freq", f)
        for name in ("s_oo", "s_oe", "s_eo", "s_ee"):
            arr = np.asarray(getattr(self, name))
            if np.iscomplexobj(arr):
                arr = np.abs(arr) ** 2
            arr = arr.astype(float)
            if arr.shape != f.shape:
                raise ValidationError(f"{name} does not share the frequency axis")
            object.__setattr__(self, name, arr)
        if self.resonance_window is not None:
            f1, f2 = self.resonance_window
            if not (f1 < f2 and f1 >= f.min() and f2 <= f.max()):
                raise ValidationError("resonance window must lie inside the frequency span")


@dataclass(frozen=True)
class EfficiencyExtraction:
    eta: float
    s_oe_pk: float
    s_eo_pk: float
    s_oo_bg: float
    s_ee_bg: float
    window: tuple[float, float]

    def to_dict(self) -> dict:
        return {
            "eta_mo": self.eta,
            "s_oe_pk": self.s_oe_pk,
            "s_eo_pk": self.s_eo_pk,
            "s_oo_bg": self.s_oo_bg,
            "s_ee_bg": self.s_ee_bg,
            "window_hz": list(self.window),
        }


def _default_window(traces: TraceSet) -> tuple[float, float]:
    f = traces.freq
    cross = traces.s_oe * traces.s_eo
    i_pk = int(np.argmax(cross))
    width = bandwidth_3db(f, np.sqrt(cross))
    return f[i_pk] - 3.0 * width, f[i_pk] + 3.0 * width


def extract_efficiency(traces: TraceSet) -> EfficiencyExtraction:
    """Calibrated bidirectional efficiency (S_oe,pk S_eo,pk) / (S_oo,bg S_ee,bg).

    Peaks are the maxima inside the resonance window; backgrounds are the
    medians of the through-traces outside it. Cable and amplifier gains cancel
    in the ratio.
    """
    window = traces.resonance_window or _default_window(traces)
    f = traces.freq
    inside = (f >= window[0]) & (f <= window[1])
    if not inside.any():
        raise ValidationError("resonance window contains no samples")
    if inside.all():
        raise ValidationError("no off-resonance samples outside the window")
    pk_oe = float(np.max(traces.s_oe[inside]))
    pk_eo = float(np.max(traces.s_eo[inside]))
    bg_oo = float(np.median(traces.s_oo[~inside]))
    bg_ee = float(np.median(traces.s_ee[~inside]))
    if bg_oo <= 0 or bg_ee <= 0:
        raise ValidationError("through-trace background is zero")
    eta = (pk_oe * pk_eo) / (bg_oo * bg_ee)
    return EfficiencyExtraction(eta, pk_oe, pk_eo, bg_oo, bg_ee, (float(window[0]), float(window[1])))


# ---------------------------------------------------------------- noise


def device_noise_spectrum(reflection, n_en: float, n_ex: float):
    """Device-referred output noise R n_ex + (1 − R) n_en."""
    r = np.asarray(reflection, dtype=float)
    if np.any(r < 0) or np.any(r > 1) or np.any(np.isnan(r)):
        raise ValidationError("reflection must lie in [0, 1]")
    out = r * n_ex + (1.0 - r) * n_en
    return float(out) if out.ndim == 0 else out


def mode_occupancy(kappa_in: float, kappa_ex: float, n_en: float, n_ex: float) -> float:
    """Decay-rate weighted mean of the intrinsic and external bath occupancies."""
    total = kappa_in + kappa_ex
    if total <= 0:
        raise ValidationError("kappa_in + kappa_ex must be > 0")
    w_in = kappa_in / total
    mean = w_in * n_en + (1.0 - w_in) * n_ex
    # rounding must not push a weighted mean outside its endpoints
    return min(max(mean, min(n_en, n_ex)), max(n_en, n_ex))


@dataclass(frozen=True)
class NoiseSweep:
    n_ex: np.ndarray
    s_out: np.ndarray

    def __post_init__(self) -> None:
        x = np.asarray(self.n_ex, dtype=float)
        y = np.asarray(self.s_out, dtype=float)
        if x.shape != y.shape or x.ndim != 1:
            raise ValidationError("n_ex and s_out must be equal-length 1-D arrays")
        if len(np.unique(x)) < 2:
            raise SingularMatrixError("need at least two distinct n_ex values")
        object.__setattr__(self, "n_ex", x)
        object.__setattr__(self, "s_out", y)


@dataclass(frozen=True)
class VtsFit:
    gain: float
    n_amp: float
    gain_stderr: float
    n_amp_stderr: float
    covariance: np.ndarray
    chi2_reduced: float

    @property
    def gain_db(self) -> float:
        return 10.0 * math.log10(self.gain)

    def to_dict(self) -> dict:
        return {
            "params": {"gain": self.gain, "gain_db": self.gain_db, "n_amp": self.n_amp},
            "stderr": {"gain": self.gain_stderr, "n_amp": self.n_amp_stderr},
            "chi2_reduced": self.chi2_reduced,
        }


def vts_fit(sweep: NoiseSweep, reflection: float = 1.0, n_en: float = 0.0) -> VtsFit:
    """Gain and added noise from output noise versus injected occupancy.

    Model: S_out = G (R n_ex + (1 − R) n_en + n_amp), i.e. a straight line in
    n_ex with slope G R. ``reflection`` and ``n_en`` describe the device
    operating point; the defaults (R = 1) treat the device as a mirror.
    """
    if not 0 < reflection <= 1:
        raise ValidationError("reflection must lie in (0, 1] for the slope to carry the gain")
    x, y = sweep.n_ex, sweep.s_out
    design = np.column_stack([x, np.ones_like(x)])
    coef, _, rank, _ = np.linalg.lstsq(design, y, rcond=None)
    slope, intercept = coef
    if rank < 2 or slope == 0 or abs(slope) * np.ptp(x) <= 1e-12 * max(np.max(np.abs(y)), 1e-300):
        raise SingularMatrixError("zero slope: gain is zero and the added noise is undefined")
    gain = slope / reflection
    n_amp = intercept / gain - (1.0 - reflection) * n_en

    dof = x.size - 2
    if dof > 0:
        resid = y - design @ coef
        chi2_red = float(resid @ resid / dof)
        cov_line = chi2_red * np.linalg.inv(design.T @ design)
        # (G, n_amp) = (s/R, R·i/s − (1−R) n_en)
        jac = np.array([[1.0 / reflection, 0.0],
                        [-reflection * intercept / slope**2, reflection / slope]])
        cov = jac @ cov_line @ jac.T
        g_err, n_err = float(math.sqrt(cov[0, 0])), float(math.sqrt(cov[1, 1]))
    else:
        chi2_red = math.nan
        cov = np.full((2, 2), math.nan)
        g_err = n_err = math.nan
    return VtsFit(float(gain), float(n_amp), g_err, n_err, cov, chi2_red)


# ---------------------------------------------------------------- coherence


def exp_decay(t, t1, amp, offset):
    return amp * np.exp(-t / t1) + offset


def exp_decay_jac(t, t1, amp, offset):
    e = np.exp(-t / t1)
    return np.column_stack([amp * e * t / t1**2, e, np.ones_like(t)])


def damped_cosine(t, freq, tau, amp, phase, offset):
    return amp * np.cos(2 * np.pi * freq * t + phase) * np.exp(-t / tau) + offset


def damped_cosine_jac(t, freq, tau, amp, phase, offset):
    e = np.exp(-t / tau)
    arg = 2 * np.pi * freq * t + phase
    c, s = np.cos(arg), np.sin(arg)
    return np.column_stack([
        -amp * s * e * 2 * np.pi * t,
        amp * c * e * t / tau**2,
        c * e,
        -amp * s * e,
        np.ones_like(t),
    ])


@dataclass(frozen=True)
class CoherenceTrace:
    kind: str
    time: np.ndarray
    population: np.ndarray

    def __post_init__(self) -> None:
        if self.kind not in ("rabi", "t1", "ramsey"):
            raise ValidationError(f"unknown trace kind {self.kind!r}")
        t = np.asarray(self.time, dtype=float)
        y = np.asarray(self.population, dtype=float)
        if t.shape != y.shape or t.ndim != 1:
            raise ValidationError("time and population must be equal-length 1-D arrays")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(y))):
            raise ValidationError("trace contains non-finite values")
        if np.any(np.diff(t) <= 0):
            raise ValidationError("times must be strictly increasing")
        object.__setattr__(self, "time", t)
        object.__setattr__(self, "population", y)


@dataclass(frozen=True)
class CoherenceFit:
    kind: str
    params: dict
    stderr: dict
    chi2_reduced: float
    covariance: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "params": dict(self.params),
            "stderr": dict(self.stderr),
            "chi2_reduced": self.chi2_reduced,
            "diagnostics": dict(self.diagnostics),
        }


def _require_kind(trace: CoherenceTrace, kind: str, min_points: int) -> None:
    if trace.kind != kind:
        raise ValidationError(f"expected a {kind} trace, got {trace.kind}")
    if trace.time.size < min_points:
        raise ValidationError(f"{kind} fit needs at least {min_points} points")


def _t1_initial_guess(t: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    n_tail = max(1, int(math.ceil(0.1 * t.size)))
    c = float(np.mean(y[-n_tail:]))
    a = float(y[0] - c)
    width = max(1, t.size // 20)
    smooth = np.convolve(y, np.ones(width) / width, mode="same") if width > 1 else y
    level = c + a / math.e
    # first crossing of the 1/e level, linearly interpolated
    above = (smooth - level) * np.sign(a) > 0
    idx = np.nonzero(~above)[0]
    if a != 0 and idx.size and idx[0] > 0:
        i = idx[0]
        y0, y1 = smooth[i - 1], smooth[i]
        frac = (y0 - level) / (y0 - y1) if y0 != y1 else 0.5
        t1 = float(t[i - 1] + frac * (t[i] - t[i - 1]) - t[0])
    else:
        t1 = float(t[-1] - t[0]) / 2.0
    if t1 <= 0:
        t1 = float(t[-1] - t[0]) / 2.0
    return t1, a, c


def _finish(kind, names, res: NllsResult, diagnostics=None) -> CoherenceFit:
    return CoherenceFit(
        kind=kind,
        params={k: float(v) for k, v in zip(names, res.x)},
        stderr={k: float(v) for k, v in zip(names, res.stderr)},
        chi2_reduced=res.chi2_reduced,
        covariance=res.covariance,
        diagnostics={"iterations": res.niter, "status": res.status, **(diagnostics or {})},
    )


def _fit_exponential(kind: str, trace: CoherenceTrace, decay_name: str) -> CoherenceFit:
    t, y = trace.time, trace.population
    if np.ptp(y) == 0:
        raise UnidentifiableError("constant trace: decay amplitude is zero")
    t1, a, c = _t1_initial_guess(t, y)
    res = curve_fit(exp_decay, t, y, [t1, a, c], jac=exp_decay_jac,
                    bounds=([np.finfo(float).tiny, -np.inf, -np.inf], [np.inf] * 3))
    amp, amp_err = res.x[1], res.stderr[1]
    if np.isfinite(amp_err) and abs(amp) < 2.0 * amp_err:
        raise UnidentifiableError("decay amplitude is indistinguishable from zero")
    return _finish(kind, (decay_name, "amplitude", "offset"), res)


def fit_t1(trace: CoherenceTrace) -> CoherenceFit:
    """Fit A·exp(−t/T1) + c; parameters ``t1``, ``amplitude``, ``offset``."""
    _require_kind(trace, "t1", 4)
    return _fit_exponential("t1", trace, "t1")


def _spectral_peak(t: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """Dominant frequency of the mean-subtracted trace and the Nyquist frequency.

    A direct DFT on a grid eight times finer than 1/span, from dc to the
    Nyquist frequency of the median sample spacing; the grid peak is refined
    by parabolic interpolation. Returns 0 when the dc bin dominates.
    """
    dt = float(np.median(np.diff(t)))
    nyquist = 0.5 / dt
    span = float(t[-1] - t[0])
    df = 1.0 / (8.0 * span)
    freqs = np.arange(0.0, nyquist + 0.5 * df, df)
    yc = y - y.mean()
    phases = np.exp(-2j * np.pi * np.outer(freqs, t - t[0]))
    power = np.abs(phases @ yc) ** 2
    i = int(np.argmax(power))
    # Mean subtraction zeroes the dc bin, so a peak within one 1/span
    # resolution element of dc means no resolvable oscillation.
    if power[i] <= 0 or freqs[i] < 1.0 / span:
        return 0.0, nyquist
    if 0 < i < freqs.size - 1:
        a, b, c = power[i - 1], power[i], power[i + 1]
        denom = a - 2 * b + c
        shift = 0.5 * (a - c) / denom if denom != 0 else 0.0
        return float(freqs[i] + shift * df), nyquist
    return float(freqs[i]), nyquist


def _oscillation_initial_guess(t, y, freq):
    """Grid over decay times; amplitude, phase and offset by linear least squares."""
    span = float(t[-1] - t[0])
    tt = t - t[0]
    best = None
    for tau in span * np.array([0.1, 0.3, 1.0, 3.0, 10.0, 100.0]):
        env = np.exp(-t / tau)
        design = np.column_stack([env * np.cos(2 * np.pi * freq * t), -env * np.sin(2 * np.pi * freq * t),
                                  np.ones_like(tt)])
        coef, *_ = np.linalg.lstsq(design, y, rcond=None)
        rss = float(np.sum((design @ coef - y) ** 2))
        if best is None or rss < best[0]:
            best = (rss, tau, coef)
    _, tau, (ac, as_, c) = best
    return tau, float(math.hypot(ac, as_)), float(math.atan2(as_, ac)), float(c)


def _canonical(freq, amp, phase):
    if freq < 0:
        freq, phase = -freq, -phase
    if amp < 0:
        amp, phase = -amp, phase + math.pi
    phase = (phase + math.pi) % (2 * math.pi) - math.pi
    return freq, amp, phase


def _fit_damped_cosine(kind: str, trace: CoherenceTrace) -> tuple[NllsResult, float, float]:
    t, y = trace.time, trace.population
    if np.ptp(y) == 0:
        raise NoOscillationError("constant trace")
    freq0, nyquist = _spectral_peak(t, y)
    if freq0 == 0.0:
        raise NoOscillationError("spectral peak at dc: no oscillation to fit")
    tau0, amp0, phase0, c0 = _oscillation_initial_guess(t, y, freq0)
    tiny = np.finfo(float).tiny
    res = curve_fit(damped_cosine, t, y, [freq0, tau0, amp0, phase0, c0], jac=damped_cosine_jac,
                    bounds=([-np.inf, tiny, -np.inf, -np.inf, -np.inf], [np.inf] * 5))
    return res, freq0, nyquist


def _alias_diagnostics(freq: float, nyquist: float) -> dict:
    fs = 2.0 * nyquist
    candidates = sorted({float(abs(freq + s * m * fs)) for m in (1, 2) for s in (-1, 1)})
    return {
        "nyquist_hz": nyquist,
        "alias_candidates_hz": candidates,
        "near_nyquist": bool(freq > 0.8 * nyquist),
    }


def _canonical_result(res: NllsResult) -> NllsResult:
    freq, tau, amp, phase, c = res.x
    freq, amp, phase = _canonical(freq, amp, phase)
    x = np.array([freq, tau, amp, phase, c])
    return NllsResult(x=x, covariance=res.covariance, stderr=res.stderr, residual_norm=res.residual_norm,
                      chi2_reduced=res.chi2_reduced, residuals=res.residuals, jacobian=res.jacobian,
                      niter=res.niter, nfev=res.nfev, status=res.status)


def fit_rabi(trace: CoherenceTrace) -> CoherenceFit:
    """Fit A·cos(2πΩt + φ)·exp(−t/τ) + c.

    Parameters: ``rabi_frequency`` (Hz), ``tau``, ``amplitude``, ``phase``,
    ``offset``. Uniformly sampled data cannot tell Ω from its aliases
    |Ω ± m f_s|; the diagnostics list them alongside the Nyquist frequency.
    """
    _require_kind(trace, "rabi", 8)
    res, freq0, nyquist = _fit_damped_cosine("rabi", trace)
    res = _canonical_result(res)
    diag = {"initial_frequency_hz": freq0, **_alias_diagnostics(res.x[0], nyquist)}
    return _finish("rabi", ("rabi_frequency", "tau", "amplitude", "phase", "offset"), res, diag)


def fit_ramsey(trace: CoherenceTrace) -> CoherenceFit:
    """Fit A·exp(−t/T2)·cos(2πδt + φ) + c.

    Parameters: ``t2``, ``detuning``, ``amplitude``, ``phase``, ``offset``.
    When the trace shows no resolvable fringe (spectral peak at dc) the
    detuning and phase are pinned to zero and a plain exponential is fitted;
    ``diagnostics["detuning_fixed"]`` records this.
    """
    _require_kind(trace, "ramsey", 8)
    t, y = trace.time, trace.population
    if np.ptp(y) == 0:
        raise NoOscillationError("constant trace")
    freq0, nyquist = _spectral_peak(t, y)
    if freq0 == 0.0:
        exp_fit = _fit_exponential("ramsey", trace, "t2")
        p, e = exp_fit.params, exp_fit.stderr
        return CoherenceFit(
            kind="ramsey",
            params={"t2": p["t2"], "detuning": 0.0, "amplitude": p["amplitude"], "phase": 0.0, "offset": p["offset"]},
            stderr={"t2": e["t2"], "detuning": 0.0, "amplitude": e["amplitude"], "phase": 0.0, "offset": e["offset"]},
            chi2_reduced=exp_fit.chi2_reduced,
            covariance=exp_fit.covariance,
            diagnostics={**exp_fit.diagnostics, "detuning_fixed": True, "nyquist_hz": nyquist},
        )
    res, _, _ = _fit_damped_cosine("ramsey", trace)
    res = _canonical_result(res)
    freq, tau, amp, phase, c = res.x
    order = [1, 0, 2, 3, 4]
    x = np.array([tau, freq, amp, phase, c])
    err = res.stderr[order]
    cov = res.covariance[np.ix_(order, order)]
    return CoherenceFit(
        kind="ramsey",
        params=dict(zip(("t2", "detuning", "amplitude", "phase", "offset"), map(float, x))),
        stderr=dict(zip(("t2", "detuning", "amplitude", "phase", "offset"), map(float, err))),
        chi2_reduced=res.chi2_reduced,
        covariance=cov,
        diagnostics={"iterations": res.niter, "status": res.status, "detuning_fixed": False,
                     "initial_frequency_hz": freq0, **_alias_diagnostics(freq, nyquist)},
    )


def fit_coherence(trace: CoherenceTrace) -> CoherenceFit:
    return {"t1": fit_t1, "rabi": fit_rabi, "ramsey": fit_ramsey}[trace.kind](trace)
