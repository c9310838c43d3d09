import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from xduct import planner
from xduct.errors import ValidationError
from xduct.flux import FluxTuneModel
from xduct.params import packaged_data_path
from xduct.planner import CombModel


def test_comb_zero_bias_progression(comb):
    freqs = np.array([f for _, f in planner.comb_frequencies(comb, 0.0)])
    np.testing.assert_allclose(np.diff(freqs), comb.fsr, rtol=1e-12)


def test_comb_index_near_readout(comb):
    n_below = math.floor((7.339e9 - comb.f_ref) / comb.fsr)
    assert n_below == 22
    assert comb.zero_bias(22) == pytest.approx(7.309e9)
    assert comb.zero_bias(22) < 7.339e9 < comb.zero_bias(23)


def test_comb_uniform_fractional_shift(comb):
    zero = dict(planner.comb_frequencies(comb, 0.0))
    tuned = dict(planner.comb_frequencies(comb, comb.b_max))
    shifts = np.array([1 - tuned[n] / zero[n] for n in zero])
    assert np.ptp(shifts) < 1e-15
    assert shifts[0] == pytest.approx(0.0083, rel=1e-12)


def test_comb_range_error(comb):
    with pytest.raises(ValidationError):
        planner.comb_frequencies(comb, comb.b_max + 0.1)


def test_comb_sanity():
    with pytest.raises(ValidationError):
        CombModel(5e9, 76e6, 0, 10, 0.05, 4.0)
    with pytest.raises(ValidationError):
        CombModel(5e9, 76e6, 3, 1, 1e-4, 4.0)


def test_identity_alignment():
    comb = CombModel(5.0e9, 100e6, 0, 10, 1e-4, 4.0)
    m2o = FluxTuneModel(5.3e9, 5e-4, 4.0)
    plan = planner.plan_match(5.5e9, comb, m2o)
    assert plan.feasible
    assert plan.b_mm == 0.0 and plan.b_mo == 0.0
    assert (plan.signal_index, plan.idler_index) == (5, 3)


def test_paper_plan(comb, m2o):
    plan = planner.plan_match(7.339e9, comb, m2o)
    assert plan.feasible
    assert plan.signal_index == 23
    assert abs(plan.f_pump_conv - 1.70e9) <= comb.fsr / 2
    assert plan.f_pump_amp == 2 * plan.f_idler
    assert plan.f_pump_conv == abs(plan.f_signal - plan.f_idler)
    assert plan.slack == 0.0
    assert plan.f_pump_conv < min(plan.f_signal, plan.f_idler)


def test_plan_in_coverage_gap(comb, m2o):
    cov = planner.coverage((7.0e9, 7.6e9), comb, m2o, gate_idler=False)
    lo, hi = cov.gaps[0]
    target = 0.5 * (lo + hi)
    plan = planner.plan_match(target, comb, m2o)
    assert not plan.feasible
    assert plan.diagnostic
    assert plan.slack > 0


def test_plan_just_below_tuning_floor(comb, m2o):
    # f_n(0)(1 − δ) − 1 kHz for every n sits in a gap when tuning < FSR
    n = 23
    target = comb.zero_bias(n) * (1 - comb.max_fractional_shift) - 1e3
    plan = planner.plan_match(target, comb, m2o)
    assert not plan.feasible
    assert plan.slack == pytest.approx(1e3, rel=1e-6)


def test_plan_idler_gate():
    # no other comb mode within reach of the transducer window
    comb = CombModel(5.0e9, 100e6, 0, 3, 1e-4, 4.0)
    m2o = FluxTuneModel(9.0e9, 1e-4, 4.0)
    plan = planner.plan_match(5.2e9, comb, m2o)
    assert not plan.feasible
    assert "idler" in plan.diagnostic


def test_plan_rejects_nonpositive_target(comb, m2o):
    with pytest.raises(ValidationError):
        planner.plan_match(-1.0, comb, m2o)


@given(st.floats(5.0e9, 8.5e9))
def test_feasible_plans_are_exact(target):
    comb = planner.load_comb(packaged_data_path("comb.json"))
    m2o = planner.load_flux_model(packaged_data_path("m2o.json"))
    plan = planner.plan_match(target, comb, m2o)
    if plan.feasible:
        sig, idl = planner.plan_residuals(plan, comb, m2o)
        assert sig < 1.0 and idl < 1.0
        assert plan.f_pump_amp == 2 * plan.f_idler
    assert planner.plan_match(target, comb, m2o) == plan


def test_plan_agrees_with_coverage(comb, m2o):
    band = (5.0e9, 8.5e9)
    cov = planner.coverage(band, comb, m2o, gate_idler=True)
    rng = np.random.default_rng(3)
    for target in rng.uniform(*band, 300):
        inside = any(lo <= target <= hi for lo, hi in cov.covered)
        assert planner.plan_match(target, comb, m2o).feasible == inside


def test_coverage_strong_tuning():
    comb = CombModel(5e9, 20e6, 0, 200, 3.125e-4, 4.0)  # δ = 0.5%, δ·f ≥ 25 MHz > fsr
    assert comb.max_fractional_shift * 5e9 >= comb.fsr
    m2o = FluxTuneModel(5.5e9, 0.01, 4.0)
    cov = planner.coverage((5.5e9, 8e9), comb, m2o, gate_idler=False)
    assert cov.fraction == 1.0
    assert cov.gaps == []


def test_coverage_no_tuning(m2o):
    comb = CombModel(5.637e9, 76e6, -9, 38, 0.0, 4.0)
    assert planner.coverage((7e9, 7.5e9), comb, m2o, gate_idler=False).fraction == 0.0


def test_coverage_near_readout(comb, m2o):
    signal_only = planner.coverage_near(7.339e9, comb, m2o, gate_idler=False)
    oracle = 0.0083 * 7.339e9 / 76e6
    assert signal_only.fraction == pytest.approx(oracle, abs=0.01)
    assert abs(signal_only.fraction - 0.78) <= 0.03


def test_coverage_gap_bookkeeping(comb, m2o):
    band = (5.0e9, 8.5e9)
    cov = planner.coverage(band, comb, m2o)
    gap_total = sum(hi - lo for lo, hi in cov.gaps)
    assert cov.fraction + gap_total / (band[1] - band[0]) == pytest.approx(1.0, abs=1e-12)
    assert cov.gaps == sorted(cov.gaps)


def test_coverage_band_validation(comb, m2o):
    with pytest.raises(ValidationError):
        planner.coverage((8e9, 7e9), comb, m2o)


def test_coverage_monotone_in_tuning(m2o):
    band = (6e9, 8e9)
    fracs = [planner.coverage(band, CombModel(5.637e9, 76e6, -9, 38, k, 4.0), m2o).fraction
             for k in np.linspace(0, 8e-4, 9)]
    assert all(b >= a - 1e-12 for a, b in zip(fracs, fracs[1:]))


def test_coverage_monotone_in_fsr(m2o):
    band = (6e9, 8e9)
    fracs = []
    for fsr in np.linspace(50e6, 120e6, 8):
        n_max = int((9e9 - 5.637e9) / fsr)
        comb = CombModel(5.637e9, fsr, -int(2e9 / fsr), n_max, 5.1875e-4, 4.0)
        fracs.append(planner.coverage(band, comb, m2o, gate_idler=False).fraction)
    assert all(b <= a + 1e-12 for a, b in zip(fracs, fracs[1:]))


def test_chain_efficiency():
    assert planner.chain_efficiency(1.3e-3, 0.5) == pytest.approx(6.5e-4)
    assert planner.chain_efficiency(0.2, 1.0) == 0.2
    assert planner.chain_efficiency(0.2, 0.0) == 0.0
    with pytest.raises(ValidationError):
        planner.chain_efficiency(1.2, 0.5)


def test_chain_added_noise():
    assert planner.chain_added_noise(0, 0, 0.4) == 0
    assert planner.chain_added_noise(1.3, 3.1, 0.67) == pytest.approx(5.93, abs=5e-3)
    assert planner.chain_added_noise(1.0, 2.0, 1.0) == 3.0
    with pytest.raises(ValidationError):
        planner.chain_added_noise(1.0, 1.0, 0.0)


def test_transduction_schedule_defaults():
    sched = planner.pulse_schedule("transduction")
    assert sched.period == 1e-3
    assert sched.event("mm_pump").start == 0.0
    assert sched.event("mm_pump").duration == pytest.approx(6e-6)
    for ch in ("laser", "probe"):
        assert sched.event(ch).start == pytest.approx(2e-6)
        assert sched.event(ch).duration == pytest.approx(4e-6)


def test_schedule_period_too_short():
    with pytest.raises(ValidationError):
        planner.pulse_schedule("transduction", period=5e-6)


def test_schedule_negative_override():
    with pytest.raises(ValidationError):
        planner.pulse_schedule("transduction", lead=-1e-6)


@given(st.floats(0, 200e-6))
def test_qubit_readout_delay(delay):
    sched = planner.pulse_schedule("qubit_readout", delay=delay)
    drive, laser = sched.event("qubit_drive"), sched.event("laser")
    assert laser.start - drive.end == pytest.approx(delay, abs=1e-15)
    assert sched.event("mm_pump").start == sched.event("mm_amp_pump").start
    assert laser.start - sched.event("mm_pump").start == pytest.approx(2e-6, abs=1e-15)
