import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jpa3d.amplifier import GainCurve, gain_paper_formula, to_db
from jpa3d.constants import TWO_PI
from jpa3d.errors import (
    InsufficientWings,
    NoResonanceFound,
    ThresholdInsideData,
    TooManyRejections,
    UnphysicalSNRI,
)
from jpa3d.estimation import (
    Measured,
    NoiseBudget,
    ReflectionTrace,
    db_to_ratio,
    fit_gain_curve,
    fit_s11,
    invert_snri,
    normalize_trace,
    propagate_budget,
    s11_model,
    snri,
    temperature_to_quanta,
    vacuum_temperature,
)

F0 = 8.22e9
KE = TWO_PI * 1.1e6
KI = TWO_PI * 0.42e6
W_SIG = TWO_PI * 8.3e9


def synth(sigma=0.0, seed=0, ke=KE, ki=KI, amp=1.0, phase=0.0, delay=0.0, n=801, span=20e6):
    f = F0 + np.linspace(-span / 2, span / 2, n)
    z = s11_model(f, F0, ke, ki) * amp * np.exp(1j * (phase - TWO_PI * f * delay))
    rng = np.random.default_rng(seed)
    z = z + sigma * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
    return f, z


def test_csv_round_trip():
    f, z = synth(0.01, seed=1)
    t = ReflectionTrace(f, z)
    back = ReflectionTrace.from_csv(t.to_csv())
    assert np.array_equal(back.freq_hz, f) and np.array_equal(back.s11, z)
    with pytest.raises(ValueError):
        ReflectionTrace.from_csv("f,re,im\n1,2,3\n")


def test_normalize_background():
    f, z = synth(amp=0.5, phase=0.4, delay=30e-9)
    t = normalize_trace(ReflectionTrace(f, z))
    assert t.meta["amplitude"] == pytest.approx(0.5, rel=1e-2)
    assert t.meta["delay_s"] == pytest.approx(30e-9, abs=0.5e-9)
    wings = np.r_[t.s11[:80], t.s11[-80:]]
    assert np.all(np.abs(np.abs(wings) - 1) < 0.02)
    assert np.allclose(t.s11, s11_model(f, F0, KE, KI), atol=1e-6)


def test_normalize_flat_identity():
    f = F0 + np.linspace(-1e7, 1e7, 401)
    t = normalize_trace(ReflectionTrace(f, np.ones_like(f, dtype=complex)))
    assert np.max(np.abs(t.s11 - 1)) < 1e-6
    assert t.meta["resonance_found"] is False


def test_normalize_pure_noise_flagged():
    rng = np.random.default_rng(5)
    f = F0 + np.linspace(-1e7, 1e7, 401)
    z = 0.3 * np.exp(0.2j) * (1 + 0.01 * (rng.standard_normal(401) + 1j * rng.standard_normal(401)))
    t = normalize_trace(ReflectionTrace(f, z))
    assert t.meta["resonance_found"] is False
    with pytest.raises(NoResonanceFound):
        fit_s11(ReflectionTrace(f, np.ones(401, complex), normalized=True))


def test_normalize_wide_resonance():
    f, z = synth(span=3e6)
    with pytest.raises(InsufficientWings):
        normalize_trace(ReflectionTrace(f, z))


def test_fit_noiseless_exact():
    f, z = synth()
    r = fit_s11(ReflectionTrace(f, z, normalized=True))
    assert r.converged
    assert r.omega0 == pytest.approx(TWO_PI * F0, rel=1e-12)
    assert r.kappa_ext == pytest.approx(KE, rel=1e-6)
    assert r.kappa_int == pytest.approx(KI, rel=1e-6)


@pytest.mark.parametrize("ke,ki", [(KE, KI), (KI, KE)])
def test_fit_swapped_start(ke, ki):
    f, z = synth(0.005, seed=2, ke=ke, ki=ki)
    t = ReflectionTrace(f, z, normalized=True)
    a = fit_s11(t, init=(TWO_PI * F0, ke, ki))
    b = fit_s11(t, init=(TWO_PI * F0, ki, ke))
    assert a.kappa_ext == pytest.approx(b.kappa_ext, rel=1e-6)
    assert a.kappa_int == pytest.approx(b.kappa_int, rel=1e-6)
    assert a.kappa_ext == pytest.approx(ke, rel=0.02)


def test_fit_noisy_with_background():
    for seed in range(20):
        f, z = synth(0.01, seed=seed, amp=0.7, phase=-1.0, delay=40e-9)
        r = fit_s11(normalize_trace(ReflectionTrace(f, z)))
        assert abs(r.omega0 / TWO_PI - F0) < 10e3
        assert r.kappa_ext == pytest.approx(KE, rel=0.02)
        assert r.kappa_int == pytest.approx(KI, rel=0.02)


def _law_curve(p_c=-30.0, noise=0.0, seed=0):
    p = np.arange(-45.0, -30.4, 0.25)
    g = to_db(gain_paper_formula(10 ** ((p - p_c) / 10), 1.0))
    return p, g + noise * np.random.default_rng(seed).standard_normal(len(p))


def test_gain_fit_noiseless():
    p, g = _law_curve()
    assert fit_gain_curve(GainCurve(p, g)).p_c_dbm == pytest.approx(-30.0, abs=0.01)


def test_gain_fit_noisy():
    for seed in range(20):
        p, g = _law_curve(noise=0.2, seed=seed)
        assert fit_gain_curve(GainCurve(p, g)).p_c_dbm == pytest.approx(-30.0, abs=0.3)


@settings(max_examples=20, deadline=None)
@given(st.floats(-20, 20))
def test_gain_fit_translation(shift):
    p, g = _law_curve(noise=0.1, seed=3)
    a = fit_gain_curve(GainCurve(p, g)).p_c_dbm
    b = fit_gain_curve(GainCurve(p + shift, g)).p_c_dbm
    assert b - a == pytest.approx(shift, abs=2e-3)


def test_gain_fit_threshold_inside():
    p, g = _law_curve()
    g = g + np.linspace(0, 15, len(g)) ** 2
    with pytest.raises(ThresholdInsideData):
        fit_gain_curve(GainCurve(p, g))


def test_snri_values():
    assert 10 * math.log10(snri(0.1475, 4.4, db_to_ratio(17.8))) == pytest.approx(13.0, abs=1e-3)
    assert snri(0.0, 4.4, 60.26) == pytest.approx(60.26)
    assert snri(0.2, 4.4, 1e300) == pytest.approx(22.0)


def test_invert_snri():
    t = invert_snri(db_to_ratio(13.0), 4.4, db_to_ratio(17.8))
    assert t == pytest.approx(0.1475, abs=1e-4)
    assert invert_snri(40.0, 4.4, 40.0) == 0.0
    with pytest.raises(UnphysicalSNRI):
        invert_snri(41.0, 4.4, 40.0)


@given(st.floats(1e-3, 10), st.floats(0.5, 20), st.floats(1.5, 1e4))
def test_snri_inverse_pair(t, tc, g):
    assert invert_snri(snri(t, tc, g), tc, g) == pytest.approx(t, rel=1e-9)


def test_quanta():
    tv = vacuum_temperature(W_SIG)
    assert tv == pytest.approx(0.1992, abs=1e-3)
    assert temperature_to_quanta(tv, W_SIG) == pytest.approx(0.5, abs=1e-12)
    assert temperature_to_quanta(0.0, W_SIG) == 0.0
    assert temperature_to_quanta(0.1475, W_SIG) == pytest.approx(0.370, abs=1e-3)


def _budget(**kw):
    args = dict(
        g_jpa_db=Measured(17.8),
        t_cryo_k=Measured(4.4, 0.3),
        omega_signal=W_SIG,
        snri_db=Measured(13.0, 1.0),
    )
    args.update(kw)
    return NoiseBudget(**args)


def test_budget_zero_sigma():
    b = propagate_budget(_budget(t_cryo_k=Measured(4.4), snri_db=Measured(13.0)), draws=1000)
    assert b.t_jpa_k.value == pytest.approx(b.nominal["t_jpa_k"], rel=1e-12)
    assert b.t_jpa_k.sigma < 1e-12 * b.t_jpa_k.value


def test_budget_deterministic():
    a = propagate_budget(_budget(), seed=7, draws=20000)
    b = propagate_budget(_budget(), seed=7, draws=20000)
    assert a.report() == b.report()
    c = propagate_budget(_budget(), seed=8, draws=20000)
    assert c.t_jpa_k.value != a.t_jpa_k.value


def test_budget_converges_to_nominal():
    b = propagate_budget(_budget(snri_db=Measured(13.0, 0.05), t_cryo_k=Measured(4.4, 0.01)), draws=200000)
    assert b.t_jpa_k.value == pytest.approx(0.1475, rel=2e-3)


def test_budget_noise_rise_route():
    b = propagate_budget(
        _budget(snri_db=None, noise_rise_db=Measured(4.8, 0.25)), seed=0, draws=100000
    )
    assert b.nominal["t_jpa_k"] == pytest.approx(0.1475, abs=1e-4)
    assert b.t_jpa_k.value == pytest.approx(0.1478, abs=1e-3)
    assert b.t_jpa_k.sigma == pytest.approx(0.0163, abs=1e-3)


def test_budget_wide_snri_rejected():
    with pytest.raises(TooManyRejections):
        propagate_budget(_budget(snri_db=Measured(13.0, 8.5)), draws=20000)


def test_budget_unphysical_nominal():
    with pytest.raises(UnphysicalSNRI):
        propagate_budget(_budget(snri_db=Measured(18.0)), draws=100)
