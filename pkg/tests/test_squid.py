import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jpa3d.constants import PHI0
from jpa3d.errors import NearHalfFluxQuantum
from jpa3d.squid import (
    FluxDrive,
    QuenchState,
    SquidParams,
    flux_from_bias_current,
    min_abs_cos_over_cycle,
    pump_flux_amplitude,
    quench_check,
    squid_inductance,
)

P = SquidParams()


def test_zero_flux_inductance():
    assert squid_inductance(P, 0.0) == pytest.approx(PHI0 / (4 * math.pi * 1.6e-6), rel=1e-15)
    assert squid_inductance(P, 0.0) == pytest.approx(0.1029e-9, abs=1e-13)


def test_inductance_at_03():
    assert squid_inductance(P, 0.3) == pytest.approx(0.1750e-9, abs=1e-13)


def test_half_flux_raises():
    with pytest.raises(NearHalfFluxQuantum):
        squid_inductance(P, 0.5)


def test_cutoff_and_ceiling():
    assert P.cutoff_flux == pytest.approx(0.47259, abs=1e-5)
    assert P.max_inductance == pytest.approx(1.196e-9, rel=1e-3)
    squid_inductance(P, P.cutoff_flux)
    with pytest.raises(NearHalfFluxQuantum):
        squid_inductance(P, math.nextafter(P.cutoff_flux, 1.0) + 1e-12)


@given(st.floats(-0.47, 0.47), st.integers(-5, 5))
def test_periodic_and_even(phi, n):
    ref = squid_inductance(P, phi)
    assert squid_inductance(P, phi + n) == pytest.approx(ref, rel=1e-12)
    assert squid_inductance(P, -phi) == pytest.approx(ref, rel=1e-15)


def test_bias_current():
    assert flux_from_bias_current(P, 0.0) == 0.0
    assert flux_from_bias_current(P, 413.6e-6) == pytest.approx(1.000, abs=1e-3)
    assert flux_from_bias_current(P, -413.6e-6) == -flux_from_bias_current(P, 413.6e-6)


def test_pump_amplitude():
    assert pump_flux_amplitude(P, -34.0) == pytest.approx(0.305, abs=1e-3)
    assert pump_flux_amplitude(P, -400.0) < 1e-15
    att = SquidParams(line_attenuation_db=20.0)
    assert pump_flux_amplitude(att, -34.0) / pump_flux_amplitude(P, -34.0) == pytest.approx(0.1, rel=1e-14)


def test_quench_examples():
    assert quench_check(P, FluxDrive(0.5)) is QuenchState.QUENCHED
    assert quench_check(SquidParams(cos_floor=0.1), FluxDrive(0.3, 0.05)) is QuenchState.SAFE
    for floor in (0.05, 0.1, 0.5):
        assert quench_check(SquidParams(cos_floor=floor), FluxDrive(0.45, 0.1)) is QuenchState.QUENCHED


@settings(max_examples=200)
@given(st.floats(-2, 2), st.floats(0, 0.6))
def test_min_cos_matches_brute_force(phi_dc, phi_ac):
    u = np.linspace(0, 2 * np.pi, 20001)
    brute = np.min(np.abs(np.cos(np.pi * (phi_dc + phi_ac * np.cos(u)))))
    exact = min_abs_cos_over_cycle(phi_dc, phi_ac)
    # the analytic minimum is a lower bound that the sampled cycle approaches
    assert exact <= brute + 1e-12
    assert brute - exact < 1e-3


def test_invalid_params():
    with pytest.raises(ValueError):
        SquidParams(i_c_junction=0)
    with pytest.raises(ValueError):
        SquidParams(cos_floor=1.0)
    with pytest.raises(ValueError):
        FluxDrive(0.0, -0.1)
