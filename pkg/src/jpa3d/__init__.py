"""Simulation and inference tools for a flux-pumped, cavity-based Josephson
parametric amplifier."""

from jpa3d.amplifier import (
    GainCurve,
    PumpOperatingPoint,
    calibrate_kerr,
    compression_point,
    critical_pump,
    gain_bandwidth,
    gain_paper_formula,
    linear_s11,
    parametric_rate,
    saturated_gain,
    signal_idler_gain,
)
from jpa3d.estimation import (
    NoiseBudget,
    ReflectionTrace,
    fit_gain_curve,
    fit_s11,
    invert_snri,
    normalize_trace,
    propagate_budget,
    snri,
    temperature_to_quanta,
)
from jpa3d.oracle import DriveSchedule, integrate_cavity, measure_gain
from jpa3d.spectrum import (
    CavityMode,
    CoupledCircuit,
    SquidResonator,
    calibrate_circuit,
    cavity_dressed_frequency,
    flux_slope,
    kerr_budget,
    normal_modes,
    squid_mode_frequency,
)
from jpa3d.squid import (
    FluxDrive,
    QuenchState,
    SquidParams,
    flux_from_bias_current,
    pump_flux_amplitude,
    quench_check,
    squid_inductance,
)

__version__ = "0.1.0"
