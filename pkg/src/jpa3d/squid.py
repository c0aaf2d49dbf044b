"""Flux-tunable SQUID inductance and flux-line drive.

The SQUID is treated as a single tunable inductance

    L_S(phi) = PHI0 / (2 pi * 2 I_c * |cos(pi phi)|)

with ``I_c`` the critical current of *one* junction and ``phi`` the applied
flux in units of the flux quantum. Loop self-inductance and junction
asymmetry are ignored. With I_c = 1.6 uA the zero-flux value is 0.103 nH.

Near half a flux quantum the inductance diverges; the band where
``|cos(pi phi)| < cos_floor`` is treated as invalid (the SQUID is easily
quenched there). The default floor 0.086 caps the modelled inductance at
about 1.2 nH.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

from jpa3d.constants import PHI0
from jpa3d.errors import NearHalfFluxQuantum

DEFAULT_COS_FLOOR = 0.086


@dataclass(frozen=True)
class SquidParams:
    """SQUID and flux-line parameters.

    Attributes
    ----------
    i_c_junction : float
        Critical current per junction [A].
    mutual_inductance : float
        Flux line to SQUID loop mutual inductance [H].
    cos_floor : float
        Validity cutoff on ``|cos(pi phi)|``.
    line_impedance : float
        Flux-line characteristic impedance [Ohm].
    line_attenuation_db : float
        Attenuation between the pump reference plane and the flux line [dB].
    """

    i_c_junction: float = 1.6e-6
    mutual_inductance: float = 5e-12
    cos_floor: float = DEFAULT_COS_FLOOR
    line_impedance: float = 50.0
    line_attenuation_db: float = 0.0

    def __post_init__(self):
        if not self.i_c_junction > 0:
            raise ValueError("i_c_junction must be positive")
        if not self.mutual_inductance > 0:
            raise ValueError("mutual_inductance must be positive")
        if not 0 < self.cos_floor < 1:
            raise ValueError("cos_floor must lie in (0, 1)")
        if not self.line_impedance > 0:
            raise ValueError("line_impedance must be positive")

    @property
    def cutoff_flux(self) -> float:
        """Largest |phi| in [0, 1/2] still inside the valid band."""
        phi = math.acos(self.cos_floor) / math.pi
        while abs(math.cos(math.pi * phi)) < self.cos_floor:
            phi = math.nextafter(phi, 0.0)
        return phi

    @property
    def max_inductance(self) -> float:
        return squid_inductance(self, self.cutoff_flux)


@dataclass(frozen=True)
class FluxDrive:
    """External flux ``phi_dc + phi_ac cos(omega_p t)``, fluxes in PHI0."""

    phi_dc: float
    phi_ac: float = 0.0
    omega_p: float = 0.0

    def __post_init__(self):
        if self.phi_ac < 0:
            raise ValueError("phi_ac must be >= 0")
        if self.omega_p < 0:
            raise ValueError("omega_p must be >= 0")


class QuenchState(enum.Enum):
    SAFE = "safe"
    QUENCHED = "quenched"


def _reduce(phi: float) -> float:
    # map onto [-1/2, 1/2] so periodicity holds to rounding
    return phi - round(phi)


def squid_inductance(p: SquidParams, phi: float) -> float:
    """SQUID inductance [H] at flux ``phi`` (units of PHI0).

    Raises
    ------
    NearHalfFluxQuantum
        If ``|cos(pi phi)| < p.cos_floor``.
    """
    c = abs(math.cos(math.pi * _reduce(phi)))
    if c < p.cos_floor:
        raise NearHalfFluxQuantum(
            f"|cos(pi*{phi:g})| = {c:.4g} below cos_floor {p.cos_floor:g}"
        )
    return PHI0 / (2 * math.pi * 2 * p.i_c_junction * c)


def flux_from_bias_current(p: SquidParams, i_dc: float) -> float:
    """DC flux (PHI0) produced by a flux-line bias current ``i_dc`` [A]."""
    return p.mutual_inductance * i_dc / PHI0


def pump_flux_amplitude(p: SquidParams, pump_power_dbm: float) -> float:
    """AC flux amplitude (PHI0) for a pump tone of ``pump_power_dbm``.

    The power is referenced at the flux-line input; ``line_attenuation_db``
    is removed first, then the peak current of a matched line
    ``sqrt(2 P / Z0)`` is converted to flux through the mutual inductance.
    """
    p_w = 1e-3 * 10.0 ** ((pump_power_dbm - p.line_attenuation_db) / 10.0)
    i_peak = math.sqrt(2.0 * p_w / p.line_impedance)
    return p.mutual_inductance * i_peak / PHI0


def min_abs_cos_over_cycle(phi_dc: float, phi_ac: float) -> float:
    """Minimum of ``|cos(pi (phi_dc + phi_ac cos u))|`` over a pump cycle.

    The flux sweeps the closed interval ``[phi_dc - phi_ac, phi_dc + phi_ac]``;
    ``|cos(pi x)|`` vanishes at half-integers and is unimodal between them,
    so the minimum is either zero or at an interval end.
    """
    lo, hi = phi_dc - abs(phi_ac), phi_dc + abs(phi_ac)
    if math.floor(hi - 0.5) >= math.ceil(lo - 0.5):
        return 0.0
    return min(abs(math.cos(math.pi * _reduce(lo))), abs(math.cos(math.pi * _reduce(hi))))


def quench_check(p: SquidParams, d: FluxDrive) -> QuenchState:
    """Flag drives whose flux excursion enters the near-half-flux band."""
    if min_abs_cos_over_cycle(d.phi_dc, d.phi_ac) < p.cos_floor:
        return QuenchState.QUENCHED
    return QuenchState.SAFE
