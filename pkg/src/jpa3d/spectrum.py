"""Two-mode lumped model of the cavity and the SQUID-embedding resonator.

The SQUID resonator is an LC mode, ``omega_b = 1/sqrt((l_geo + L_S) c_b)``,
coupled to the cavity mode ``omega_a`` by a beam-splitter (rotating wave)
interaction ``g``. The 2x2 eigenproblem gives the dressed modes

    omega_pm = (omega_a + omega_b)/2 +- sqrt(Delta_ab**2/4 + g**2)
    tan(2 theta) = 2 g / Delta_ab,   Delta_ab = omega_a - omega_b

The cavity-like branch is picked with the mixing angle rather than by
frequency ordering. Its eigenvalue ``omega_a cos^2 + omega_b sin^2 + g sin 2theta``
is continuous wherever ``Delta_ab`` keeps its sign.

All rates are angular (rad/s).
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import bisect

from jpa3d.constants import E_CHARGE, HBAR, TWO_PI
from jpa3d.errors import DispersiveRegimeError, DispersiveRegimeWarning, NearHalfFluxQuantum
from jpa3d.squid import SquidParams, squid_inductance

FLUXMAP_HEADER = ("phi_dc", "omega_c_hz", "slope_hz_per_phi0", "kerr_cav_hz", "masked")


@dataclass(frozen=True)
class CavityMode:
    """A single cavity mode with internal and external decay rates (rad/s)."""

    omega_bare: float
    kappa_int: float
    kappa_ext: float

    def __post_init__(self):
        if not self.omega_bare > 0:
            raise ValueError("omega_bare must be positive")
        if not (self.kappa_int > 0 and self.kappa_ext > 0):
            raise ValueError("decay rates must be positive")
        if (self.kappa_int + self.kappa_ext) / self.omega_bare >= 1e-2:
            raise ValueError("linewidth is not small against the mode frequency")

    @property
    def kappa_tot(self) -> float:
        return self.kappa_int + self.kappa_ext

    def with_frequency(self, omega: float) -> "CavityMode":
        return CavityMode(omega, self.kappa_int, self.kappa_ext)


@dataclass(frozen=True)
class SquidResonator:
    l_geo: float
    c_b: float

    def __post_init__(self):
        if not (self.l_geo > 0 and self.c_b > 0):
            raise ValueError("l_geo and c_b must be positive")


@dataclass(frozen=True)
class CoupledCircuit:
    """Cavity + SQUID resonator + SQUID, coupled at rate ``g``.

    With ``strict=True`` the dispersive condition ``g < |Delta_ab|/2`` is
    enforced over the whole valid flux range and a violation raises
    :class:`DispersiveRegimeError`. ``strict=False`` downgrades it to a
    :class:`DispersiveRegimeWarning`; the eigenproblem itself stays exact.
    """

    cavity: CavityMode
    squid_res: SquidResonator
    squid: SquidParams
    g: float
    strict: bool = field(default=True, compare=False)

    def __post_init__(self):
        if self.g < 0:
            raise ValueError("g must be >= 0")
        if self.g == 0:
            return
        worst = self.dispersive_ratio()
        if worst >= 0.5:
            msg = (
                f"g/|omega_a - omega_b| reaches {worst:.3f} (>= 0.5) inside the "
                "valid flux range; the modes are strongly hybridised"
            )
            if self.strict:
                raise DispersiveRegimeError(msg)
            warnings.warn(msg, DispersiveRegimeWarning, stacklevel=3)

    def dispersive_ratio(self) -> float:
        """max of g/|Delta_ab| over phi in [0, cutoff]."""
        wa = self.cavity.omega_bare
        # omega_b is monotone in |phi|, so |Delta_ab| is extremal at the ends
        # unless omega_a lies inside [omega_b(cut), omega_b(0)]
        wb0 = squid_mode_frequency(self, 0.0)
        wbc = squid_mode_frequency(self, self.squid.cutoff_flux)
        if min(wb0, wbc) <= wa <= max(wb0, wbc):
            return math.inf
        return self.g / min(abs(wa - wb0), abs(wa - wbc))


def squid_mode_frequency(c: CoupledCircuit, phi: float) -> float:
    """Bare SQUID-resonator angular frequency at flux ``phi``."""
    ls = squid_inductance(c.squid, phi)
    return 1.0 / math.sqrt((c.squid_res.l_geo + ls) * c.squid_res.c_b)


def _mixing_angle(g: float, delta_ab: float) -> float:
    if delta_ab == 0.0:
        return math.copysign(math.pi / 4, g) if g else 0.0
    return 0.5 * math.atan(2.0 * g / delta_ab)


def normal_modes(c: CoupledCircuit, phi: float) -> tuple[float, float, float]:
    """Return ``(omega_minus, omega_plus, theta)`` of the coupled pair."""
    wa = c.cavity.omega_bare
    wb = squid_mode_frequency(c, phi)
    d = wa - wb
    root = math.sqrt(0.25 * d * d + c.g * c.g)
    mean = 0.5 * (wa + wb)
    return mean - root, mean + root, _mixing_angle(c.g, d)


def cavity_dressed_frequency(c: CoupledCircuit, phi_dc: float) -> float:
    """Angular frequency of the cavity-like normal mode."""
    wa = c.cavity.omega_bare
    wb = squid_mode_frequency(c, phi_dc)
    d = wa - wb
    root = math.sqrt(0.25 * d * d + c.g * c.g)
    # cavity-like eigenvector is (cos theta, sin theta); sign(Delta_ab) picks the branch
    return 0.5 * (wa + wb) + math.copysign(root, d)


def flux_slope(c: CoupledCircuit, phi_dc: float) -> float:
    """d omega_c / d phi (rad/s per PHI0) by central difference."""
    h = max(1e-6, 1e-4 * abs(phi_dc))
    return (cavity_dressed_frequency(c, phi_dc + h) - cavity_dressed_frequency(c, phi_dc - h)) / (
        2 * h
    )


def kerr_budget(c: CoupledCircuit, phi_dc: float) -> tuple[float, float]:
    """Self-Kerr of the SQUID mode and the Kerr inherited by the cavity.

    The SQUID mode anharmonicity is the transmon-like charging term
    ``-e^2/(2 hbar c_b)`` scaled by the cube of the junction participation
    ``p = L_S/(L_S + l_geo)``; the cavity picks up ``sin^4 theta`` of it.
    Both are returned as angular rates (<= 0).
    """
    ls = squid_inductance(c.squid, phi_dc)
    p = ls / (ls + c.squid_res.l_geo)
    k_b = -(p**3) * E_CHARGE**2 / (2 * HBAR * c.squid_res.c_b)
    _, _, theta = normal_modes(c, phi_dc)
    return k_b, k_b * math.sin(theta) ** 4


@dataclass(frozen=True)
class Calibration:
    """Outcome of :func:`calibrate_circuit` (frequencies in Hz)."""

    circuit: CoupledCircuit
    g_hz: float
    f_a_bare_hz: float
    c_b: float
    pull_hz: float
    f_dressed0_hz: float

    def as_dict(self) -> dict:
        return {
            "g_hz": self.g_hz,
            "f_a_bare_hz": self.f_a_bare_hz,
            "c_b_farad": self.c_b,
            "pull_hz": self.pull_hz,
            "f_dressed0_hz": self.f_dressed0_hz,
        }


def _bare_cavity_for(target: float, wb: float, g: float) -> float:
    # cavity-like eigenvalue lam of [[wa, g], [g, wb]] solves (lam-wa)(lam-wb) = g^2
    return target - g * g / (target - wb)


def calibrate_circuit(
    squid: SquidParams,
    kappa_int: float,
    kappa_ext: float,
    l_geo: float = 8.6e-9,
    f_b0_hz: float = 6.2e9,
    f_dressed0_hz: float = 8.22e9,
    pull_hz: float = 90e6,
    g_hz: float | None = None,
) -> Calibration:
    """Build a :class:`CoupledCircuit` matching measured frequencies.

    1. ``c_b`` is set so the bare SQUID resonator sits at ``f_b0_hz`` at
       zero flux.
    2. For a trial ``g`` the bare cavity frequency follows in closed form
       from the requirement that the dressed cavity mode at zero flux is
       ``f_dressed0_hz``.
    3. ``g`` is found by bisection so that the dressed frequency drops by
       ``pull_hz`` between zero flux and the cutoff boundary.

    Passing ``g_hz`` skips step 3. ``kappa_int``/``kappa_ext`` are angular.
    """
    w_b0 = TWO_PI * f_b0_hz
    target = TWO_PI * f_dressed0_hz
    if not target > w_b0:
        raise ValueError("the cavity must sit above the SQUID resonator")
    c_b = 1.0 / (w_b0**2 * (l_geo + squid_inductance(squid, 0.0)))
    res = SquidResonator(l_geo, c_b)
    phi_cut = squid.cutoff_flux

    def build(g, strict=False):
        wa = _bare_cavity_for(target, w_b0, g)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DispersiveRegimeWarning)
            return CoupledCircuit(CavityMode(wa, kappa_int, kappa_ext), res, squid, g, strict=strict)

    def pull(g):
        c = build(g)
        return cavity_dressed_frequency(c, 0.0) - cavity_dressed_frequency(c, phi_cut)

    if g_hz is None:
        goal = TWO_PI * pull_hz
        # bare cavity must stay above omega_b(0): g < target - w_b0
        g_hi = (target - w_b0) * (1 - 1e-9)
        if not pull(0.0) < goal < pull(g_hi):
            raise ValueError(f"a pull of {pull_hz:g} Hz is not reachable")
        g = bisect(lambda x: pull(x) - goal, 0.0, g_hi, xtol=1e-6, rtol=4 * np.finfo(float).eps)
    else:
        g = TWO_PI * g_hz
    circuit = build(g)
    if circuit.dispersive_ratio() >= 0.5:
        # re-run construction so the warning reaches the caller
        circuit = CoupledCircuit(circuit.cavity, res, squid, g, strict=False)
    return Calibration(
        circuit=circuit,
        g_hz=g / TWO_PI,
        f_a_bare_hz=circuit.cavity.omega_bare / TWO_PI,
        c_b=c_b,
        pull_hz=pull(g) / TWO_PI,
        f_dressed0_hz=cavity_dressed_frequency(circuit, 0.0) / TWO_PI,
    )


def flux_map(c: CoupledCircuit, phis, map_fn=map) -> list[tuple]:
    """Rows ``(phi, f_c, slope, kerr_cav, masked)`` in Hz for each flux.

    Grid points inside (or whose finite-difference stencil enters) the
    cutoff band are returned masked with NaN values. ``map_fn`` may be an
    executor's ordered ``map``; row order always follows ``phis``.
    """

    def row(phi):
        phi = float(phi)
        try:
            f = cavity_dressed_frequency(c, phi) / TWO_PI
            s = flux_slope(c, phi) / TWO_PI
            k = kerr_budget(c, phi)[1] / TWO_PI
        except NearHalfFluxQuantum:
            return (phi, math.nan, math.nan, math.nan, 1)
        return (phi, f, s, k, 0)

    return list(map_fn(row, phis))


def format_fluxmap_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(FLUXMAP_HEADER)
    for phi, f, s, k, m in rows:
        w.writerow([_fmt(phi), _fmt(f), _fmt(s), _fmt(k), m])
    return buf.getvalue()


def _fmt(x: float) -> str:
    return "nan" if math.isnan(x) else repr(float(x))
