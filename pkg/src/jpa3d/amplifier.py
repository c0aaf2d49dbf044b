"""Reflection response, three-wave-mixing gain and Kerr-limited saturation.

Conventions
-----------
Everything inside is angular (rad/s). ``delta`` is the signal detuning from
the dressed cavity, ``omega_s - omega_0``. The pump sits at
``omega_p = 2 omega_s + Delta`` and the amplifier is solved in the limit
``Delta -> 0``, so the cavity seen from the half-pump frame is detuned by
``delta`` as well. The linearised steady state is then

    a = sqrt(kappa_ext) s_in (kappa/2 + i delta) / D
    D = (kappa/2)**2 + delta**2 - epsilon**2

and the parametric threshold is ``D = 0``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import brentq

from jpa3d.constants import HBAR, TWO_PI
from jpa3d.errors import AboveThreshold, NoConvergence, Quenched, TargetUnreachable
from jpa3d.spectrum import CavityMode, CoupledCircuit, cavity_dressed_frequency, flux_slope
from jpa3d.squid import FluxDrive, QuenchState, pump_flux_amplitude, quench_check

KERR_LIMIT = -TWO_PI * 10e6


@dataclass(frozen=True)
class PumpOperatingPoint:
    """Pumped cavity at a fixed flux bias.

    ``cavity`` carries the dressed frequency; ``epsilon`` is the parametric
    rate, ``delta_pump`` the pump detuning ``omega_p - 2 omega_s`` (kept for
    idler bookkeeping only) and ``kerr`` the cavity self-Kerr (<= 0).
    """

    cavity: CavityMode
    epsilon: float
    delta_pump: float = 0.0
    kerr: float = 0.0

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")
        if self.kerr > 0:
            raise ValueError("kerr must be <= 0")

    @property
    def below_threshold(self) -> bool:
        return self.epsilon < critical_pump(self.cavity)

    @property
    def pump_ratio(self) -> float:
        """``X = (2 epsilon / kappa)^2``, which equals ``P / P_c``."""
        return (2 * self.epsilon / self.cavity.kappa_tot) ** 2


@dataclass
class GainCurve:
    """Gain in dB against pump or signal power in dBm."""

    power_dbm: np.ndarray
    gain_db: np.ndarray
    kind: str = "pump"
    phi_dc: float | None = None
    delta_pump: float | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.power_dbm = np.asarray(self.power_dbm, dtype=float)
        self.gain_db = np.asarray(self.gain_db, dtype=float)
        if self.kind not in ("pump", "signal"):
            raise ValueError("kind must be 'pump' or 'signal'")
        if self.power_dbm.shape != self.gain_db.shape or self.power_dbm.ndim != 1:
            raise ValueError("power and gain must be 1-d arrays of equal length")
        if np.any(np.diff(self.power_dbm) <= 0):
            raise ValueError("powers must be strictly increasing")
        if not np.all(np.isfinite(self.gain_db)):
            raise ValueError("gains must be finite")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([f"{self.kind}_power_dbm", "gain_db"])
        for p, g in zip(self.power_dbm, self.gain_db):
            w.writerow([repr(float(p)), repr(float(g))])
        return buf.getvalue()


def dbm_to_watt(p_dbm):
    return 1e-3 * 10.0 ** (np.asarray(p_dbm, dtype=float) / 10.0)


def to_db(x):
    return 10.0 * np.log10(x)


def linear_s11(m: CavityMode, omega):
    """Reflection coefficient of the unpumped cavity (accepts arrays)."""
    omega = np.asarray(omega, dtype=float)
    s = np.asarray(1.0 - m.kappa_ext / (1j * (omega - m.omega_bare) + 0.5 * m.kappa_tot))
    return s if s.ndim else complex(s)


def critical_pump(cavity: CavityMode) -> float:
    """Parametric rate at which the total loss is cancelled, ``kappa/2``."""
    return 0.5 * (cavity.kappa_int + cavity.kappa_ext)


def dressed_cavity(c: CoupledCircuit, phi_dc: float) -> CavityMode:
    return c.cavity.with_frequency(cavity_dressed_frequency(c, phi_dc))


def parametric_rate(c: CoupledCircuit, phi_dc: float, phi_ac: float) -> float:
    """First-order flux modulation: ``epsilon = |d omega_c/d phi| phi_ac / 2``.

    Raises :class:`Quenched` if the pump excursion reaches the cutoff band.
    """
    if quench_check(c.squid, FluxDrive(phi_dc, phi_ac)) is QuenchState.QUENCHED:
        raise Quenched(f"phi_dc={phi_dc:g}, phi_ac={phi_ac:g} enters the cutoff band")
    return 0.5 * abs(flux_slope(c, phi_dc)) * phi_ac


def operating_point(
    c: CoupledCircuit,
    phi_dc: float,
    pump_power_dbm: float,
    delta_pump: float = 0.0,
    kerr: float = 0.0,
) -> PumpOperatingPoint:
    phi_ac = pump_flux_amplitude(c.squid, pump_power_dbm)
    eps = parametric_rate(c, phi_dc, phi_ac)
    return PumpOperatingPoint(dressed_cavity(c, phi_dc), eps, delta_pump, kerr)


def attenuation_for_rate(
    c: CoupledCircuit, phi_dc: float, pump_power_dbm: float, fraction: float = 0.95
) -> float:
    """Line attenuation (dB) putting ``pump_power_dbm`` at ``fraction`` of threshold.

    Solved by bracketed bisection on the attenuation. The flux-line reference
    plane is not known, so this is how a quoted pump power gets tied to the
    model.
    """
    eps_c = critical_pump(c.cavity)

    def excess(att):
        sq = replace(c.squid, line_attenuation_db=att)
        phi_ac = pump_flux_amplitude(sq, pump_power_dbm)
        if quench_check(sq, FluxDrive(phi_dc, phi_ac)) is QuenchState.QUENCHED:
            return 1e300
        return 0.5 * abs(flux_slope(c, phi_dc)) * phi_ac - fraction * eps_c

    lo, hi = -200.0, 200.0
    if not excess(lo) > 0 > excess(hi):
        raise TargetUnreachable("no attenuation in [-200, 200] dB reaches the target")
    return brentq(excess, lo, hi, xtol=1e-10)


def _denominator(op: PumpOperatingPoint, delta):
    k2 = 0.5 * op.cavity.kappa_tot
    return k2 * k2 + np.square(delta) - op.epsilon**2


def signal_idler_gain(op: PumpOperatingPoint, delta_s=0.0):
    """Small-signal power gains ``(G_s, G_i)`` at signal detuning ``delta_s``.

    Raises
    ------
    AboveThreshold
        If ``D(delta) <= 0`` for any requested detuning.
    """
    delta = np.asarray(delta_s, dtype=float)
    d = _denominator(op, delta)
    if np.any(d <= 0):
        raise AboveThreshold(
            f"epsilon={op.epsilon:.6g} rad/s at or above threshold for the requested detuning"
        )
    ke = op.cavity.kappa_ext
    k2 = 0.5 * op.cavity.kappa_tot
    g_s = np.abs(ke * (k2 + 1j * delta) - d) ** 2 / d**2
    g_i = ke**2 * op.epsilon**2 / d**2
    if g_s.ndim == 0:
        return float(g_s), float(g_i)
    return g_s, g_i


def signal_gain_relative(op: PumpOperatingPoint, delta_s=0.0):
    """Signal gain referenced to the unpumped reflection at the same detuning.

    This is the quantity an experiment reports as "gain": pump on over pump
    off. It is 1 for ``epsilon = 0`` regardless of the internal loss.
    """
    g_s, _ = signal_idler_gain(op, delta_s)
    off = np.abs(linear_s11(op.cavity, op.cavity.omega_bare + np.asarray(delta_s))) ** 2
    return g_s / off


def gain_paper_formula(p, p_c):
    """``1 + (4 P/P_c) / (1 - P/P_c)^2`` for pump powers in linear units."""
    x = np.asarray(p, dtype=float) / p_c
    if np.any(x >= 1):
        raise AboveThreshold("pump power at or above the critical power")
    if np.any(x < 0):
        raise ValueError("pump power must be >= 0")
    g = 1.0 + 4.0 * x / (1.0 - x) ** 2
    return float(g) if g.ndim == 0 else g


def epsilon_for_gain(cavity: CavityMode, gain_db: float, delta_s: float = 0.0) -> float:
    """Parametric rate giving small-signal signal gain ``gain_db`` at ``delta_s``."""
    eps_max = math.sqrt(0.25 * cavity.kappa_tot**2 + delta_s**2)

    def f(eps):
        return to_db(signal_idler_gain(PumpOperatingPoint(cavity, eps), delta_s)[0]) - gain_db

    hi = eps_max * (1 - 1e-12)
    lo = 0.0
    if not f(lo) < 0 < f(hi):
        raise TargetUnreachable(f"{gain_db} dB is not reachable below threshold")
    return brentq(f, lo, hi, xtol=1e-12 * eps_max, rtol=1e-15)


def gain_bandwidth(op: PumpOperatingPoint) -> tuple[float, float]:
    """Peak gain (dB) and full width (Hz) at which ``G_s`` falls to half.

    Each half-power point is bracketed by doubling out from the centre and
    then bisected.
    """
    g0 = signal_idler_gain(op, 0.0)[0]
    if to_db(g0) < 3.0:
        raise ValueError(f"peak gain {to_db(g0):.2f} dB is below 3 dB")
    half = 0.5 * g0

    def edge(sign):
        f = lambda d: signal_idler_gain(op, sign * d)[0] - half
        hi = 0.5 * op.cavity.kappa_tot
        while f(hi) > 0:
            hi *= 2.0
        return brentq(f, 0.0, hi, xtol=1e-9 * op.cavity.kappa_tot, rtol=1e-12)

    width = edge(+1.0) + edge(-1.0)
    return float(to_db(g0)), width / TWO_PI


# ---------------------------------------------------------------------------
# Kerr saturation


@dataclass(frozen=True)
class HarmonicBalance:
    gain: float
    n_signal: float
    n_idler: float
    iterations: int


def _hb_amplitudes(op, s_in, delta, n_s, n_i):
    # each tone sees its own population once and the other's twice
    k2 = 0.5 * op.cavity.kappa_tot
    eps = op.epsilon
    d_s = delta + op.kerr * (n_s + 2.0 * n_i)
    d_i = delta + op.kerr * (n_i + 2.0 * n_s)
    den = (k2 - 1j * d_s) * (k2 + 1j * d_i) - eps * eps
    a = math.sqrt(op.cavity.kappa_ext) * s_in * (k2 + 1j * d_i) / den
    c = 1j * eps * a.conjugate() / (k2 - 1j * d_i)
    return a, c


def solve_harmonic_balance(
    op: PumpOperatingPoint,
    signal_power_dbm: float,
    delta_s: float = 0.0,
    start: tuple[float, float] = (0.0, 0.0),
    damping: float = 0.5,
    rtol: float = 1e-10,
    max_iter: int = 10_000,
) -> HarmonicBalance:
    """Signal/idler steady state with Kerr-shifted detunings.

    Intracavity photon numbers ``(n_s, n_i)`` are iterated to a fixed point
    with damping; ``start`` is the warm start.
    """
    if _denominator(op, delta_s) <= 0:
        raise AboveThreshold("operating point is above threshold at zero amplitude")
    omega_s = op.cavity.omega_bare + delta_s
    s_in = math.sqrt(float(dbm_to_watt(signal_power_dbm)) / (HBAR * omega_s))
    n_s, n_i = start
    for it in range(1, max_iter + 1):
        a, c = _hb_amplitudes(op, s_in, delta_s, n_s, n_i)
        new_s = damping * n_s + (1 - damping) * (a.real**2 + a.imag**2)
        new_i = damping * n_i + (1 - damping) * (c.real**2 + c.imag**2)
        scale = max(new_s + new_i, 1e-300)
        done = abs(new_s - n_s) + abs(new_i - n_i) <= rtol * scale
        n_s, n_i = new_s, new_i
        if done:
            break
    else:
        raise NoConvergence(
            f"harmonic balance did not converge in {max_iter} iterations at "
            f"{signal_power_dbm:g} dBm (probable bistability)",
            last=(n_s, n_i),
        )
    a, c = _hb_amplitudes(op, s_in, delta_s, n_s, n_i)
    if s_in == 0.0:
        gain = signal_idler_gain(op, delta_s)[0]
    else:
        out = math.sqrt(op.cavity.kappa_ext) * a / s_in - 1.0
        gain = out.real**2 + out.imag**2
    return HarmonicBalance(gain, n_s, n_i, it)


def saturated_gain(op: PumpOperatingPoint, signal_power_dbm: float, delta_s: float = 0.0) -> float:
    """Large-signal gain at one signal power (cold start)."""
    if op.kerr == 0.0:
        return signal_idler_gain(op, delta_s)[0]
    return solve_harmonic_balance(op, signal_power_dbm, delta_s).gain


def saturated_gain_sweep(
    op: PumpOperatingPoint,
    signal_powers_dbm,
    delta_s: float = 0.0,
    direction: str = "ascending",
) -> np.ndarray:
    """Gain along a signal-power sweep with warm-started continuation.

    ``direction`` sets the order in which the powers are visited; results
    are returned in the order given. A descending sweep may land on a
    different branch where the response is bistable.
    """
    powers = np.asarray(signal_powers_dbm, dtype=float)
    if direction not in ("ascending", "descending"):
        raise ValueError("direction must be 'ascending' or 'descending'")
    order = np.argsort(powers, kind="stable")
    if direction == "descending":
        order = order[::-1]
    out = np.empty_like(powers)
    if op.kerr == 0.0:
        out[:] = signal_idler_gain(op, delta_s)[0]
        return out
    start = (0.0, 0.0)
    for idx in order:
        hb = solve_harmonic_balance(op, powers[idx], delta_s, start=start)
        out[idx] = hb.gain
        start = (hb.n_signal, hb.n_idler)
    return out


def compression_point(op: PumpOperatingPoint, delta_s: float = 0.0, resolution_db: float = 0.01):
    """Input power (dBm) where the gain is 1 dB below its small-signal value.

    Returns ``None`` when ``kerr == 0`` (the gain never compresses).
    """
    g0 = signal_idler_gain(op, delta_s)[0]
    if to_db(g0) < 3.0:
        raise ValueError("small-signal gain below 3 dB")
    if op.kerr == 0.0:
        return None
    target = to_db(g0) - 1.0

    # rough scale: power at which the Kerr shift equals the gain linewidth
    probe = solve_harmonic_balance(replace(op, kerr=0.0), 0.0, delta_s)
    n_per_watt = (probe.n_signal + probe.n_idler) / 1e-3
    width = math.sqrt(_denominator(op, delta_s))
    p_scale = width / (3.0 * abs(op.kerr) * n_per_watt)
    p_lo = float(to_db(p_scale / 1e-3)) - 40.0

    state = (0.0, 0.0)
    hb_lo = solve_harmonic_balance(op, p_lo, delta_s, start=state)
    if to_db(hb_lo.gain) <= target:
        raise RuntimeError("compression search started above the compression point")
    step = 0.5
    p_hi = p_lo
    for _ in range(400):
        p_hi = p_lo + step
        hb_hi = solve_harmonic_balance(op, p_hi, delta_s, start=(hb_lo.n_signal, hb_lo.n_idler))
        if to_db(hb_hi.gain) <= target:
            break
        p_lo, hb_lo = p_hi, hb_hi
    else:
        raise NoConvergence("gain never compressed by 1 dB in the search window")
    while p_hi - p_lo > resolution_db:
        mid = 0.5 * (p_lo + p_hi)
        hb = solve_harmonic_balance(op, mid, delta_s, start=(hb_lo.n_signal, hb_lo.n_idler))
        if to_db(hb.gain) <= target:
            p_hi = mid
        else:
            p_lo, hb_lo = mid, hb
    return 0.5 * (p_lo + p_hi)


def calibrate_kerr(
    op: PumpOperatingPoint, target_p1db_dbm: float, delta_s: float = 0.0, tol_db: float = 1e-3
) -> float:
    """Kerr rate (rad/s, < 0) placing the 1 dB compression point at the target.

    Bisection on ``log|K|`` within ``[-2 pi 10 MHz, -2 pi 1 uHz]``.
    """

    def p1(logk):
        return compression_point(replace(op, kerr=-math.exp(logk)), delta_s, resolution_db=tol_db / 4)

    lo, hi = math.log(TWO_PI * 1e-6), math.log(-KERR_LIMIT)
    p_lo, p_hi = p1(lo), p1(hi)
    # larger |K| compresses earlier
    if not p_hi - tol_db <= target_p1db_dbm <= p_lo + tol_db:
        raise TargetUnreachable(
            f"target {target_p1db_dbm:g} dBm outside [{p_hi:.2f}, {p_lo:.2f}] dBm"
        )
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        p_mid = p1(mid)
        if abs(p_mid - target_p1db_dbm) <= tol_db:
            return -math.exp(mid)
        if p_mid > target_p1db_dbm:
            lo = mid
        else:
            hi = mid
    return -math.exp(0.5 * (lo + hi))


def threshold_pump_dbm(c: CoupledCircuit, phi_dc: float, delta_s: float = 0.0) -> float:
    """Pump power (dBm, at the flux-line reference plane) where ``D = 0``."""
    ref = 0.0
    phi_ac = pump_flux_amplitude(c.squid, ref)
    eps_ref = 0.5 * abs(flux_slope(c, phi_dc)) * phi_ac
    eps_c = math.sqrt(critical_pump(c.cavity) ** 2 + delta_s**2)
    return ref + 20.0 * math.log10(eps_c / eps_ref)
