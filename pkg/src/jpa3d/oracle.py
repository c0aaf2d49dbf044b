"""Time-domain integrator for the pumped cavity amplitude.

Used as an independent check of the frequency-domain amplifier results, so
it only shares physical constants with the rest of the package. The
classical amplitude ``alpha`` is integrated in the frame rotating at half
the pump frequency:

    d alpha/dt = (i (Delta_a + K |alpha|^2) - kappa/2) alpha
                 + i eps conj(alpha) + sqrt(kappa_ext) s_in exp(-i nu t)

with ``Delta_a = delta_s + Delta/2`` (half-pump frequency minus cavity
frequency) and ``nu = -Delta/2`` (signal offset in this frame). The idler
appears at ``-nu``; signal and idler beat with period ``2 pi / |Delta|``.
The output field is ``sqrt(kappa_ext) alpha - s_in exp(-i nu t)``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from jpa3d.errors import NotSteady, StepTooLarge

STEP_FRACTION = 1.0 / 50.0


@njit(cache=True)
def _rk4(alpha0, n_steps, dt, det, kerr, half_kappa, eps, drive, nu):
    out = np.empty(n_steps + 1, dtype=np.complex128)
    a = alpha0
    out[0] = a
    half_rot = np.exp(-0.5j * nu * dt)
    for j in range(n_steps):
        # exact phase every step keeps the drive free of accumulated rounding
        d0 = drive * np.exp(-1j * nu * (j * dt))
        d1 = d0 * half_rot
        d2 = d1 * half_rot
        k1 = (1j * (det + kerr * (a.real * a.real + a.imag * a.imag)) - half_kappa) * a + 1j * eps * np.conj(a) + d0
        b = a + 0.5 * dt * k1
        k2 = (1j * (det + kerr * (b.real * b.real + b.imag * b.imag)) - half_kappa) * b + 1j * eps * np.conj(b) + d1
        b = a + 0.5 * dt * k2
        k3 = (1j * (det + kerr * (b.real * b.real + b.imag * b.imag)) - half_kappa) * b + 1j * eps * np.conj(b) + d1
        b = a + dt * k3
        k4 = (1j * (det + kerr * (b.real * b.real + b.imag * b.imag)) - half_kappa) * b + 1j * eps * np.conj(b) + d2
        a = a + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out[j + 1] = a
    return out


@dataclass(frozen=True)
class DriveSchedule:
    """Inputs of one time-domain run.

    Attributes
    ----------
    s_in : complex
        Signal amplitude [sqrt(photons/s)]; its phase is arbitrary.
    delta_s : float
        Signal detuning from the cavity [rad/s].
    epsilon : float
        Parametric rate [rad/s].
    delta_pump : float
        Pump detuning ``omega_p - 2 omega_s`` [rad/s].
    kerr : float
        Self-Kerr [rad/s].
    kappa_int, kappa_ext : float
        Cavity rates [rad/s].
    t_end, dt : float
        Horizon and fixed step [s].
    alpha0 : complex
        Initial intracavity amplitude.
    """

    s_in: complex
    delta_s: float
    epsilon: float
    delta_pump: float
    kerr: float
    kappa_int: float
    kappa_ext: float
    t_end: float
    dt: float
    alpha0: complex = 0j

    @property
    def kappa_tot(self) -> float:
        return self.kappa_int + self.kappa_ext

    @property
    def frame_detuning(self) -> float:
        return self.delta_s + 0.5 * self.delta_pump

    @property
    def signal_offset(self) -> float:
        return -0.5 * self.delta_pump

    def max_step(self) -> float:
        scales = [2 * math.pi / self.kappa_tot]
        for w in (self.frame_detuning, self.signal_offset, self.epsilon):
            if w:
                scales.append(2 * math.pi / abs(w))
        return STEP_FRACTION * min(scales)

    @classmethod
    def for_gain(
        cls,
        s_in: complex,
        delta_s: float,
        epsilon: float,
        kappa_int: float,
        kappa_ext: float,
        kerr: float = 0.0,
        accuracy: float = 1e-3,
        beats: int = 10,
    ) -> "DriveSchedule":
        """Schedule suited to :func:`measure_gain`.

        With a pump detuning ``Delta`` the idler sees the cavity at
        ``delta_s + Delta`` instead of ``delta_s``; the gain then differs
        from its ``Delta -> 0`` value by about ``2 |delta_s| Delta / D`` and
        ``(kappa Delta / 2D)^2``. ``Delta`` is chosen so both stay below
        ``accuracy``. The horizon spans ``beats`` signal/idler beat periods,
        the last 20% of which form the measurement window.
        """
        kappa = kappa_int + kappa_ext
        d = 0.25 * kappa * kappa + delta_s * delta_s - epsilon * epsilon
        if d <= 0:
            raise ValueError("operating point is not below threshold")
        if epsilon == 0.0:
            delta_pump = 0.0
            period = 20.0 / kappa
        else:
            delta_pump = math.sqrt(accuracy) * 2 * d / kappa
            if delta_s:
                delta_pump = min(delta_pump, accuracy * d / (2 * abs(delta_s)))
            period = 2 * math.pi / delta_pump
        t_end = beats * period
        fastest = max(kappa, abs(delta_s) + 0.5 * delta_pump, epsilon)
        per = math.ceil(period / (STEP_FRACTION * 2 * math.pi / fastest))
        return cls(s_in, delta_s, epsilon, delta_pump, kerr, kappa_int, kappa_ext, t_end, period / per)


def slowest_rate(kappa: float, delta: float, epsilon: float) -> float:
    """Smallest decay rate of the linearised (alpha, alpha*) dynamics."""
    disc = epsilon * epsilon - delta * delta
    return 0.5 * kappa - (math.sqrt(disc) if disc > 0 else 0.0)


def integrate_cavity(d: DriveSchedule) -> tuple[np.ndarray, np.ndarray]:
    """Fixed-step RK4 trajectory ``(t, alpha)`` on ``[0, t_end]``.

    Raises
    ------
    StepTooLarge
        If ``dt`` exceeds 1/50 of the fastest period in the problem.
    """
    limit = d.max_step()
    if d.dt > limit * (1 + 1e-12):
        raise StepTooLarge(f"dt={d.dt:.3g} s exceeds the bound {limit:.3g} s")
    n = int(round(d.t_end / d.dt))
    alpha = _rk4(
        complex(d.alpha0),
        n,
        float(d.dt),
        float(d.frame_detuning),
        float(d.kerr),
        0.5 * d.kappa_tot,
        float(d.epsilon),
        complex(math.sqrt(d.kappa_ext) * d.s_in),
        float(d.signal_offset),
    )
    t = np.arange(n + 1) * d.dt
    return t, alpha


def measure_gain(d: DriveSchedule, drift_tol: float = 1e-3) -> float:
    """Signal power gain from a time-domain run.

    The output is demodulated at the signal frequency over the last 20% of
    the horizon, trimmed to a whole number of signal/idler beat periods so
    the idler and intermodulation products cancel exactly. At least
    ``10/kappa`` of transient must precede the window.

    Raises
    ------
    NotSteady
        If the demodulated amplitude differs by more than ``drift_tol``
        between the two halves of the window.
    """
    if d.s_in == 0:
        raise ValueError("measure_gain needs a nonzero signal")
    t, alpha = integrate_cavity(d)
    n = len(t) - 1
    start = int(math.ceil(0.8 * n))
    if t[start] < 10.0 / d.kappa_tot:
        raise ValueError("horizon too short: less than 10/kappa precedes the window")
    avail = n - start
    if d.epsilon and d.delta_pump:
        per = 2 * math.pi / abs(d.delta_pump) / d.dt
        per_i = int(round(per))
        if abs(per - per_i) > 1e-6 * per:
            raise ValueError("dt must divide the signal/idler beat period")
        k = avail // per_i
        if k < 2:
            raise ValueError("measurement window shorter than two beat periods")
        half = (k // 2) * per_i
    elif d.epsilon:
        raise ValueError("a pumped run needs delta_pump != 0 to separate signal and idler")
    else:
        half = avail // 2
    nu = d.signal_offset
    tw = t[start : start + 2 * half]
    ref = np.exp(-1j * nu * tw)
    s_out = math.sqrt(d.kappa_ext) * alpha[start : start + 2 * half] - d.s_in * ref
    demod = s_out * np.conj(ref)
    first = demod[:half].mean()
    second = demod[half:].mean()
    if abs(abs(second) - abs(first)) > drift_tol * abs(second):
        raise NotSteady(
            f"demodulated amplitude drifted by {abs(abs(second) / abs(first) - 1):.2e}"
        )
    amp = 0.5 * (first + second)
    return float(abs(amp) ** 2 / abs(d.s_in) ** 2)


def trajectory_csv(t: np.ndarray, alpha: np.ndarray) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t_s", "re_alpha", "im_alpha"])
    for ti, a in zip(t, alpha):
        w.writerow([repr(float(ti)), repr(float(a.real)), repr(float(a.imag))])
    return buf.getvalue()
