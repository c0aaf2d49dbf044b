"""Inverse problems: reflection fitting, critical-power fitting, noise budget.

Reflection traces are modelled as

    S11(f) = A exp(i (phi0 - 2 pi f tau)) * [1 - kappa_ext / (i (w - w0) + kappa/2)]

where the prefactor is the complex background (cable attenuation, phase
offset and electrical delay). :func:`normalize_trace` removes it and
:func:`fit_s11` fits the bracket.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.optimize import least_squares

from jpa3d.constants import HBAR, K_B, TWO_PI
from jpa3d.errors import (
    InsufficientWings,
    NoResonanceFound,
    ThresholdInsideData,
    TooManyRejections,
    UnphysicalSNRI,
)

WING_FRACTION = 0.1  # per side, so 20% of the grid in total
MAX_SPAN_FRACTION = 0.6


@dataclass
class ReflectionTrace:
    freq_hz: np.ndarray
    s11: np.ndarray
    normalized: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.freq_hz = np.asarray(self.freq_hz, dtype=float)
        self.s11 = np.asarray(self.s11, dtype=complex)
        if self.freq_hz.ndim != 1 or self.freq_hz.shape != self.s11.shape:
            raise ValueError("frequency and S11 arrays must be 1-d and the same length")
        if len(self.freq_hz) < 16:
            raise ValueError("a trace needs at least 16 points")
        if np.any(np.diff(self.freq_hz) <= 0):
            raise ValueError("frequency grid must be strictly increasing")
        if not (np.all(np.isfinite(self.freq_hz)) and np.all(np.isfinite(self.s11))):
            raise ValueError("trace contains non-finite values")

    @classmethod
    def from_csv(cls, text: str, normalized: bool = False) -> "ReflectionTrace":
        rows = list(csv.DictReader(io.StringIO(text)))
        if not rows or set(rows[0]) != {"freq_hz", "re_s11", "im_s11"}:
            raise ValueError("expected header freq_hz,re_s11,im_s11")
        f = [float(r["freq_hz"]) for r in rows]
        z = [complex(float(r["re_s11"]), float(r["im_s11"])) for r in rows]
        return cls(f, z, normalized=normalized)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["freq_hz", "re_s11", "im_s11"])
        for f, z in zip(self.freq_hz, self.s11):
            w.writerow([repr(float(f)), repr(float(z.real)), repr(float(z.imag))])
        return buf.getvalue()


def s11_model(freq_hz, f0_hz, kappa_ext, kappa_int):
    """Normalised reflection; rates angular, frequencies in Hz."""
    d = TWO_PI * (np.asarray(freq_hz) - f0_hz)
    return 1.0 - kappa_ext / (1j * d + 0.5 * (kappa_ext + kappa_int))


def _background(freq_hz, amp, phase, delay):
    return amp * np.exp(1j * (phase - TWO_PI * freq_hz * delay))


def _wing_mask(n):
    k = max(2, int(round(WING_FRACTION * n)))
    mask = np.zeros(n, dtype=bool)
    mask[:k] = True
    mask[-k:] = True
    return mask, k


def _wing_background(f, z, k):
    # delay from the phase slope of each wing separately (no unwrapping
    # across the gap), then the constant phase by a circular mean
    slopes = []
    for sl in (slice(0, k), slice(len(f) - k, None)):
        ph = np.unwrap(np.angle(z[sl]))
        slopes.append(np.polyfit(f[sl], ph, 1)[0])
    delay = -float(np.mean(slopes)) / TWO_PI
    fw = np.r_[f[:k], f[-k:]]
    zw = np.r_[z[:k], z[-k:]]
    f_ref = f.mean()

    def resid(p):
        r = zw - _background(fw - f_ref, p[0], p[1], p[2])
        return np.r_[r.real, r.imag]

    rot = zw * np.exp(1j * TWO_PI * (fw - f_ref) * delay)
    p0 = [np.abs(zw).mean(), np.angle(rot.mean()), delay]
    sol = least_squares(resid, p0, x_scale=[p0[0], 1.0, 1.0 / (f[-1] - f[0])], method="lm")
    amp, phase, delay = sol.x
    # express the phase at f = 0 so the background is self-contained
    return amp, phase + TWO_PI * f_ref * delay, delay, sol


def _wrap(phase: float) -> float:
    return float(np.angle(np.exp(1j * phase)))


def normalize_trace(t: ReflectionTrace, noise_sigmas: float = 6.0) -> ReflectionTrace:
    """Divide out the complex background ``A exp(i(phi0 - 2 pi f tau))``.

    The background is first estimated on the outer 20% of the grid (10% per
    side). If a resonance stands out of the wing scatter by more than
    ``noise_sigmas``, background and resonance are then refined together on
    the full trace so the resonance tails do not bias the delay. A trace
    without a resonance is returned flat-normalised with
    ``meta["resonance_found"] = False``.

    Raises
    ------
    InsufficientWings
        If the fitted resonance (full width 3 kappa at a tenth of the power
        dip) covers more than 60% of the grid, or the joint fit fails.
    """
    if t.normalized:
        raise ValueError("trace is already normalised")
    f, z = t.freq_hz, t.s11
    n = len(f)
    mask, k = _wing_mask(n)
    amp, phase, delay, _ = _wing_background(f, z, k)
    zn = z / _background(f, amp, phase, delay)

    dev = np.abs(zn - 1.0)
    wing_dev = dev[mask]
    noise = max(float(np.median(wing_dev)) * 1.4826, 1e-12)
    peak = float(dev.max())
    # the magnitude ignores delay and phase, so it still shows a resonance
    # that the wing background fit has partly absorbed
    mag = np.abs(z)
    ref = float(np.median(mag[mask]))
    mag_noise = max(1.4826 * float(np.median(np.abs(mag[mask] - ref))) / ref, 1e-12)
    dip = 1.0 - (mag / ref) ** 2
    dip_peak = float(dip.max())
    meta = {
        "amplitude": float(amp),
        "phase": _wrap(phase),
        "delay_s": float(delay),
        "resonance_found": False,
    }
    by_dev = peak >= noise_sigmas * noise and peak >= 1e-9
    by_mag = dip_peak >= 2 * noise_sigmas * mag_noise and dip_peak >= 1e-9
    if not (by_dev or by_mag):
        return ReflectionTrace(f, zn, normalized=True, meta=meta)

    # joint refinement: background x resonance on the whole trace
    init = _initial_guess(f, zn)
    f_ref = f.mean()
    scale_f = init[1] / TWO_PI

    def resid(p):
        a, ph, tau, x0, lke, lki = p
        model = _background(f - f_ref, a, ph, tau) * s11_model(
            f, f_ref + x0 * scale_f, math.exp(lke), math.exp(lki)
        )
        r = z - model
        return np.r_[r.real, r.imag]

    p0 = [
        amp,
        phase - TWO_PI * f_ref * delay,
        delay,
        (init[0] - f_ref) / scale_f,
        math.log(init[2]),
        math.log(init[3]),
    ]
    sol = least_squares(resid, p0, x_scale=[amp, 1.0, 1.0 / (f[-1] - f[0]), 1.0, 1.0, 1.0], method="lm")
    a, ph, tau = sol.x[:3]
    # 1 - |S11|^2 stays above a tenth of its peak over a full width of 3 kappa
    kappa = math.exp(sol.x[4]) + math.exp(sol.x[5])
    span = 3.0 * kappa / TWO_PI / (f[-1] - f[0])
    meta["span_fraction"] = float(span)
    if span > MAX_SPAN_FRACTION or not sol.success:
        raise InsufficientWings(f"resonance spans {span:.0%} of the grid")
    phase = ph + TWO_PI * f_ref * tau
    meta.update(amplitude=float(a), phase=_wrap(phase), delay_s=float(tau), resonance_found=True)
    return ReflectionTrace(f, z / _background(f, a, phase, tau), normalized=True, meta=meta)


def _winding_encircles(z) -> bool:
    """True if the resonance circle encloses the origin (over-coupled)."""
    turns = np.sum(np.diff(np.unwrap(np.angle(z)))) / TWO_PI
    return abs(turns) > 0.5


def _initial_guess(f, z):
    """(f0 [Hz], kappa_tot, depth-split rates) from |S11| alone plus winding."""
    mag2 = np.abs(z) ** 2
    i0 = int(np.argmin(mag2))
    f0 = f[i0]
    dip = 1.0 - mag2
    # 1 - |S11|^2 = kappa_e kappa_i / (d^2 + kappa^2/4): FWHM of the dip is kappa
    half = 0.5 * dip[i0]
    left = i0
    while left > 0 and dip[left] > half:
        left -= 1
    right = i0
    while right < len(f) - 1 and dip[right] > half:
        right += 1
    kappa = TWO_PI * max(f[right] - f[left], 2 * (f[1] - f[0]))
    r = min(math.sqrt(mag2[i0]), 0.999)
    big, small = 0.5 * kappa * (1 + r), 0.5 * kappa * (1 - r)
    small = max(small, 1e-3 * kappa)
    if _winding_encircles(z):
        return f0, kappa, big, small
    return f0, kappa, small, big


@dataclass
class S11Fit:
    """Fit result; rates angular, ``*_hz`` fields are rate / 2 pi."""

    omega0: float
    kappa_ext: float
    kappa_int: float
    residual: float
    sigma: dict
    nfev: int
    converged: bool
    flags: list = field(default_factory=list)

    def report(self) -> dict:
        return {
            "f0_hz": self.omega0 / TWO_PI,
            "kappa_ext_hz": self.kappa_ext / TWO_PI,
            "kappa_int_hz": self.kappa_int / TWO_PI,
            "sigma_hz": {k: v / TWO_PI for k, v in self.sigma.items()},
            "residual": self.residual,
            "iterations": self.nfev,
            "converged": self.converged,
            "flags": list(self.flags),
        }


def fit_s11(t: ReflectionTrace, init: tuple | None = None, max_iter: int = 500) -> S11Fit:
    """Least-squares fit of ``(omega0, kappa_ext, kappa_int)`` to a normalised trace.

    Rates are fitted as logarithms so they stay positive. The default start
    takes ``omega0`` at the |S11| minimum, ``kappa`` from the FWHM of
    ``1 - |S11|^2`` and splits it using the on-resonance depth, assigning
    the larger share to ``kappa_ext`` when the trace encircles the origin.
    The mirror start (rates swapped) is also run and the lower residual
    kept, so over/under-coupling ambiguity cannot trap the fit.

    ``init`` is ``(omega0, kappa_ext, kappa_int)`` in rad/s.
    Non-convergence is reported through ``converged=False`` with the best
    iterate, not raised.
    """
    if not t.normalized:
        raise ValueError("fit_s11 expects a normalised trace")
    f, z = t.freq_hz, t.s11
    if float(np.min(np.abs(z))) > 1.0 - 1e-6 and float(np.max(np.abs(z - 1))) < 1e-3:
        raise NoResonanceFound("trace is flat")
    if init is None:
        f0, _, ke, ki = _initial_guess(f, z)
    else:
        f0, ke, ki = init[0] / TWO_PI, init[1], init[2]

    f_ref = f0
    scale = (ke + ki) / TWO_PI

    def resid(p):
        r = z - s11_model(f, f_ref + p[0] * scale, math.exp(p[1]), math.exp(p[2]))
        return np.r_[r.real, r.imag]

    best = None
    for a, b in ((ke, ki), (ki, ke)):
        sol = least_squares(
            resid,
            [0.0, math.log(a), math.log(b)],
            method="lm",
            ftol=1e-12,
            xtol=1e-12,
            gtol=1e-12,
            max_nfev=max_iter * 4,
        )
        if best is None or sol.cost < best.cost:
            best = sol
    x = best.x
    omega0 = TWO_PI * (f_ref + x[0] * scale)
    k_e, k_i = math.exp(x[1]), math.exp(x[2])
    rss = 2.0 * best.cost
    flags = []
    converged = best.status > 0
    if not converged:
        flags.append("max_iterations")
        warnings.warn("fit_s11 did not converge; returning best iterate", RuntimeWarning)
    dof = max(2 * len(f) - 3, 1)
    sigma = {}
    try:
        cov = np.linalg.inv(best.jac.T @ best.jac) * rss / dof
        sd = np.sqrt(np.diag(cov))
        sigma = {"omega0": TWO_PI * scale * sd[0], "kappa_ext": k_e * sd[1], "kappa_int": k_i * sd[2]}
    except np.linalg.LinAlgError:
        flags.append("singular_jacobian")
    if k_e > k_i and not _winding_encircles(z):
        flags.append("winding_disagrees")
    return S11Fit(omega0, k_e, k_i, rss, sigma, int(best.nfev), converged, flags)


# ---------------------------------------------------------------------------
# critical pump power


def _gain_law_db(p_dbm, p_c_dbm):
    x = 10.0 ** ((np.asarray(p_dbm) - p_c_dbm) / 10.0)
    return 10.0 * np.log10(1.0 + 4.0 * x / (1.0 - x) ** 2)


def _golden(fun, a, b, tol):
    invphi = (math.sqrt(5) - 1) / 2
    c, d = b - invphi * (b - a), a + invphi * (b - a)
    fc, fd = fun(c), fun(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = fun(d)
    return 0.5 * (a + b)


@dataclass
class GainFit:
    p_c_dbm: float
    residual: float
    n_points: int
    residuals_db: list

    def report(self) -> dict:
        return asdict(self)


def fit_gain_curve(g, tol_db: float = 1e-4, lower_db: float = 0.1, upper_db: float = 30.0) -> GainFit:
    """Fit the critical power ``P_c`` of ``1 + 4X/(1-X)^2``, ``X = P/P_c``.

    Golden-section search over ``P_c`` in ``[max P + 0.1, max P + 30]`` dB,
    preceded by a 0.05 dB grid scan that picks the bracket. The search runs
    on offsets from ``max P`` so shifting every power by a constant shifts
    ``P_c`` by exactly that constant.

    Raises
    ------
    ThresholdInsideData
        If the best ``P_c`` sits on the lower search edge, i.e. the data
        want a threshold at or below their highest power.
    """
    p = np.asarray(g.power_dbm, dtype=float)
    y = np.asarray(g.gain_db, dtype=float)
    if len(p) < 4:
        raise ValueError("need at least four points")
    top = float(p.max())
    rel = p - top

    def sse(u):
        return float(np.sum((y - _gain_law_db(rel, u)) ** 2))

    grid = np.arange(lower_db, upper_db + 1e-12, 0.05)
    vals = [sse(u) for u in grid]
    i = int(np.argmin(vals))
    a = grid[max(i - 1, 0)]
    b = grid[min(i + 1, len(grid) - 1)]
    u = _golden(sse, a, b, tol_db)
    if u - lower_db < 2 * tol_db:
        raise ThresholdInsideData("fitted critical power collides with the data")
    res = y - _gain_law_db(rel, u)
    return GainFit(top + u, float(np.sum(res**2)), len(p), [float(r) for r in res])


# ---------------------------------------------------------------------------
# noise


def db_to_ratio(x_db):
    return 10.0 ** (np.asarray(x_db, dtype=float) / 10.0)


def ratio_to_db(x):
    return 10.0 * np.log10(x)


def snri(t_jpa_k, t_cryo_k, g_jpa):
    """Signal-to-noise improvement ``1 / (T_jpa/T_cryo + 1/G)`` (ratio)."""
    return 1.0 / (np.asarray(t_jpa_k) / t_cryo_k + 1.0 / np.asarray(g_jpa))


def invert_snri(snri_ratio, t_cryo_k, g_jpa):
    """Amplifier noise temperature from a measured SNR improvement.

    Raises :class:`UnphysicalSNRI` if the improvement exceeds the gain.
    """
    x = 1.0 / np.asarray(snri_ratio, dtype=float) - 1.0 / np.asarray(g_jpa, dtype=float)
    if np.any(x < 0):
        raise UnphysicalSNRI("SNR improvement exceeds the gain (noiseless bound)")
    t = np.asarray(t_cryo_k) * x
    return float(t) if np.ndim(t) == 0 else t


def temperature_to_quanta(t_k, omega):
    """Noise temperature in quanta, ``k_B T / (hbar omega)``.

    The linear (classical-equivalent) form is used, under which the vacuum
    temperature ``hbar omega / 2 k_B`` is exactly half a quantum.
    """
    return K_B * np.asarray(t_k, dtype=float) / (HBAR * omega)


def vacuum_temperature(omega):
    return HBAR * omega / (2 * K_B)


@dataclass
class Measured:
    value: float
    sigma: float = 0.0

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")


@dataclass
class NoiseBudget:
    """Inputs and derived quantities of the SNR-improvement noise analysis.

    ``snri_db`` may be given directly or left ``None``, in which case it is
    ``g_jpa_db - noise_rise_db`` (gain of the signal over gain of the noise).
    """

    g_jpa_db: Measured
    t_cryo_k: Measured
    omega_signal: float
    snri_db: Measured | None = None
    noise_rise_db: Measured | None = None
    t_jpa_k: Measured | None = None
    quanta_added: Measured | None = None
    nominal: dict = field(default_factory=dict)
    draws: int = 0
    rejected: int = 0
    seed: int | None = None

    def __post_init__(self):
        if self.snri_db is None and self.noise_rise_db is None:
            raise ValueError("need snri_db or noise_rise_db")
        if self.t_cryo_k.value <= 0:
            raise ValueError("t_cryo_k must be positive")
        if self.g_jpa_db.value <= 0:
            raise ValueError("g_jpa_db must be positive")

    def report(self) -> dict:
        def m(x):
            return None if x is None else {"value": x.value, "sigma": x.sigma}

        return {
            "g_jpa_db": m(self.g_jpa_db),
            "noise_rise_db": m(self.noise_rise_db),
            "snri_db": m(self.snri_db),
            "t_cryo_k": m(self.t_cryo_k),
            "t_jpa_k": m(self.t_jpa_k),
            "quanta_added": m(self.quanta_added),
            "vacuum_k": vacuum_temperature(self.omega_signal),
            "f_signal_hz": self.omega_signal / TWO_PI,
            "nominal": self.nominal,
            "draws": self.draws,
            "rejected": self.rejected,
            "seed": self.seed,
        }


def _derive(g_db, t_cryo, snri_db, noise_rise_db):
    s_db = snri_db if snri_db is not None else g_db - noise_rise_db
    x = 1.0 / db_to_ratio(s_db) - 1.0 / db_to_ratio(g_db)
    return s_db, t_cryo * x


def propagate_budget(b: NoiseBudget, seed: int = 0, draws: int = 100_000, max_reject: float = 0.01) -> NoiseBudget:
    """Monte Carlo propagation of Gaussian input uncertainties.

    Each input gets its own child stream of ``SeedSequence(seed)``, so the
    result depends only on the seed, not on evaluation order. dB quantities
    are Gaussian in dB. Draws with ``T_cryo <= 0`` or an improvement above
    the gain are counted as rejected.

    Raises
    ------
    TooManyRejections
        If more than ``max_reject`` of the draws are unphysical.
    UnphysicalSNRI
        If the nominal inputs themselves are unphysical.
    """
    s_nom, t_nom = _derive(
        b.g_jpa_db.value,
        b.t_cryo_k.value,
        None if b.snri_db is None else b.snri_db.value,
        None if b.noise_rise_db is None else b.noise_rise_db.value,
    )
    if t_nom < 0:
        raise UnphysicalSNRI("nominal SNR improvement exceeds the gain")
    q_nom = float(temperature_to_quanta(t_nom, b.omega_signal))
    nominal = {"snri_db": float(s_nom), "t_jpa_k": float(t_nom), "quanta_added": q_nom}

    streams = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(4)]

    def sample(meas, rng):
        if meas is None:
            return None
        return meas.value + meas.sigma * rng.standard_normal(draws)

    g = sample(b.g_jpa_db, streams[0])
    tc = sample(b.t_cryo_k, streams[1])
    s = sample(b.snri_db, streams[2])
    nr = sample(b.noise_rise_db, streams[3])
    s_db, t = _derive(g, tc, s, nr)
    ok = (tc > 0) & (t >= 0)
    rejected = int(draws - ok.sum())
    if rejected > max_reject * draws:
        raise TooManyRejections(f"{rejected} of {draws} draws unphysical ({rejected / draws:.1%})")
    t_ok = t[ok]
    q = temperature_to_quanta(t_ok, b.omega_signal)

    def ms(x):
        return Measured(float(np.mean(x)), float(np.std(x, ddof=1)) if len(x) > 1 else 0.0)

    return replace(
        b,
        snri_db=b.snri_db if b.snri_db is not None else ms(s_db[ok]),
        t_jpa_k=ms(t_ok),
        quanta_added=ms(q),
        nominal=nominal,
        draws=draws,
        rejected=rejected,
        seed=seed,
    )
