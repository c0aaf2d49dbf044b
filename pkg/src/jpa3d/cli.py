"""Command line front end.

Every subcommand reads one device config (the bundled reference device if
``--config`` is omitted) and writes CSV or JSON. Tabular commands print
CSV on stdout or to ``--output``; their JSON report (resolved calibration
plus command results) goes to ``--report``, or next to ``--output`` with a
``.json`` suffix.

Exit codes: 0 success, 2 config or argument error, 3 request outside the
model's physical domain, 4 solver non-convergence.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from jpa3d.amplifier import (
    GainCurve,
    PumpOperatingPoint,
    compression_point,
    critical_pump,
    dbm_to_watt,
    dressed_cavity,
    epsilon_for_gain,
    linear_s11,
    operating_point,
    saturated_gain_sweep,
    signal_gain_relative,
    signal_idler_gain,
    threshold_pump_dbm,
    to_db,
)
from jpa3d.config import DeviceConfig
from jpa3d.constants import HBAR, TWO_PI
from jpa3d.errors import AboveThreshold, ConfigError, JPAError, ThresholdInsideData
from jpa3d.estimation import (
    Measured,
    NoiseBudget,
    ReflectionTrace,
    fit_gain_curve,
    fit_s11,
    normalize_trace,
    propagate_budget,
)
from jpa3d.oracle import DriveSchedule, integrate_cavity, trajectory_csv
from jpa3d.spectrum import flux_map, format_fluxmap_csv


# ---------------------------------------------------------------------------
# output helpers


def _clean(x):
    """Make ``x`` JSON-safe: numpy scalars to Python, NaN/inf to None."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_clean(v) for v in x.tolist()]
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else None
    return x


def dump_json(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _write(path, text: str) -> None:
    if path is None or str(path) == "-":
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _emit(args, table: str | None, report: dict) -> None:
    """Write the CSV table and its JSON report according to the flags."""
    if table is None:
        _write(args.output, dump_json(report))
        return
    _write(args.output, table)
    target = args.report
    if target is None and args.output not in (None, "-"):
        target = str(Path(args.output).with_suffix(".json"))
    if target is not None:
        _write(target, dump_json(report))


def _grid(start: float, stop: float, step: float) -> np.ndarray:
    if not step > 0:
        raise ConfigError("range step must be positive")
    if stop < start:
        raise ConfigError("range stop must not be below start")
    n = int(math.floor((stop - start) / step + 1e-9)) + 1
    # rounding keeps grid values such as -33.1 free of accumulated float noise
    return np.round(start + step * np.arange(n), 9)


@contextmanager
def _pool(jobs: int):
    if jobs < 1:
        raise ConfigError("--jobs must be >= 1")
    if jobs == 1:
        yield map
        return
    with ThreadPoolExecutor(max_workers=jobs) as ex:
        yield ex.map


def _config(args) -> DeviceConfig:
    cfg = DeviceConfig.from_path(args.config)
    over = {}
    for name in ("phi_dc", "attenuation_db", "kerr_hz", "g_hz"):
        if getattr(args, name, None) is not None:
            over[name] = getattr(args, name)
    return cfg.with_overrides(**over)


# ---------------------------------------------------------------------------
# subcommands


def cmd_fluxmap(args) -> int:
    cfg = _config(args)
    if args.points < 1:
        raise ConfigError("--points must be >= 1")
    phis = np.linspace(args.phi_min, args.phi_max, args.points)
    c = cfg.circuit
    with _pool(args.jobs) as pmap:
        rows = flux_map(c, phis, map_fn=pmap)
    masked = sum(r[4] for r in rows)
    if masked == len(rows):
        warnings.warn("every grid point lies in the cutoff band; all rows are masked", UserWarning)
    valid = [r[1] for r in rows if not r[4]]
    report = {
        "command": "fluxmap",
        "resolved": cfg.resolved(),
        "points": len(rows),
        "masked": masked,
        "f_max_hz": max(valid) if valid else None,
        "f_min_hz": min(valid) if valid else None,
        "excursion_hz": (max(valid) - min(valid)) if valid else None,
    }
    _emit(args, format_fluxmap_csv(rows), report)
    return 0


def cmd_gain_sweep(args) -> int:
    cfg = _config(args)
    c = cfg.circuit
    phi = cfg.phi_dc
    delta = TWO_PI * args.delta
    powers = _grid(*args.pump_dbm_range)
    relative = args.reference == "pump-off"

    def point(p):
        op = operating_point(c, phi, float(p), cfg.delta_pump, 0.0)
        try:
            g = signal_gain_relative(op, delta) if relative else signal_idler_gain(op, delta)[0]
        except AboveThreshold:
            return None
        return float(to_db(g))

    with _pool(args.jobs) as pmap:
        gains = list(pmap(point, powers))
    first_above = None
    keep = len(gains)
    for i, g in enumerate(gains):
        if g is None:
            first_above = float(powers[i])
            keep = i
            break
    curve_p, curve_g = powers[:keep], np.array(gains[:keep], dtype=float)
    cav = dressed_cavity(c, phi)
    eps_c = math.sqrt(critical_pump(cav) ** 2 + delta**2)
    fitted = None
    fit_note = None
    # the fitted law is lossless; close to threshold a lossy device outgrows
    # it, so only points up to the cap enter the fit
    sel = curve_g <= args.fit_max_gain_db
    if sel.sum() >= 4:
        try:
            gf = fit_gain_curve(GainCurve(curve_p[sel], curve_g[sel]))
            fitted = gf.p_c_dbm
        except ThresholdInsideData as exc:
            fit_note = str(exc)
    else:
        fit_note = "fewer than four points below threshold"
    threshold = {
        "epsilon_c_hz": eps_c / TWO_PI,
        "p_c_dbm_at_reference": threshold_pump_dbm(c, phi, delta),
        "reference_plane": (
            f"flux-line input; {cfg.attenuation_db:.6g} dB of line attenuation "
            "sits between it and the SQUID"
        ),
        "p_c_dbm_fitted": fitted,
        "fit_max_gain_db": args.fit_max_gain_db,
        "fit_note": fit_note,
        "first_above_threshold_dbm": first_above,
        "gain_reference": args.reference,
    }
    report = {
        "command": "gain-sweep",
        "resolved": cfg.resolved(),
        "signal_detuning_hz": args.delta,
        "threshold": threshold,
    }
    curve = GainCurve(curve_p, curve_g, "pump") if keep else None
    table = curve.to_csv() if curve is not None else "pump_power_dbm,gain_db\n"
    _emit(args, table, report)
    return 0


def cmd_compression(args) -> int:
    cfg = _config(args)
    c = cfg.circuit
    phi = cfg.phi_dc
    delta = TWO_PI * args.delta
    cav = dressed_cavity(c, phi)
    eps = epsilon_for_gain(cav, args.gain_db, delta)
    op = PumpOperatingPoint(cav, eps, cfg.delta_pump, cfg.kerr)
    powers = _grid(*args.signal_dbm_range)
    gains = saturated_gain_sweep(op, powers, delta, direction=args.sweep_direction)
    p1 = compression_point(op, delta)
    report = {
        "command": "compression",
        "resolved": cfg.resolved(need_kerr=True),
        "set_point_gain_db": args.gain_db,
        "epsilon_hz": eps / TWO_PI,
        "signal_detuning_hz": args.delta,
        "sweep_direction": args.sweep_direction,
        "p1db_dbm": p1,
    }
    _emit(args, GainCurve(powers, to_db(gains), "signal").to_csv(), report)
    return 0


def _measured(value, sigma):
    return None if value is None else Measured(value, sigma)


def cmd_noise(args) -> int:
    if args.snri_db is None and args.noise_rise_db is None:
        raise ConfigError("give --snri-db or --noise-rise-db")
    budget = NoiseBudget(
        g_jpa_db=Measured(args.g_db, args.sigma_g_db),
        t_cryo_k=Measured(args.t_cryo_k, args.sigma_t_cryo_k),
        omega_signal=TWO_PI * args.freq_hz,
        snri_db=_measured(args.snri_db, args.sigma_snri_db),
        noise_rise_db=_measured(args.noise_rise_db, args.sigma_noise_rise_db),
    )
    out = propagate_budget(budget, seed=args.seed, draws=args.draws, max_reject=args.max_reject)
    rep = out.report()
    rep["command"] = "noise"
    _emit(args, None, rep)
    return 0


def cmd_fit(args) -> int:
    with open(args.input, encoding="utf-8") as fh:
        text = fh.read()
    if args.kind == "s11":
        trace = ReflectionTrace.from_csv(text, normalized=args.normalized)
        if not trace.normalized:
            trace = normalize_trace(trace)
        res = fit_s11(trace)
        rep = {"command": "fit s11", "fit": res.report(), "normalization": trace.meta}
    else:
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or len(rows[0]) != 2 or not rows[0][1] == "gain_db":
            raise ConfigError("expected header <kind>_power_dbm,gain_db")
        p = [float(r[0]) for r in rows[1:]]
        g = [float(r[1]) for r in rows[1:]]
        res = fit_gain_curve(GainCurve(p, g))
        rep = {"command": "fit gain", "fit": res.report()}
    _emit(args, None, rep)
    return 0


def cmd_synth_trace(args) -> int:
    cfg = _config(args)
    cav = dressed_cavity(cfg.circuit, cfg.phi_dc)
    f0 = cav.omega_bare / TWO_PI
    f = f0 + np.linspace(-0.5 * args.span_hz, 0.5 * args.span_hz, args.points)
    z = linear_s11(cav, TWO_PI * f)
    z = z * args.amplitude * np.exp(1j * (args.phase - TWO_PI * (f - f0) * args.delay_s))
    rng = np.random.default_rng(args.seed)
    z = z + args.noise * (rng.standard_normal(len(f)) + 1j * rng.standard_normal(len(f)))
    _write(args.output, ReflectionTrace(f, z).to_csv())
    return 0


def cmd_trajectory(args) -> int:
    cfg = _config(args)
    cav = dressed_cavity(cfg.circuit, cfg.phi_dc)
    eps = args.eps_ratio * critical_pump(cav)
    delta = TWO_PI * args.delta
    kerr = TWO_PI * args.kerr_hz if args.kerr_hz is not None else 0.0
    s_in = math.sqrt(float(dbm_to_watt(args.signal_dbm)) / (HBAR * (cav.omega_bare + delta)))
    if 0.25 * cav.kappa_tot**2 + delta**2 - eps**2 > 0 and args.t_end_s is None:
        d = DriveSchedule.for_gain(s_in, delta, eps, cav.kappa_int, cav.kappa_ext, kerr)
    else:
        base = DriveSchedule(
            s_in, delta, eps, cfg.delta_pump, kerr, cav.kappa_int, cav.kappa_ext, 1.0, 1.0, args.alpha0
        )
        t_end = args.t_end_s if args.t_end_s is not None else 40.0 / cav.kappa_tot
        dt = base.max_step()
        n = math.ceil(t_end / dt)
        d = DriveSchedule(
            s_in, delta, eps, cfg.delta_pump, kerr, cav.kappa_int, cav.kappa_ext, n * dt, dt, args.alpha0
        )
    t, alpha = integrate_cavity(d)
    step = max(1, args.every)
    _write(args.output, trajectory_csv(t[::step], alpha[::step]))
    return 0


# ---------------------------------------------------------------------------
# parser


def _common(p, config=True):
    if config:
        p.add_argument("--config", help="device config JSON (default: bundled reference device)")
    p.add_argument("-o", "--output", help="output file (default stdout)")
    p.add_argument("--report", help="JSON report path for tabular commands")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="jpa3d", description=__doc__.split("\n\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fluxmap", help="dressed cavity frequency, slope and Kerr against dc flux")
    _common(p)
    p.add_argument("--phi-min", type=float, default=-1.0)
    p.add_argument("--phi-max", type=float, default=1.0)
    p.add_argument("--points", type=int, default=401)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--g-hz", type=float, help="override the calibrated coupling")
    p.set_defaults(func=cmd_fluxmap)

    p = sub.add_parser("gain-sweep", help="small-signal gain against pump power")
    _common(p)
    p.add_argument("--phi-dc", type=float)
    p.add_argument(
        "--pump-dbm-range", type=float, nargs=3, metavar=("START", "STOP", "STEP"), default=(-50.0, -32.0, 0.1)
    )
    p.add_argument("--delta", type=float, default=0.0, help="signal detuning from the cavity [Hz]")
    p.add_argument("--reference", choices=("pump-off", "absolute"), default="pump-off")
    p.add_argument("--attenuation-db", type=float)
    p.add_argument("--fit-max-gain-db", type=float, default=30.0, help="largest gain used in the P_c fit")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_gain_sweep)

    p = sub.add_parser("compression", help="gain against signal power at a fixed set-point gain")
    _common(p)
    p.add_argument("--phi-dc", type=float)
    p.add_argument("--gain-db", type=float, default=20.0)
    p.add_argument(
        "--signal-dbm-range", type=float, nargs=3, metavar=("START", "STOP", "STEP"), default=(-140.0, -100.0, 0.5)
    )
    p.add_argument("--delta", type=float, default=0.0, help="signal detuning from the cavity [Hz]")
    p.add_argument("--sweep-direction", choices=("ascending", "descending"), default="ascending")
    p.add_argument("--kerr-hz", type=float, help="override the cavity Kerr [Hz, <= 0]")
    p.set_defaults(func=cmd_compression)

    p = sub.add_parser("noise", help="amplifier noise temperature from SNR improvement")
    _common(p, config=False)
    p.add_argument("--snri-db", type=float)
    p.add_argument("--noise-rise-db", type=float)
    p.add_argument("--g-db", type=float, required=True)
    p.add_argument("--t-cryo-k", type=float, required=True)
    p.add_argument("--sigma-snri-db", type=float, default=0.0)
    p.add_argument("--sigma-noise-rise-db", type=float, default=0.0)
    p.add_argument("--sigma-g-db", type=float, default=0.0)
    p.add_argument("--sigma-t-cryo-k", type=float, default=0.0)
    p.add_argument("--freq-hz", type=float, default=8.3e9)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--draws", type=int, default=100_000)
    p.add_argument("--max-reject", type=float, default=0.01)
    p.set_defaults(func=cmd_noise)

    p = sub.add_parser("fit", help="fit a reflection trace or a gain curve")
    _common(p, config=False)
    p.add_argument("kind", choices=("s11", "gain"))
    p.add_argument("input")
    p.add_argument("--normalized", action="store_true", help="trace already has the background removed")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("synth-trace", help="synthetic reflection trace of the configured cavity")
    _common(p)
    p.add_argument("--phi-dc", type=float)
    p.add_argument("--points", type=int, default=801)
    p.add_argument("--span-hz", type=float, default=20e6)
    p.add_argument("--noise", type=float, default=0.0, help="Gaussian sigma per quadrature")
    p.add_argument("--amplitude", type=float, default=1.0)
    p.add_argument("--phase", type=float, default=0.0)
    p.add_argument("--delay-s", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth_trace)

    p = sub.add_parser("trajectory", help="time-domain intracavity amplitude")
    _common(p)
    p.add_argument("--phi-dc", type=float)
    p.add_argument("--eps-ratio", type=float, default=0.9, help="epsilon over kappa/2")
    p.add_argument("--signal-dbm", type=float, default=-130.0)
    p.add_argument("--delta", type=float, default=0.0, help="signal detuning [Hz]")
    p.add_argument("--kerr-hz", type=float)
    p.add_argument("--t-end-s", type=float, help="fixed horizon (default: gain-measurement schedule)")
    p.add_argument("--alpha0", type=complex, default=0j)
    p.add_argument("--every", type=int, default=1, help="keep every n-th sample")
    p.set_defaults(func=cmd_trajectory)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    try:
        return args.func(args)
    except JPAError as exc:
        print(f"jpa3d: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except (OSError, ValueError) as exc:
        print(f"jpa3d: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
