"""Command-line entry point: ``sngrav <command> --config run.yaml --out dir``.

Commands: steady, spectrum, simulate, correlate, squeeze, sweep.  Each writes
its CSV (and for sweeps a JSON summary) plus ``manifest.yaml`` into the
output directory.  Flags override environment variables (SNGRAV_CONFIG,
SNGRAV_OUT, SNGRAV_SEED, SNGRAV_THREADS, SNGRAV_INTERNAL_UNITS), which
override the configuration file.
"""

from __future__ import annotations

import argparse
import datetime
import logging
import os
import sys
import time

import numpy as np

from . import __version__
from .estimator import welch_cross_spectrum
from .model import Configuration, ParameterError, Prescription, Theory
from .riccati import ConvergenceError, care_steady, steady_covariance_single
from .serialize import (SPECTRA_COLUMNS, SWEEP_COLUMNS, TRAJECTORY_COLUMNS, ConfigError,
                        atomic_write, build_params, csv_text, derived_quantities, dump_json,
                        dump_yaml, frequency_grid, load_config, resolve_config, spectrum_rows,
                        trajectory_rows)
from .spectra import (SpectrumCurve, correlation_level, mutual_spectra_analytic,
                      self_spectrum_analytic)
from .squeezing import optimal_squeezing, quadrature_matrix, quadrature_spectrum
from .sweep import SweepError, run_sweep
from .systems import build_system
from .trajectory import SimulationError, simulate

log = logging.getLogger("sngrav")
COMMANDS = ("steady", "spectrum", "simulate", "correlate", "squeeze", "sweep")
ENV_PREFIX = "SNGRAV_"


def _variant(p, name):
    """``name`` in {pre, post, causal, qg} applied to ``p``."""
    if name == "qg":
        return p.with_theory(Theory.QG)
    return p.with_theory(Theory.SN, Prescription(name))


def _evaluation(cfg, p):
    """Parameters and frequency grid in the output units."""
    w = frequency_grid(cfg, p)
    if cfg["output"]["internal_units"] and not p.internal:
        q = p.to_internal()
        return q, w * q.scales.time
    return p, w


def cmd_steady(cfg, p):
    """Steady conditional covariance; SI unless internal units are requested."""
    q = p.to_internal()
    si = not (p.internal or cfg["output"]["internal_units"])
    L, P = (q.scales.length, q.scales.momentum) if si else (1.0, 1.0)
    scale = np.array([[L * L, L * P], [L * P, P * P]])
    rows = []
    if p.configuration is Configuration.LINEAR:
        V = care_steady(build_system(q))
        S = np.kron(np.ones((2, 2)), scale)
        names = ("x_a", "p_a", "x_b", "p_b")
        for i in range(4):
            for j in range(i, 4):
                rows.append(("ab", f"V_{names[i]}{names[j]}", V[i, j] * S[i, j]))
    else:
        modes = "+-" if p.configuration is Configuration.FOLDED else "+"
        for m in modes:
            V = steady_covariance_single(q, mode=m, method=cfg["steady"]["method"]).as_matrix()
            label = {"+": "c", "-": "d"}[m] if len(modes) == 2 else "a"
            for name, (i, j) in (("V_xx", (0, 0)), ("V_xp", (0, 1)), ("V_pp", (1, 1))):
                rows.append((label, name, V[i, j] * scale[i, j]))
    return {"covariance.csv": csv_text(("block", "entry", "value"), rows)}


def cmd_spectrum(cfg, p):
    opts = cfg["spectrum"]
    q, w = _evaluation(cfg, p)
    curves = []
    if p.configuration is Configuration.SELF:
        for name in opts["prescriptions"] or ["pre", "post", "causal", "qg"]:
            curves.append(self_spectrum_analytic(_variant(q, name), omega=w, form=opts["form"]))
    elif p.configuration is Configuration.LINEAR:
        for name in opts["prescriptions"] or ["causal", "qg"]:
            for pair in opts["pairs"]:
                s = mutual_spectra_analytic(_variant(q, name), pair, w, form=opts["form"])
                curves += [s["S_AB"], s["S_AA"], s["S_BB"]]
    else:
        for name in opts["prescriptions"] or ["causal", "qg"]:
            v = _variant(q, name)
            for m in "+-":
                S = quadrature_spectrum(quadrature_matrix(v, w, m), v.meas.theta_a)
                label = "c" if m == "+" else "d"
                pres = "" if v.theory is Theory.QG else v.prescription.value
                curves.append(SpectrumCurve(w, S, channel=label + label, theory=v.theory.value,
                                            prescription=pres))
    rows = [r for c in curves for r in spectrum_rows(c)]
    return {"spectra.csv": csv_text(SPECTRA_COLUMNS, rows)}


def cmd_correlate(cfg, p):
    if not p.mutual:
        raise ConfigError("system.configuration: correlate needs 'linear' or 'folded'")
    opts = cfg["correlate"]
    q, w = _evaluation(cfg, p)
    rows = []
    for th in opts["theories"]:
        v = _variant(q, "qg" if th == "qg" else "causal")
        for pair in opts["pairs"]:
            s = mutual_spectra_analytic(v, pair, w, form=opts["form"])
            rows += spectrum_rows(correlation_level(s["S_AB"], s["S_AA"], s["S_BB"]))
    return {"correlation.csv": csv_text(SPECTRA_COLUMNS, rows)}


def cmd_squeeze(cfg, p):
    if p.configuration is Configuration.LINEAR:
        raise ConfigError("system.configuration: squeeze needs 'self' or 'folded'")
    q, w = _evaluation(cfg, p)
    rows = []
    modes = "+-" if p.configuration is Configuration.FOLDED else "+"
    for th in cfg["squeeze"]["theories"]:
        v = _variant(q, "qg" if th == "qg" else "causal")
        pres = "" if v.theory is Theory.QG else v.prescription.value
        for m in modes:
            mat = quadrature_matrix(v, w, m)
            theta, _, level = optimal_squeezing(mat)
            label = mat.label if p.configuration is Configuration.FOLDED else "a"
            label = {"+": "c", "-": "d"}.get(label, label)
            for name, vals in (("squeeze_", level), ("theta_", theta)):
                rows += spectrum_rows(SpectrumCurve(w, vals, channel=name + label,
                                                    theory=v.theory.value, prescription=pres))
    return {"squeezing.csv": csv_text(SPECTRA_COLUMNS, rows)}


def cmd_simulate(cfg, p):
    o = cfg["simulate"]
    q, dt, amp = p, o["dt"], o["source_amplitude"]
    if cfg["output"]["internal_units"] and not p.internal:
        q = p.to_internal()
        dt = None if dt is None else dt / q.scales.time
        amp = amp / q.scales.length
    recs = simulate(q, n_steps=o["n_steps"], dt=dt, burn_in=o["burn_in"],
                    n_trajectories=o["n_trajectories"], seed=o["seed"],
                    freeze_covariance=o["freeze_covariance"],
                    source_amplitude=amp, source_phase=o["source_phase"],
                    store_means=o["write_trajectories"])
    out = {}
    if o["write_trajectories"]:
        out["trajectories.csv"] = csv_text(TRAJECTORY_COLUMNS, trajectory_rows(recs))
    rows = []
    nper = min(o["nperseg"], o["n_steps"])
    pres = "" if q.theory is Theory.QG else q.prescription.value
    labels = recs[0].labels
    pairs = [(a, a) for a in range(len(labels))] + [(0, b) for b in range(1, len(labels))]
    for a, b in pairs:
        est = welch_cross_spectrum(recs, (a, b), nperseg=nper, overlap=o["overlap"],
                                   window=o["window"])
        ch = labels[a] + labels[b]
        rows += spectrum_rows(SpectrumCurve(est.omega, est.values, channel=ch,
                                            theory=q.theory.value, prescription=pres))
        rows += spectrum_rows(SpectrumCurve(est.omega, est.stderr, channel=ch + "_stderr",
                                            theory=q.theory.value, prescription=pres))
    out["estimate.csv"] = csv_text(SPECTRA_COLUMNS, rows)
    return out


def cmd_sweep(cfg, p):
    o = cfg["sweep"]
    qg = np.geomspace(o["q_min"], o["q_max"], int(o["n_q"]))
    pg = np.geomspace(o["p_min"], o["p_max"], int(o["n_p"]))
    res = run_sweep(p, qg, pg, o["metric"], pair=o["pair"], threads=int(o["threads"]),
                    n_log=int(o["n_log"]), n_lin=int(o["n_lin"]))
    return {"sweep.csv": csv_text(SWEEP_COLUMNS, res.rows()),
            "sweep_summary.json": dump_json(res.summary())}


HANDLERS = {"steady": cmd_steady, "spectrum": cmd_spectrum, "simulate": cmd_simulate,
            "correlate": cmd_correlate, "squeeze": cmd_squeeze, "sweep": cmd_sweep}


def build_parser():
    ap = argparse.ArgumentParser(prog="sngrav", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"sngrav {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", default=None, help="YAML configuration or manifest")
        sp.add_argument("--out", default=None, help="output directory (default ./out)")
        sp.add_argument("--seed", type=int, default=None, help="unsigned 64-bit seed")
        sp.add_argument("--threads", type=int, default=None, help="worker threads for sweeps")
        sp.add_argument("--internal-units", action="store_true", default=None,
                        help="write outputs in internal units (hbar = M = omega_q = 1)")
        sp.add_argument("-v", "--verbose", action="store_true")
    return ap


def _env(name):
    return os.environ.get(ENV_PREFIX + name)


def _resolve(args):
    path = args.config or _env("CONFIG")
    cfg = load_config(path) if path else resolve_config({})
    seed = args.seed if args.seed is not None else _env("SEED")
    if seed is not None:
        cfg["simulate"]["seed"] = int(seed)
    threads = args.threads if args.threads is not None else _env("THREADS")
    if threads is not None:
        cfg["sweep"]["threads"] = int(threads)
    iu = args.internal_units
    if iu is None and _env("INTERNAL_UNITS") is not None:
        iu = _env("INTERNAL_UNITS").lower() in ("1", "true", "yes")
    if iu is not None:
        cfg["output"]["internal_units"] = bool(iu)
    cfg = resolve_config(cfg)     # re-validate the overrides
    out = args.out or _env("OUT") or "out"
    return cfg, out


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    started = datetime.datetime.now(datetime.timezone.utc)
    t0 = time.perf_counter()
    try:
        cfg, out = _resolve(args)
        p = build_params(cfg)
        log.info("running %s (Lambda = %.6g)", args.command, p.Lambda)
        files = HANDLERS[args.command](cfg, p)
    except ConfigError as exc:
        print(f"sngrav: config error: {exc}", file=sys.stderr)
        return 2
    except ParameterError as exc:
        print(f"sngrav: invalid parameters: {exc}", file=sys.stderr)
        return 3
    except (SweepError, SimulationError, ConvergenceError, NotImplementedError, ValueError) as exc:
        print(f"sngrav: {args.command} failed: {exc}", file=sys.stderr)
        return 4
    for name, text in files.items():
        atomic_write(os.path.join(out, name), text)
    manifest = {
        "config": cfg,
        "run": {"tool": "sngrav", "version": __version__, "command": args.command,
                "seed": cfg["simulate"]["seed"], "started_utc": started.isoformat(),
                "wall_clock_s": time.perf_counter() - t0},
        "derived": derived_quantities(p),
        "outputs": sorted(files),
    }
    atomic_write(os.path.join(out, "manifest.yaml"), dump_yaml(manifest))
    log.info("wrote %s", ", ".join(sorted(files)))
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
