"""Run configuration, manifests and CSV/JSON artifacts.

The configuration is YAML with the sections below.  Every key is optional
except that the measurement strength must be given one way (alpha, Lambda or
the cavity trio) unless a preset supplies it.  Unknown keys are errors.

    system:      configuration, theory, prescription, preset, units
    mechanics:   mass, omega_m, q_m, temperature
    gravity:     omega_sn, omega_g, coupling
    measurement: alpha, Lambda, p_cav, finesse, wavelength, theta_a, theta_b
    grid:        omega_min, omega_max, n, spacing, n_log, n_lin, span
    output:      internal_units
    steady / spectrum / simulate / correlate / squeeze / sweep: command options

``units: internal`` means hbar = M = k_B = 1 for every numeric input.  A
manifest (``config``, ``run``, ``derived``, ``outputs``) is itself a valid
configuration: its ``config`` block is used and the rest is ignored.
"""

from __future__ import annotations

import copy
import csv
import io
import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np
import yaml

from .model import (Configuration, GravityParams, MeasurementParams, MechanicalParams,
                    ModelParams, ParameterError, Prescription, Theory, derive_params,
                    internal_params, table_one, table_two)
from .spectra import default_grid
from .trajectory import TrajectoryRecord

SPECTRA_COLUMNS = ("omega_rad_s", "value_re", "value_im", "channel", "theory", "prescription")
TRAJECTORY_COLUMNS = ("t_s", "x_mean", "p_mean", "record_y", "channel", "trajectory_id")
SWEEP_COLUMNS = ("q_m", "p_cav_w", "metric", "value_db")

DEFAULTS = {
    "system": {"configuration": "self", "theory": "sn", "prescription": "causal",
               "preset": None, "units": "si"},
    "mechanics": {"mass": None, "omega_m": None, "q_m": None, "temperature": 0.0},
    "gravity": {"omega_sn": 0.0, "omega_g": None, "coupling": None},
    "measurement": {"alpha": None, "Lambda": None, "p_cav": None, "finesse": None,
                    "wavelength": None, "theta_a": math.pi / 2, "theta_b": math.pi / 2},
    "grid": {"omega_min": None, "omega_max": None, "n": None, "spacing": "log",
             "n_log": 2000, "n_lin": 401, "span": 10.0},
    "output": {"internal_units": False},
    "steady": {"method": "auto"},
    "spectrum": {"prescriptions": None, "form": "exact", "pairs": ["A2B2", "A1B2"]},
    "simulate": {"n_steps": 4096, "dt": None, "n_trajectories": 4, "burn_in": None,
                 "seed": 0, "freeze_covariance": True, "source_amplitude": 0.0,
                 "source_phase": 0.0, "write_trajectories": True, "nperseg": 1024,
                 "overlap": 0.5, "window": "hann"},
    "correlate": {"pairs": ["A2B2", "A1B2"], "theories": ["sn", "qg"], "form": "exact"},
    "squeeze": {"theories": ["sn", "qg"]},
    "sweep": {"metric": "correlation", "pair": "A1B2", "q_min": 1e6, "q_max": 1e8, "n_q": 8,
              "p_min": 100.0, "p_max": 1e4, "n_p": 8, "threads": 1, "n_log": 400,
              "n_lin": 201},
}
MANIFEST_KEYS = {"config", "run", "derived", "outputs"}
TEXT_KEYS = {("grid", "spacing"), ("simulate", "window"), ("simulate", "write_trajectories"),
             ("simulate", "freeze_covariance"), ("sweep", "metric"), ("sweep", "pair")}
INTEGER_KEYS = {"n", "n_log", "n_lin", "n_steps", "n_trajectories", "burn_in", "seed", "nperseg",
                "n_q", "n_p", "threads"}


class ConfigError(ValueError):
    """Schema violation; the message starts with the offending key path."""


# ------------------------------------------------------------------ writing

def fmt(v) -> str:
    """Floats with 17 significant digits, everything else via str."""
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def atomic_write(path, data: str | bytes):
    """Write to a temporary file in the target directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    umask = os.umask(0)
    os.umask(umask)
    try:
        os.chmod(tmp, 0o666 & ~umask)
        with os.fdopen(fd, mode, **({} if mode == "wb" else {"newline": "", "encoding": "utf-8"})) as f:
            f.write(data)
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def csv_text(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([fmt(v) for v in r])
    return buf.getvalue()


def spectrum_rows(curve, omega_scale=1.0):
    """Rows of the spectra schema for one SpectrumCurve."""
    v = np.asarray(curve.values)
    im = v.imag if np.iscomplexobj(v) else np.zeros(v.shape)
    for w, re, ii in zip(curve.omega * omega_scale, v.real, im):
        yield w, re, ii, curve.channel, curve.theory, curve.prescription


def trajectory_rows(records):
    for r in records:
        t = r.times
        for c, label in enumerate(r.labels):
            x = r.means[:, 2 * c] if r.means is not None else np.full(r.n_steps, np.nan)
            pm = r.means[:, 2 * c + 1] if r.means is not None else np.full(r.n_steps, np.nan)
            for i in range(r.n_steps):
                yield t[i], x[i], pm[i], r.records[i, c], label, r.meta.get("trajectory", 0)


def read_trajectories_csv(path, seed=0):
    """Records written by ``simulate`` back as TrajectoryRecord objects
    (one per trajectory id), for re-analysis with the estimator."""
    data = {}
    labels = []
    with open(path, newline="", encoding="utf-8") as f:
        rd = csv.DictReader(f)
        if tuple(rd.fieldnames or ()) != TRAJECTORY_COLUMNS:
            raise ValueError(f"{path}: expected columns {TRAJECTORY_COLUMNS}")
        for row in rd:
            tid, ch = int(row["trajectory_id"]), row["channel"]
            if ch not in labels:
                labels.append(ch)
            d = data.setdefault(tid, {}).setdefault(ch, ([], [], [], []))
            for lst, key in zip(d, ("t_s", "x_mean", "p_mean", "record_y")):
                lst.append(float(row[key]))
    out = []
    for tid in sorted(data):
        chans = [np.array(data[tid][ch]) for ch in labels]
        t = chans[0][0]
        if len(t) < 2:
            raise ValueError(f"{path}: trajectory {tid} has fewer than two samples")
        dt = float(np.median(np.diff(t)))
        means = np.column_stack([a for c in chans for a in (c[1], c[2])])
        out.append(TrajectoryRecord(dt=dt, n_steps=len(t), seed=seed,
                                    burn_in=int(round(t[0] / dt)), labels=tuple(labels),
                                    records=np.column_stack([c[3] for c in chans]),
                                    means=means, meta={"trajectory": tid}))
    return out


def dump_yaml(obj) -> str:
    return yaml.safe_dump(obj, sort_keys=False, default_flow_style=False)


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


# ------------------------------------------------------------------ config

def _enum_value(path, value, enum):
    try:
        return enum(value).value
    except ValueError:
        raise ConfigError(f"{path}: expected one of {[e.value for e in enum]}, got {value!r}") from None


def _preset_blocks(name, cfg_system):
    conf = Configuration(cfg_system["configuration"])
    if name == "table_one":
        p = table_one()
    elif name == "table_two":
        p = table_two(conf)
    else:
        raise ConfigError(f"system.preset: unknown preset {name!r} (table_one, table_two)")
    mech = {"mass": p.mech.mass, "omega_m": p.mech.omega_m, "q_m": p.mech.q_m,
            "temperature": p.mech.temperature}
    grav = {"omega_sn": p.grav.omega_sn, "omega_g": p.grav.omega_g}
    meas = {"p_cav": p.meas.p_cav, "finesse": p.meas.finesse, "wavelength": p.meas.wavelength}
    return mech, grav, meas


def resolve_config(raw) -> dict:
    """Validate ``raw`` and fill in every default.  Presets are expanded so
    the result is self-contained."""
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("<root>: configuration must be a mapping")
    if "config" in raw:
        extra = set(raw) - MANIFEST_KEYS
        if extra:
            raise ConfigError(f"{sorted(extra)[0]}: unknown key in manifest")
        raw = raw["config"]
        if not isinstance(raw, dict):
            raise ConfigError("config: must be a mapping")
    for key in raw:
        if key not in DEFAULTS:
            raise ConfigError(f"{key}: unknown section")
    cfg = copy.deepcopy(DEFAULTS)
    for sec, body in raw.items():
        if body is None:
            continue
        if not isinstance(body, dict):
            raise ConfigError(f"{sec}: must be a mapping")
        for k, v in body.items():
            if k not in DEFAULTS[sec]:
                raise ConfigError(f"{sec}.{k}: unknown key")
            cfg[sec][k] = v
    s = cfg["system"]
    s["configuration"] = _enum_value("system.configuration", s["configuration"], Configuration)
    s["theory"] = _enum_value("system.theory", s["theory"], Theory)
    s["prescription"] = _enum_value("system.prescription", s["prescription"], Prescription)
    if s["units"] not in ("si", "internal"):
        raise ConfigError(f"system.units: expected 'si' or 'internal', got {s['units']!r}")
    if s["preset"] is not None:
        if s["units"] != "si":
            raise ConfigError("system.preset: presets are SI parameter sets")
        mech, grav, meas = _preset_blocks(s["preset"], s)
        given = raw.get("mechanics") or {}
        for k, v in mech.items():
            if k not in given:
                cfg["mechanics"][k] = v
        given = raw.get("gravity") or {}
        for k, v in grav.items():
            if k not in given:
                cfg["gravity"][k] = v
        given = raw.get("measurement") or {}
        if not any(k in given for k in ("alpha", "Lambda", "p_cav", "finesse", "wavelength")):
            cfg["measurement"].update(meas)
        s["preset"] = None
    for k in ("mass", "omega_m", "q_m"):
        if cfg["mechanics"][k] is None:
            if s["units"] == "internal" and k == "mass":
                cfg["mechanics"][k] = 1.0
                continue
            raise ConfigError(f"mechanics.{k}: required")
    for sec in ("mechanics", "gravity", "measurement", "grid", "simulate", "sweep"):
        for k, v in cfg[sec].items():
            if (sec, k) in TEXT_KEYS or v is None or isinstance(v, bool):
                continue
            if isinstance(v, str):
                # YAML 1.1 reads 1.0e6 (no exponent sign) as a string
                try:
                    v = float(v)
                except ValueError:
                    raise ConfigError(f"{sec}.{k}: expected a number, got {v!r}") from None
            if not isinstance(v, (int, float)):
                raise ConfigError(f"{sec}.{k}: expected a number, got {v!r}")
            if k in INTEGER_KEYS:
                if v != int(v):
                    raise ConfigError(f"{sec}.{k}: expected an integer, got {v!r}")
                v = int(v)
            else:
                v = float(v)
            cfg[sec][k] = v
    if cfg["simulate"]["seed"] < 0 or cfg["simulate"]["seed"] >= 2**64:
        raise ConfigError("simulate.seed: must be an unsigned 64-bit integer")
    if cfg["grid"]["spacing"] not in ("log", "linear"):
        raise ConfigError("grid.spacing: expected 'log' or 'linear'")
    return cfg


def load_config(path) -> dict:
    try:
        with open(path, encoding="utf-8") as f:
            raw = yaml.safe_load(f)
    except yaml.YAMLError as exc:
        raise ConfigError(f"<root>: not valid YAML ({exc})") from None
    return resolve_config(raw)


def build_params(cfg) -> ModelParams:
    """ModelParams of a resolved configuration (SI or internal units)."""
    s, m, g, ms = cfg["system"], cfg["mechanics"], cfg["gravity"], cfg["measurement"]
    conf = Configuration(s["configuration"])
    grav = GravityParams(conf, Theory(s["theory"]), Prescription(s["prescription"]),
                         omega_sn=g["omega_sn"], coupling=g["coupling"], omega_g=g["omega_g"])
    mech = MechanicalParams(mass=m["mass"], omega_m=m["omega_m"], q_m=m["q_m"],
                            temperature=m["temperature"])
    given = [k for k in ("alpha", "Lambda") if ms[k] is not None]
    cavity = ms["p_cav"] is not None or ms["finesse"] is not None or ms["wavelength"] is not None
    if len(given) + int(cavity) != 1:
        raise ConfigError("measurement: give exactly one of alpha, Lambda or p_cav/finesse/wavelength")
    thetas = {"theta_a": ms["theta_a"], "theta_b": ms["theta_b"]}
    if s["units"] == "internal":
        if cavity:
            raise ConfigError("measurement.p_cav: cavity inputs are SI only")
        if m["mass"] != 1.0:
            raise ConfigError("mechanics.mass: must be 1 in internal units")
        probe = internal_params(omega_m=m["omega_m"], q_m=m["q_m"], Lambda=0.0,
                                omega_sn=g["omega_sn"], omega_g=g["omega_g"],
                                temperature=m["temperature"], configuration=conf,
                                theory=grav.theory, prescription=grav.prescription, **thetas)
        alpha = ms["alpha"] if ms["alpha"] is not None else ms["Lambda"] * probe.omega_q
        return probe.with_meas(alpha=alpha)
    if cavity:
        meas = MeasurementParams(p_cav=ms["p_cav"], finesse=ms["finesse"],
                                 wavelength=ms["wavelength"], **thetas)
        return derive_params(mech, grav, meas)
    p = derive_params(mech, grav, MeasurementParams(alpha=0.0, **thetas))
    alpha = ms["alpha"]
    if alpha is None:
        alpha = ms["Lambda"] * p.omega_q * math.sqrt(p.M / p.hbar)
    return p.with_meas(alpha=alpha)


def frequency_grid(cfg, p: ModelParams):
    """Analysis grid in the units of ``p``."""
    g = cfg["grid"]
    if g["omega_min"] is None and g["omega_max"] is None and g["n"] is None:
        return default_grid(p, n_log=g["n_log"], n_lin=g["n_lin"], span=g["span"])
    if None in (g["omega_min"], g["omega_max"], g["n"]):
        raise ConfigError("grid: omega_min, omega_max and n go together")
    lo, hi, n = g["omega_min"], g["omega_max"], int(g["n"])
    if not 0 < lo < hi or n < 2:
        raise ConfigError(f"grid: need 0 < omega_min < omega_max and n >= 2 (got {lo}, {hi}, {n})")
    return np.geomspace(lo, hi, n) if g["spacing"] == "log" else np.linspace(lo, hi, n)


def derived_quantities(p: ModelParams) -> dict:
    d = {"omega_q": p.omega_q, "omega_g": p.omega_g, "omega_minus": p.omega_minus,
         "gamma_m": p.gamma_m, "alpha": p.alpha, "Lambda": p.Lambda, "beta": p.beta}
    return {k: (None if v is None else float(v)) for k, v in d.items()}
