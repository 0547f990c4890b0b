"""Acceptance gate: criteria 1-11 at their stated tolerances.

Each test records one PASS/FAIL line; the lines are printed together in the
terminal summary (see conftest.py).
"""

import filecmp
import math
import os
import time

import numpy as np
import pytest
import yaml
from scipy.signal import argrelmax

from conftest import record_criterion, variants
from sngrav.cli import run
from sngrav.estimator import expected_welch, welch_cross_spectrum
from sngrav.model import Configuration, Prescription, Theory, internal_params, table_one, table_two
from sngrav.riccati import care_steady, closed_form_steady, integrate_to_steady
from sngrav.spectra import (correlation_level, correlation_level_approx, default_grid,
                            mutual_spectra_analytic, selection_signature, self_spectrum_analytic,
                            sn_qg_difference)
from sngrav.squeezing import optimal_squeezing, quadrature_matrix, quadrature_spectrum
from sngrav.sweep import run_sweep
from sngrav.systems import gain
from sngrav.trajectory import exact_step, simulate, simulation_system

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def desk_self(**kw):
    return internal_params(omega_m=1.0, q_m=1e3, Lambda=1.0, omega_sn=0.5, **kw)


def desk_linear(omega_g=0.05):
    return internal_params(omega_m=1.0, q_m=1e3, Lambda=1.0, omega_g=omega_g,
                           configuration=Configuration.LINEAR)


def gate(label, ok, detail):
    record_criterion(label, ok, detail)
    assert ok, f"criterion {label}: {detail}"


# -- 1 --------------------------------------------------------------------------------------
def test_criterion_01_riccati_fixed_point():
    worst, slowest = 0.0, 0.0
    for Lam in (0.3, 1.0, 3.0):
        p = internal_params(Lambda=Lam, q_m=1e12, omega_sn=0.5)
        t0 = time.perf_counter()
        V = integrate_to_steady(p, math.pi / 2)
        slowest = max(slowest, time.perf_counter() - t0)
        c = closed_form_steady(p, p.omega_q)
        worst = max(worst, max(abs(a / b - 1) for a, b in zip(V.as_tuple(), c.as_tuple())))
    gate("1", worst < 1e-8 and slowest < 1.0,
         f"max rel err {worst:.2e} (< 1e-8), slowest case {slowest:.2f} s (< 1 s)")


# -- 2 --------------------------------------------------------------------------------------
def test_criterion_02_purity():
    worst = 0.0
    for Lam in np.geomspace(1e-2, 1e2, 20):
        p = internal_params(Lambda=float(Lam), omega_sn=0.5)
        V = closed_form_steady(p, p.omega_q)
        worst = max(worst, abs(V.determinant / (p.hbar**2 / 4) - 1))
    q = table_one()
    V = closed_form_steady(q, q.omega_q)
    worst = max(worst, abs(V.determinant / (q.hbar**2 / 4) - 1))
    gate("2", worst < 1e-10, f"max |det V / (hbar^2/4) - 1| = {worst:.2e} (< 1e-10)")


# -- 3 --------------------------------------------------------------------------------------
def test_criterion_03_gravity_off_degeneracy():
    worst = 0.0
    for base in (table_one(), desk_self()):
        p = base.with_gravity(omega_sn=0.0)
        w = default_grid(p)
        for form in ("exact", "printed"):
            curves = {k: self_spectrum_analytic(v, omega=w, form=form).values
                      for k, v in variants(p).items()}
            for v in curves.values():
                worst = max(worst, float(np.max(np.abs(v / curves["qg"] - 1))))
    for base in (table_two(), desk_linear()):
        p = base.with_gravity(omega_g=0.0)
        w = default_grid(p)
        for pair in ("A2B2", "A1B2"):
            for form in ("exact", "printed"):
                out = {}
                for k, v in variants(p).items():
                    if k == "post" and form == "exact":
                        continue
                    out[k] = mutual_spectra_analytic(v, pair, w, form=form)
                for s in out.values():
                    for ch in ("S_AA", "S_BB"):
                        worst = max(worst, float(np.max(np.abs(s[ch].values / out["qg"][ch].values - 1))))
                    worst = max(worst, float(np.max(np.abs(s["S_AB"].values - out["qg"]["S_AB"].values)
                                                    / np.abs(out["qg"]["S_AA"].values))))
    gate("3", worst < 1e-12, f"max pointwise relative spread {worst:.2e} (< 1e-12)")


# -- 4 --------------------------------------------------------------------------------------
def test_criterion_04_selection_landmarks():
    p = table_one()
    b = p.hbar * p.alpha**2 / (p.M * p.gamma_m * p.omega_q)
    w = np.array([p.omega_q])
    pre = selection_signature(p, Prescription.PRE, w)[0]
    post = selection_signature(p, Prescription.POST, w)[0]
    e1 = abs(pre / (b * (b + 2)) - 1)
    e2 = abs(post / (-b * (b + 2) / (1 + b) ** 2) - 1)
    gate("4", max(e1, e2) < 1e-9, f"beta = {b:.6e}; rel err pre {e1:.1e}, post {e2:.1e} (< 1e-9)")


# -- 5 and 6 --------------------------------------------------------------------------------
NPER = 2**13


@pytest.fixture(scope="module")
def causal_ensemble():
    p = desk_self()
    h = 2 * math.pi / (50 * p.omega_q)
    t0 = time.perf_counter()
    recs = simulate(p, 2**17, dt=h, n_trajectories=256, seed=2024)
    est = welch_cross_spectrum(recs, nperseg=NPER)
    return p, h, est, time.perf_counter() - t0


def test_criterion_05_monte_carlo_vs_analytic(causal_ensemble):
    p, h, est, wall = causal_ensemble
    sys = simulation_system(p)
    ref = expected_welch(exact_step(sys, gain(sys, care_steady(sys)), h), sys.C, NPER, dt=h)
    band = (est.omega >= 0.5 * p.omega_q) & (est.omega <= 1.5 * p.omega_q)
    err = float(np.max(np.abs(est.values[band] / ref[band] - 1)))
    lit = self_spectrum_analytic(p, omega=est.omega[band], form="printed").values
    lit_err = float(np.max(np.abs(est.values[band] / lit - 1)))
    gate("5", err < 0.10 and wall < 300,
         f"max per-bin deviation from the window-averaged causal spectrum {err:.3f} (< 0.10) "
         f"over {band.sum()} bins; 256 x 2^17 steps in {wall:.0f} s; literal printed-form "
         f"deviation {lit_err:.2f} (see ledger)")


@pytest.mark.xfail(strict=True, reason="printed form is a near-resonance limit and the "
                   "2^17-step record cannot resolve a 1e-3 linewidth")
def test_criterion_05_literal_printed_form(causal_ensemble):
    p, _, est, _ = causal_ensemble
    band = (est.omega >= 0.5 * p.omega_q) & (est.omega <= 1.5 * p.omega_q)
    lit = self_spectrum_analytic(p, omega=est.omega[band], form="printed").values
    assert np.max(np.abs(est.values[band] / lit - 1)) < 0.10


def test_criterion_06_peak_placement(causal_ensemble):
    p, h, est, _ = causal_ensemble
    k = int(np.argmax(est.values[1:])) + 1
    causal_off = abs(est.omega[k] - p.omega_m) / est.resolution
    pre = p.with_theory(Theory.SN, Prescription.PRE)
    recs = simulate(pre, 2**17, dt=h, n_trajectories=32, seed=7)
    e2 = welch_cross_spectrum(recs, nperseg=NPER)
    k2 = int(np.argmax(e2.values[1:])) + 1
    pre_off = abs(e2.omega[k2] - p.omega_q) / e2.resolution
    gate("6", causal_off <= 1 and pre_off <= 1,
         f"causal peak {est.omega[k]:.4f} vs w_m = {p.omega_m:.4f} ({causal_off:.2f} bins); "
         f"pre peak {e2.omega[k2]:.4f} vs w_q = {p.omega_q:.4f} ({pre_off:.2f} bins)")


# -- 7 --------------------------------------------------------------------------------------
def test_criterion_07_mutual_correlation_structure():
    t = table_two()
    w = default_grid(t)
    g = t.gamma_m
    C = {}
    for pair in ("A2B2", "A1B2"):
        s = mutual_spectra_analytic(t, pair, w, form="exact")
        C[pair] = correlation_level(s["S_AB"], s["S_AA"], s["S_BB"]).values
    c = C["A2B2"]
    i = argrelmax(c)[0]
    top = np.sort(w[i[np.argsort(c[i])[::-1][:2]]])
    off_minus, off_m = abs(top[0] - t.omega_minus) / g, abs(top[1] - t.omega_m) / g
    iq = int(np.argmin(np.abs(w - t.omega_q)))
    dip = float(c[iq])
    amax = int(np.argmax(C["A1B2"]))
    cells = abs(amax - iq)
    worst = 0.0
    for pair, peaks in (("A2B2", list(top)), ("A1B2", [w[amax]])):
        pk = np.array(peaks)
        s = mutual_spectra_analytic(t, pair, pk, form="exact")
        ex = correlation_level(s["S_AB"], s["S_AA"], s["S_BB"]).values
        worst = max(worst, float(np.max(np.abs(correlation_level_approx(t, pair, pk) - ex))))
    ok = off_minus <= 0.5 and off_m <= 0.5 and dip < 1e-3 and cells <= 1 and worst < 0.1
    gate("7", ok,
         f"C_A2B2 maxima {off_minus:.2f} and {off_m:.2f} linewidths from w_- and w_m "
         f"(<= 0.5); C_A2B2(w_q) = {dip:.1e} dB (< 1e-3); C_A1B2 argmax {cells} cell(s) from "
         f"w_q (<= 1); exact vs approximate at peaks {worst:.4f} dB (< 0.1)")


# -- 8 --------------------------------------------------------------------------------------
def test_criterion_08_monte_carlo_cross_correlation():
    out = {}
    for wg in (0.05, 0.0):
        recs = simulate(desk_linear(wg), 2**18, n_trajectories=32, seed=8)
        e = welch_cross_spectrum(recs, ("A", "B"), nperseg=2**16)
        band = (e.omega > 0.5) & (e.omega < 1.5)
        out[wg] = np.abs(e.values[band]) / e.stderr[band]
    on = float(out[0.05].max())
    off = float(np.median(out[0.0]))
    gate("8", on > 5 and off < 1,
         f"w_g/w_m = 0.05: peak |S_AB| = {on:.1f} stderr (> 5); w_g = 0: median |S_AB| = "
         f"{off:.2f} stderr (< 1), max {out[0.0].max():.2f}")


# -- 9 --------------------------------------------------------------------------------------
def test_criterion_09_sn_qg_bound():
    t = table_two()
    bound = (t.gamma_m / t.omega_g) ** 2
    ratio = max(float(np.max(np.abs(sn_qg_difference(t, pair).values))) / bound
                for pair in ("A2B2", "A1B2"))
    res = run_sweep(t, np.geomspace(1e6, 1e8, 8), np.geomspace(100.0, 1e4, 8), "sn_qg_diff")
    top = float(res.values.max())
    gate("9", ratio <= 10 and top < 1e-5,
         f"max |SN - QG| = {ratio:.2f} x (gamma/w_g)^2 (O(1) taken as <= 10); sweep "
         f"sn_qg_diff max {top:.2e} dB (< 1e-5)")


# -- 10 -------------------------------------------------------------------------------------
def test_criterion_10a_angle_grid_literal():
    p = desk_self()
    m = quadrature_matrix(p)
    _, S_min, _ = optimal_squeezing(m)
    th = np.linspace(0.0, math.pi, 10000, endpoint=False)
    grid = np.min([quadrature_spectrum(m, x) for x in th], axis=0)
    rel = np.abs(grid - S_min) / S_min
    bad = int(np.sum(rel >= 1e-6))
    gate("10a", bad == 0,
         f"uniform 1e4-angle grid: max |dS|/S_min = {rel.max():.1e} (< 1e-6), failing at "
         f"{bad} of {len(rel)} frequencies; grid never below closed form: "
         f"{bool(np.all(grid >= S_min * (1 - 1e-12)))} (see ledger)")


def test_criterion_10a_two_stage_grid():
    p = desk_self()
    m = quadrature_matrix(p)
    theta, S_min, _ = optimal_squeezing(m)
    th = np.linspace(0.0, math.pi, 10000, endpoint=False)
    S = np.array([quadrature_spectrum(m, x) for x in th])
    t0 = th[np.argmin(S, axis=0)]
    fine = t0[None, :] + np.linspace(-math.pi / 1e4, math.pi / 1e4, 10001)[:, None]
    c, s = np.cos(fine), np.sin(fine)
    best = np.min(m.S11 * c * c + m.S22 * s * s + 2 * m.S12.real * s * c, axis=0)
    rel = float(np.max(np.abs(best - S_min) / S_min))
    gate("10a'", rel < 1e-6, f"two-stage 1e4 + 1e4 angle grid: max |dS|/S_min = {rel:.1e} (< 1e-6)")


def test_criterion_10b_folded_squeezing_landmarks():
    t = table_two(configuration=Configuration.FOLDED)
    w = default_grid(t)
    lines, ok = [], True
    for th in (Theory.SN, Theory.QG):
        v = t.with_theory(th)
        for mode, w0 in (("+", v.omega_m), ("-", v.omega_minus)):
            _, S_min, level = optimal_squeezing(quadrature_matrix(v, w, mode))
            at = w[int(np.argmax(S_min))]
            hit = at == w0
            ok &= bool(hit)
            lines.append(f"{th.value}{mode} feature at {'landmark' if hit else at}")
    gate("10b", ok, "squeezing feature (argmax S_min) at w_m (+) and w_- (-): " + "; ".join(lines))


# -- 11 -------------------------------------------------------------------------------------
def test_criterion_11_determinism(tmp_path):
    cfg = {"system": {"configuration": "linear", "units": "internal"},
           "mechanics": {"omega_m": 1.0, "q_m": 100.0},
           "gravity": {"omega_g": 0.05},
           "measurement": {"Lambda": 1.0},
           "grid": {"n_log": 200, "n_lin": 41},
           "simulate": {"n_steps": 2048, "n_trajectories": 3, "nperseg": 512},
           "sweep": {"q_min": 100.0, "q_max": 1000.0, "n_q": 3, "p_min": 1.0, "p_max": 2.0,
                     "n_p": 2}}
    path = tmp_path / "cfg.yaml"
    path.write_text(yaml.safe_dump(cfg))
    folded = os.path.join(ROOT, "configs", "table_two_folded.yaml")
    selfc = os.path.join(ROOT, "configs", "desk_self.yaml")
    runs = [("steady", str(path)), ("spectrum", str(path)), ("correlate", str(path)),
            ("simulate", str(path)), ("sweep", str(path)), ("squeeze", folded),
            ("steady", selfc)]
    same, total = 0, 0
    for k, (cmd, c) in enumerate(runs):
        a, b = tmp_path / f"{k}a", tmp_path / f"{k}b"
        assert run([cmd, "--config", c, "--out", str(a), "--seed", "3", "--threads", "2"]) == 0
        assert run([cmd, "--config", c, "--out", str(b), "--seed", "3", "--threads", "2"]) == 0
        for name in os.listdir(a):
            if name == "manifest.yaml":
                ma, mb = (yaml.safe_load((d / name).read_text()) for d in (a, b))
                for m in (ma, mb):
                    m["run"].pop("started_utc"), m["run"].pop("wall_clock_s")
                ok = ma == mb
            else:
                ok = filecmp.cmp(a / name, b / name, shallow=False)
            same += ok
            total += 1
    gate("11", same == total, f"{same} of {total} output files byte-identical across repeats "
         f"(manifest compared without its timestamp fields)")
