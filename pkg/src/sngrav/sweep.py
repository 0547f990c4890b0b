"""Figure-of-merit tables over a (Q_m, P_cav) grid.

Cells are evaluated from the analytic spectra only and gathered in grid order,
so the table does not depend on evaluation order or thread count.

When the base parameters carry an explicit ``alpha`` (internal units, no
cavity description) the power axis is a relative power factor: the cell uses
alpha = alpha_base * sqrt(P).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .model import Configuration, ModelParams, Prescription, Theory
from .spectra import (correlation_level, default_grid, mutual_spectra_analytic,
                      self_spectrum_analytic, sn_qg_difference)
from .squeezing import optimal_squeezing, quadrature_matrix

METRICS = ("squeezing", "correlation", "sn_qg_diff")


class SweepError(RuntimeError):
    def __init__(self, q_m, p_cav, cause):
        super().__init__(f"cell (q_m={q_m!r}, p_cav={p_cav!r}): {cause}")
        self.q_m, self.p_cav, self.cause = q_m, p_cav, cause


@dataclass
class SweepResult:
    q_grid: np.ndarray
    p_grid: np.ndarray
    metric: str
    values: np.ndarray          # (len(q_grid), len(p_grid)), dB
    Lambda: np.ndarray
    params: list                # params[i][j] is the ModelParams of cell (i, j)
    meta: dict = field(default_factory=dict)

    def rows(self):
        """Long format: (q_m, p_cav_w, metric, value_db) in grid order."""
        for i, q in enumerate(self.q_grid):
            for j, P in enumerate(self.p_grid):
                yield float(q), float(P), self.metric, float(self.values[i, j])

    def summary(self):
        v = self.values
        i, j = np.unravel_index(np.argmax(v), v.shape)
        k, l = np.unravel_index(np.argmin(v), v.shape)
        return {
            "metric": self.metric,
            "q_grid": [float(x) for x in self.q_grid],
            "p_grid": [float(x) for x in self.p_grid],
            "max_db": float(v[i, j]), "argmax": [float(self.q_grid[i]), float(self.p_grid[j])],
            "min_db": float(v[k, l]), "argmin": [float(self.q_grid[k]), float(self.p_grid[l])],
            "lambda_min": float(self.Lambda.min()), "lambda_max": float(self.Lambda.max()),
            **self.meta,
        }


def _check_axis(name, a):
    a = np.atleast_1d(np.asarray(a, dtype=float))
    if a.ndim != 1 or a.size == 0:
        raise ValueError(f"{name} must be a non-empty 1-d grid")
    if np.any(~(a > 0)):
        raise ValueError(f"{name} values must be positive")
    if np.any(np.diff(a) <= 0):
        raise ValueError(f"{name} must be strictly increasing")
    return a


def cell_params(base: ModelParams, q_m, p_cav) -> ModelParams:
    p = base.with_mech(q_m=float(q_m))
    if base.meas.p_cav is not None:
        return p.with_meas(p_cav=float(p_cav))
    return p.with_meas(alpha=base.alpha * math.sqrt(p_cav))


def peak_squeezing(p: ModelParams, omega=None):
    """Most negative optimal-angle squeezing level (dB) over the grid and modes."""
    modes = "+-" if p.configuration is Configuration.FOLDED else "+"
    return min(float(np.min(optimal_squeezing(quadrature_matrix(p, omega, m))[2]))
               for m in modes)


def peak_correlation(p: ModelParams, pair="A2B2", omega=None):
    s = mutual_spectra_analytic(p, pair, omega, form="exact")
    return float(np.max(correlation_level(s["S_AB"], s["S_AA"], s["S_BB"]).values))


def max_sn_qg_difference(p: ModelParams, pair="A2B2", omega=None):
    """Largest |SN causal - QG| figure of merit (dB) over the grid.

    Linear cavity: the relative conditional-variance difference as
    10 log10(1 + d).  Folded: squeezing levels of both modes.  Single mirror:
    the record spectra.
    """
    omega = default_grid(p) if omega is None else omega
    sn = p.with_theory(Theory.SN, Prescription.CAUSAL)
    qg = p.with_theory(Theory.QG)
    if p.configuration is Configuration.LINEAR:
        d = sn_qg_difference(sn, pair, omega).values
        return float(np.max(np.abs(10.0 / math.log(10.0) * np.log1p(d))))
    if p.configuration is Configuration.FOLDED:
        out = 0.0
        for m in "+-":
            a = optimal_squeezing(quadrature_matrix(sn, omega, m))[2]
            b = optimal_squeezing(quadrature_matrix(qg, omega, m))[2]
            out = max(out, float(np.max(np.abs(a - b))))
        return out
    a = self_spectrum_analytic(sn, omega=omega).values
    b = self_spectrum_analytic(qg, omega=omega).values
    return float(np.max(np.abs(10.0 * np.log10(a / b))))


def evaluate_metric(p: ModelParams, metric, pair="A1B2", omega=None):
    if metric == "squeezing":
        return peak_squeezing(p, omega)
    if metric == "correlation":
        return peak_correlation(p, pair, omega)
    if metric == "sn_qg_diff":
        return max_sn_qg_difference(p, pair, omega)
    raise ValueError(f"metric must be one of {METRICS}, got {metric!r}")


def run_sweep(base: ModelParams, q_grid, p_grid, metric, pair="A1B2", threads=1,
              n_log=400, n_lin=201) -> SweepResult:
    """Evaluate ``metric`` on every (Q_m, P_cav) cell.

    Each cell uses its own default frequency grid with ``n_log`` log points
    and ``n_lin`` points per resonance refinement.
    """
    if metric not in METRICS:
        raise ValueError(f"metric must be one of {METRICS}, got {metric!r}")
    q_grid = _check_axis("q_grid", q_grid)
    p_grid = _check_axis("p_grid", p_grid)
    cells = [(i, j) for i in range(len(q_grid)) for j in range(len(p_grid))]

    def work(ij):
        q, P = q_grid[ij[0]], p_grid[ij[1]]
        try:
            c = cell_params(base, q, P)
            return c, evaluate_metric(c, metric, pair, default_grid(c, n_log, n_lin))
        except Exception as exc:           # re-raised with the cell coordinates
            raise SweepError(float(q), float(P), exc) from exc

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            out = list(ex.map(work, cells))
    else:
        out = [work(c) for c in cells]
    values = np.empty((len(q_grid), len(p_grid)))
    lam = np.empty_like(values)
    params = [[None] * len(p_grid) for _ in q_grid]
    for (i, j), (c, v) in zip(cells, out):
        values[i, j], lam[i, j], params[i][j] = v, c.Lambda, c
    meta = {"pair": pair if metric != "squeezing" else None,
            "configuration": base.configuration.value, "n_log": n_log, "n_lin": n_lin}
    return SweepResult(q_grid, p_grid, metric, values, lam, params, meta)
