"""Welch estimates of record spectra in the shot-noise convention.

A white record with variance 1/(2 dt) per sample reads 1 at every frequency.
Cross-spectra follow the analytic convention S_AB = <y_A^* y_B>, which for the
forward-FFT segments used here is mean(2 dt X_A conj(X_B)) / sum(w^2).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg, signal

from .trajectory import ExactStep, TrajectoryRecord

DEFAULT_CEILING_DB = 60.0


@dataclass
class SpectrumEstimate:
    omega: np.ndarray
    values: np.ndarray
    stderr: np.ndarray
    n_segments: int
    nperseg: int
    window: str
    overlap: float
    channels: tuple
    dt: float

    @property
    def resolution(self):
        return 2 * math.pi / (self.nperseg * self.dt)


def _channel_index(rec: TrajectoryRecord, ch):
    if isinstance(ch, str):
        return rec.labels.index(ch)
    return int(ch)


def _overlap_correlation(w, step):
    """Correlation of periodograms of white noise in segments ``step`` apart."""
    if step >= len(w):
        return 0.0
    return float(np.sum(w[step:] * w[:-step]) ** 2 / np.sum(w * w) ** 2)


def welch_cross_spectrum(records, channels=(0, 0), nperseg=None, overlap=0.5,
                         window="hann") -> SpectrumEstimate:
    """Averaged windowed (cross-)periodograms over segments and trajectories.

    ``records`` is a TrajectoryRecord or a sequence of them (burn-in already
    dropped); ``channels`` a pair of channel indices or labels.  Returns
    two-sided densities on the non-negative frequency bins.
    """
    if isinstance(records, TrajectoryRecord):
        records = [records]
    if not records:
        raise ValueError("no records given")
    dt = records[0].dt
    N = records[0].n_steps
    for r in records:
        if not math.isclose(r.dt, dt, rel_tol=1e-12) or r.n_steps != N:
            raise ValueError("records must share dt and length")
    nperseg = min(N, 256) if nperseg is None else int(nperseg)
    if nperseg > N or nperseg < 2:
        raise ValueError(f"segment length {nperseg} does not fit records of length {N}")
    if not 0.0 <= overlap < 1.0:
        raise ValueError("overlap must lie in [0, 1)")
    step = max(1, int(round(nperseg * (1 - overlap))))
    w = signal.get_window(window, nperseg)
    scale = 2.0 * dt / np.sum(w * w)
    nseg = 1 + (N - nperseg) // step
    ia, ib = (_channel_index(records[0], c) for c in channels)
    per_traj = np.empty((len(records), nperseg // 2 + 1), dtype=complex)
    seg_sq = np.zeros(nperseg // 2 + 1)
    for j, r in enumerate(records):
        xa = np.lib.stride_tricks.sliding_window_view(r.records[:, ia], nperseg)[::step][:nseg]
        Xa = np.fft.rfft(xa * w, axis=-1)
        if ib == ia:
            P = scale * np.abs(Xa) ** 2
        else:
            xb = np.lib.stride_tricks.sliding_window_view(r.records[:, ib], nperseg)[::step][:nseg]
            P = scale * Xa * np.conj(np.fft.rfft(xb * w, axis=-1))
        per_traj[j] = P.mean(axis=0)
        seg_sq += (np.abs(P - per_traj[j]) ** 2).sum(axis=0)
    count = nseg * len(records)
    mean = per_traj.mean(axis=0)
    if len(records) > 1:
        # trajectories are independent; segments of one trajectory need not be
        stderr = np.std(per_traj, axis=0, ddof=1) / math.sqrt(len(records))
    else:
        rho = _overlap_correlation(w, step)
        var = seg_sq / max(nseg - 1, 1)
        stderr = np.sqrt(var * (1 + 2 * rho) / nseg)
    values = mean.real if ib == ia else mean
    omega = 2 * math.pi * np.fft.rfftfreq(nperseg, dt)
    return SpectrumEstimate(omega, values, stderr, count, nperseg, window, overlap,
                            (ia, ib), dt)


def coherence_estimate(S_ab: SpectrumEstimate, S_aa: SpectrumEstimate, S_bb: SpectrumEstimate):
    return np.minimum(np.abs(S_ab.values) ** 2 / (S_aa.values * S_bb.values), 1.0)


def correlation_level_estimate(S_ab, S_aa, S_bb, ceiling_db=DEFAULT_CEILING_DB):
    """Estimated correlation level in dB, capped at ``ceiling_db``."""
    coh = coherence_estimate(S_ab, S_aa, S_bb)
    with np.errstate(divide="ignore"):
        C = -10.0 * np.log10(1.0 - coh)
    return np.minimum(C, ceiling_db)


def expected_welch(step: ExactStep, C, nperseg, window="hann", channels=(0, 0), dt=1.0):
    """Exact mean of :func:`welch_cross_spectrum` for records produced by the
    exact-in-law scheme of :mod:`trajectory` (stationary start).

    Built from the record autocovariance R(tau) of the discrete process and
    the window autocorrelation, so it includes leakage and finite resolution.
    """
    n, k = step.n_state, step.n_channels
    C = np.asarray(C, dtype=float)
    Sig = step.cov
    J = np.hstack([np.eye(n), np.zeros((n, n + k))])
    G = C @ step.Psi / dt
    H = np.hstack([np.zeros((k, n)), C / dt, np.eye(k) / (math.sqrt(2.0) * dt)])
    P = linalg.solve_discrete_lyapunov(step.Phi, J @ Sig @ J.T)
    ia, ib = channels
    R = np.zeros(2 * nperseg)
    R0 = G @ P @ G.T + H @ Sig @ H.T
    X = step.Phi @ P @ G.T + J @ Sig @ H.T            # (n, k)
    R[0] = R0[ia, ib]
    M = X
    for tau in range(1, nperseg):
        Rt = G @ M                                       # E[y_{n+tau} y_n^T]
        R[tau] = Rt[ia, ib]
        R[2 * nperseg - tau] = Rt[ib, ia]                # E[y_{n-tau} y_n^T] entry (a, b)
        M = step.Phi @ M
    w = signal.get_window(window, nperseg)
    cw = np.correlate(w, w, mode="full")[nperseg - 1:]   # c_w(tau), tau >= 0
    c = np.zeros(2 * nperseg)
    c[:nperseg] = cw
    c[nperseg + 1:] = cw[1:][::-1]
    F = np.fft.fft(c * R)[: 2 * (nperseg // 2 + 1): 2]
    S = 2.0 * dt * F / np.sum(w * w)
    return S.real if ia == ib else S
