"""Homodyne-angle-resolved output spectra and ponderomotive squeezing.

S(theta) = S11 cos^2 + S22 sin^2 + 2 Re S12 sin cos, with (S11, S22, S12)
the spectral matrix of the outgoing amplitude and phase quadratures.

Under semi-classical gravity the record spectrum measured at angle theta is
not a quadratic form in theta (the conditional state depends on what is
measured).  The matrix is therefore that of the output field while the
mirror is conditioned on its configured quadrature, by default the phase
quadrature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import Configuration, ModelParams, Prescription, Theory
from .riccati import care_steady
from .spectra import SpectrumCurve, _internal, chi, default_grid
from .systems import build_system, gain


@dataclass
class QuadratureSpectrumMatrix:
    omega: np.ndarray
    S11: np.ndarray
    S22: np.ndarray
    S12: np.ndarray
    label: str = ""

    def __post_init__(self):
        self.omega = np.asarray(self.omega, dtype=float)
        self.S11 = np.asarray(self.S11, dtype=float)
        self.S22 = np.asarray(self.S22, dtype=float)
        self.S12 = np.asarray(self.S12, dtype=complex)

    def check(self, rtol=1e-9):
        if np.any(self.S11 < 0) or np.any(self.S22 < 0):
            raise ValueError("negative quadrature auto-spectrum")
        if np.any(self.S12.real**2 > self.S11 * self.S22 * (1 + rtol)):
            raise ValueError("|Re S12|^2 exceeds S11 S22")


def quadrature_spectrum(m: QuadratureSpectrumMatrix, theta) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return m.S11 * c * c + m.S22 * s * s + 2 * m.S12.real * s * c


def optimal_squeezing(m: QuadratureSpectrumMatrix):
    """Per frequency: (theta*, S_min, level_db) with theta* in [0, pi).

    The stationary angles of the quadratic form are 1/2 atan2(2 Re S12,
    S11 - S22) (maximum) and that plus pi/2 (minimum).
    """
    a, b, r = m.S11, m.S22, m.S12.real
    theta_max = 0.5 * np.arctan2(2 * r, a - b)
    theta = np.mod(theta_max + 0.5 * np.pi, np.pi)
    # smaller eigenvalue written to avoid cancellation when it is tiny
    half_tr = 0.5 * (a + b)
    disc = np.hypot(0.5 * (a - b), r)
    big = half_tr + disc
    det = a * b - r * r
    S_min = np.where(big > 0, det / np.where(big > 0, big, 1.0), 0.0)
    with np.errstate(divide="ignore"):
        level = 10.0 * np.log10(S_min)
    return theta, S_min, level


def closed_loop_matrix(p: ModelParams, omega, mode="+", theta_meas=None):
    """Output quadrature matrix of the measured mirror (or folded mode).

    The mirror's quantum state oscillates under A_cov, driven by back-action
    hbar alpha n1 and the thermal force; the semi-classical force
    (A_mean - A_cov) m acts through the conditional mean m, a Kalman estimate
    from the record y = cos(theta) n1 + sin(theta) (n2 + alpha x).  Outputs
    are a1 = n1 and a2 = n2 + alpha x.  With no semi-classical force the
    estimator decouples and this is the plain input-output relation.
    """
    q, w = _internal(p, omega)
    theta = q.meas.theta_a if theta_meas is None else theta_meas
    sys = build_system(q, theta=theta, mode=mode)
    K = gain(sys, care_steady(sys))
    A_s, A_m, C = sys.A_cov, sys.A_mean, sys.C
    ex = np.array([[q.alpha, 0.0]])
    ep = np.array([0.0, 1.0])
    # inputs (n1, n2, n_th); unknowns (s, m)
    B_s = np.column_stack([q.hbar * q.alpha * ep, np.zeros(2),
                           math.sqrt(2.0 * q.thermal_diffusion) * ep])
    B_m = 2.0 * K @ np.array([[math.cos(theta), math.sin(theta), 0.0]])
    I2 = np.eye(2)
    nf = len(w)
    L = np.zeros((nf, 4, 4), dtype=complex)
    L[:, :2, :2] = -1j * w[:, None, None] * I2 - A_s
    L[:, :2, 2:] = -(A_m - A_s)
    L[:, 2:, :2] = -2.0 * K @ C
    L[:, 2:, 2:] = -1j * w[:, None, None] * I2 - A_m + 2.0 * K @ C
    R = np.broadcast_to(np.vstack([B_s, B_m]).astype(complex), (nf, 4, 3))
    X = np.linalg.solve(L, R)                              # (nf, 4, 3)
    T1 = np.broadcast_to(np.array([1.0, 0.0, 0.0], dtype=complex), (nf, 3))
    T2 = np.array([0.0, 1.0, 0.0]) + np.einsum("ij,fjk->fik", ex, X[:, :2, :])[:, 0, :]
    S11 = np.sum(np.abs(T1) ** 2, axis=1)
    S22 = np.sum(np.abs(T2) ** 2, axis=1)
    S12 = np.sum(np.conj(T1) * T2, axis=1)
    return S11, S22, S12


def io_matrix(p: ModelParams, omega, w0):
    """Input-output matrix of an oscillator at ``w0`` (QG, pre-selection)."""
    K = p.hbar * p.alpha**2 / p.M
    c = chi(omega, w0, p.gamma_m)
    thermal = 4 * p.alpha**2 * p.gamma_m * p.k_B * p.temperature / p.M
    S22 = 1.0 + (K * K + thermal) * np.abs(c) ** 2
    return np.ones_like(omega), S22, K * c


def quadrature_matrix(p: ModelParams, omega=None, mode="+") -> QuadratureSpectrumMatrix:
    """Output quadrature matrix of a single mirror or of one folded mode."""
    if p.configuration is Configuration.LINEAR:
        raise ValueError("quadrature matrices are built for the self and folded configurations")
    if p.theory is Theory.SN and p.prescription is Prescription.POST:
        raise ValueError("post-selection squeezing is not modelled")
    omega = default_grid(p) if omega is None else np.atleast_1d(np.asarray(omega, dtype=float))
    S11, S22, S12 = closed_loop_matrix(p, omega, mode)
    label = mode if p.configuration is Configuration.FOLDED else "a"
    return QuadratureSpectrumMatrix(omega, S11, S22, S12, label=label)


def squeezing_curve(p: ModelParams, omega=None, mode="+") -> SpectrumCurve:
    """Optimal-angle squeezing level (dB) as a spectrum curve."""
    m = quadrature_matrix(p, omega, mode)
    _, _, level = optimal_squeezing(m)
    pres = "" if p.theory is Theory.QG else p.prescription.value
    return SpectrumCurve(m.omega, level, channel=f"squeeze_{m.label}", theory=p.theory.value,
                         prescription=pres, form="exact")
