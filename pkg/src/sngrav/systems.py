"""Linear-Gaussian state-space form of the conditional dynamics.

Every configuration reduces to

    d m = A_mean m dt + sqrt(2) K dW,           K = V C^T + Gamma
    dV/dt = A_cov V + V A_cov^T + D - 2 K K^T
    y = C m + dW / (sqrt(2) dt)

with one unit-variance Wiener increment per measured channel.  Semi-classical
gravity enters only through A_mean differing from A_cov: the conditional mean
feels the gravity sourced by itself (or by the partner's conditional mean)
while the quadratic part of the Hamiltonian sets the covariance frequency.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import Configuration, ModelParams, Prescription, Theory


@dataclass(frozen=True)
class LinearGaussianSystem:
    A_mean: np.ndarray
    A_cov: np.ndarray
    C: np.ndarray
    Gamma: np.ndarray
    D: np.ndarray
    labels: tuple = ()

    @property
    def n_state(self):
        return self.A_mean.shape[0]

    @property
    def n_channels(self):
        return self.C.shape[0]


def oscillator_drift(M, omega, gamma):
    return np.array([[0.0, 1.0 / M], [-M * omega**2, -gamma]])


def _gravity_drift(M, omega_g):
    return np.array([[0.0, 0.0], [M * omega_g**2, 0.0]])


def _readout(p: ModelParams, thetas):
    k = len(thetas)
    n = 2 * k
    C = np.zeros((k, n))
    Gamma = np.zeros((n, k))
    for j, th in enumerate(thetas):
        C[j, 2 * j] = p.alpha * math.sin(th)
        Gamma[2 * j + 1, j] = 0.5 * p.hbar * p.alpha * math.cos(th)
    D = np.zeros((n, n))
    for j in range(k):
        D[2 * j + 1, 2 * j + 1] = 0.5 * p.hbar**2 * p.alpha**2 + p.thermal_diffusion
    return C, Gamma, D


def single_system(p: ModelParams, theta: float, omega_mean: float, omega_cov: float,
                  label="a") -> LinearGaussianSystem:
    """One oscillator of mass M read out at homodyne angle ``theta``."""
    C, Gamma, D = _readout(p, [theta])
    return LinearGaussianSystem(
        A_mean=oscillator_drift(p.M, omega_mean, p.gamma_m),
        A_cov=oscillator_drift(p.M, omega_cov, p.gamma_m),
        C=C, Gamma=Gamma, D=D, labels=(label,))


def self_gravity_frequencies(p: ModelParams):
    """(mean, covariance) restoring frequencies for a single mirror."""
    if p.theory is Theory.QG:
        return p.omega_m, p.omega_m
    if p.prescription is Prescription.CAUSAL:
        return p.omega_m, p.omega_q
    if p.prescription is Prescription.PRE:
        # deterministic source pinned at zero restores toward the origin at omega_q
        return p.omega_q, p.omega_q
    raise ValueError("post-selection has no forward-in-time state-space form")


def folded_frequencies(p: ModelParams, mode: str):
    """(mean, covariance) frequencies for the common ('+') or differential ('-') mode."""
    if mode not in ("+", "-"):
        raise ValueError(f"mode must be '+' or '-', got {mode!r}")
    if p.theory is Theory.QG:
        w = p.omega_m if mode == "+" else p.omega_minus
        return w, w
    if p.prescription is Prescription.CAUSAL:
        return (p.omega_m if mode == "+" else p.omega_minus), p.omega_q
    if p.prescription is Prescription.PRE:
        return p.omega_q, p.omega_q
    raise ValueError("post-selection has no forward-in-time state-space form")


def build_system(p: ModelParams, theta=None, mode="+") -> LinearGaussianSystem:
    """State-space system for the configuration, theory and prescription of ``p``.

    ``theta`` overrides the homodyne angle(s); for the linear configuration it
    is a pair (theta_A, theta_B).  ``mode`` picks the folded-interferometer mode.
    """
    cfg = p.configuration
    if cfg is Configuration.SELF:
        th = p.meas.theta_a if theta is None else theta
        wm, wc = self_gravity_frequencies(p)
        return single_system(p, th, wm, wc)
    if cfg is Configuration.FOLDED:
        th = p.meas.theta_a if theta is None else theta
        wm, wc = folded_frequencies(p, mode)
        return single_system(p, th, wm, wc, label="c" if mode == "+" else "d")
    ths = (p.meas.theta_a, p.meas.theta_b) if theta is None else tuple(theta)
    C, Gamma, D = _readout(p, ths)
    Gq = oscillator_drift(p.M, p.omega_q, p.gamma_m)
    Gg = _gravity_drift(p.M, p.omega_g)
    Z = np.zeros((2, 2))
    coupled = np.block([[Gq, Gg], [Gg, Gq]])
    decoupled = np.block([[Gq, Z], [Z, Gq]])
    if p.theory is Theory.QG:
        A_mean, A_cov = coupled, coupled
    elif p.prescription is Prescription.CAUSAL:
        A_mean, A_cov = coupled, decoupled
    elif p.prescription is Prescription.PRE:
        # partner's pre-selected mean is a deterministic zero source
        A_mean, A_cov = decoupled, decoupled
    else:
        raise ValueError("post-selection has no forward-in-time state-space form")
    return LinearGaussianSystem(A_mean, A_cov, C, Gamma, D, labels=("A", "B"))


def as_matrix(V) -> np.ndarray:
    """Accept a raw array or a covariance value object."""
    if hasattr(V, "as_matrix"):
        return V.as_matrix()
    if hasattr(V, "matrix"):
        return V.matrix
    return np.asarray(V, dtype=float)


def gain(sys: LinearGaussianSystem, V) -> np.ndarray:
    return as_matrix(V) @ sys.C.T + sys.Gamma


def riccati_rhs(sys: LinearGaussianSystem, V: np.ndarray) -> np.ndarray:
    V = as_matrix(V)
    K = gain(sys, V)
    return sys.A_cov @ V + V @ sys.A_cov.T + sys.D - 2.0 * K @ K.T


def transfer_matrix(sys: LinearGaussianSystem, V: np.ndarray, omega) -> np.ndarray:
    """Record response to the innovations, T(Omega) = I + 2 C (-i Omega - A_mean)^-1 K.

    Returns shape (n_freq, k, k).  Normalized spectral matrix is conj(T) T^T.
    """
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    n, k = sys.n_state, sys.n_channels
    K = gain(sys, V)
    lhs = -1j * omega[:, None, None] * np.eye(n) - sys.A_mean[None]
    H = np.linalg.solve(lhs, np.broadcast_to(K.astype(complex), (len(omega), n, k)))
    return np.eye(k)[None] + 2.0 * np.einsum("ij,fjk->fik", sys.C, H)


def spectral_matrix(sys: LinearGaussianSystem, V: np.ndarray, omega) -> np.ndarray:
    """Shot-noise-normalized record spectra S_jk = E[y_j^* y_k], shape (n_freq, k, k)."""
    T = transfer_matrix(sys, V, omega)
    return np.conj(T) @ np.swapaxes(T, 1, 2)
