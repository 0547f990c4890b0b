"""Independent reference computations used by the tests."""

import math

import numpy as np
from scipy import integrate, linalg


def fock_operators(N, omega, hbar=1.0, M=1.0):
    a = np.diag(np.sqrt(np.arange(1, N)), 1).astype(complex)
    ad = a.conj().T
    x = math.sqrt(hbar / (2 * M * omega)) * (a + ad)
    p = 1j * math.sqrt(hbar * M * omega / 2) * (ad - a)
    return a, x, p


def gaussian_fock_state(N, omega, r, phi, beta):
    """|beta, r e^{i phi}>, a displaced squeezed vacuum in a truncated Fock basis."""
    a, _, _ = fock_operators(N, omega)
    ad = a.conj().T
    z = r * np.exp(1j * phi)
    S = linalg.expm(0.5 * (np.conj(z) * a @ a - z * ad @ ad))
    D = linalg.expm(beta * ad - np.conj(beta) * a)
    psi = D @ S @ np.eye(N, dtype=complex)[:, 0]
    psi /= np.linalg.norm(psi)
    return np.outer(psi, psi.conj())


def _moments(rho, x, p):
    ex = np.trace(rho @ x).real
    ep = np.trace(rho @ p).real
    xx = np.trace(rho @ x @ x).real - ex * ex
    pp = np.trace(rho @ p @ p).real - ep * ep
    xp = 0.5 * np.trace(rho @ (x @ p + p @ x)).real - ex * ep
    return np.array([xx, xp, pp]), np.array([ex, ep])


def sme_covariance_drift(rho, omega, alpha, theta, D_thermal=0.0, hbar=1.0, M=1.0, h=1e-4):
    """Expected rate of change of (V_xx, V_xp, V_pp) under the homodyne SME
    with measurement operator (alpha/sqrt 2) e^{-i(theta - pi/2)} x, free
    Hamiltonian at ``omega`` and unmonitored momentum diffusion ``D_thermal``.

    The deterministic (Lindblad) part is a central finite difference of the
    moments, exact because they are quadratic in the step.  The Ito part is
    minus the square of the innovation gain read off the measurement
    superoperator.
    """
    N = rho.shape[0]
    _, x, p = fock_operators(N, omega, hbar, M)
    H = p @ p / (2 * M) + 0.5 * M * omega**2 * x @ x
    k2 = alpha**2 / 2 + D_thermal / hbar**2

    def lind(r):
        out = -1j / hbar * (H @ r - r @ H)
        return out + k2 * (x @ r @ x - 0.5 * (x @ x @ r + r @ x @ x))

    L = lind(rho)
    Vp, _ = _moments(rho + h * L, x, p)
    Vm, _ = _moments(rho - h * L, x, p)
    drift = (Vp - Vm) / (2 * h)
    c = (alpha / math.sqrt(2)) * np.exp(-1j * (theta - math.pi / 2)) * x
    Hc = c @ rho + rho @ c.conj().T
    Hc = Hc - np.trace(Hc).real * rho
    g = np.array([np.trace(Hc @ x).real, np.trace(Hc @ p).real])   # sqrt(2) K
    return drift - np.array([g[0] ** 2, g[0] * g[1], g[1] ** 2])


def time_domain_spectral_matrix(A, C, K, omega, t_max, n=400001):
    """Spectral matrix of y = C m + white noise (shot-noise units) from the
    stationary autocovariance of dm = A m dt + sqrt(2) K dW.

    R(tau) = E[y(t + tau) y(t)^T] = C e^{A tau} (P C^T + K) for tau > 0, with
    A P + P A^T + 2 K K^T = 0, and S_ab = 1 + 2 int_0^inf (R_ba e^{i w tau} +
    R_ab e^{-i w tau}) dtau, integrated by Simpson's rule on [0, t_max].
    """
    P = linalg.solve_continuous_lyapunov(A, -2.0 * K @ K.T)
    G = P @ C.T + K
    lam, U = np.linalg.eig(A)
    Ui = np.linalg.inv(U)
    t = np.linspace(0.0, t_max, n)
    E = np.einsum("ij,tj,jk->tik", U, np.exp(np.outer(t, lam)), Ui).real
    R = np.einsum("ij,tjk,kl->til", C, E, G)
    out = []
    for w in np.atleast_1d(omega):
        I1 = integrate.simpson(R * np.exp(1j * w * t)[:, None, None], x=t, axis=0)
        I2 = integrate.simpson(R * np.exp(-1j * w * t)[:, None, None], x=t, axis=0)
        out.append(np.eye(C.shape[0]) + 2.0 * (I1.T + I2))
    return np.array(out)
