"""Conditional covariance: Riccati right-hand sides, integration and steady states."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .model import Configuration, ModelParams
from .systems import (LinearGaussianSystem, build_system, folded_frequencies, riccati_rhs,
                      self_gravity_frequencies, single_system)


class ConvergenceError(RuntimeError):
    def __init__(self, message, residual):
        super().__init__(f"{message} (residual norm {residual:.3e})")
        self.residual = residual


@dataclass(frozen=True)
class CovarianceSingle:
    xx: float
    xp: float
    pp: float

    def as_matrix(self):
        return np.array([[self.xx, self.xp], [self.xp, self.pp]])

    @classmethod
    def from_matrix(cls, V):
        return cls(float(V[0, 0]), float(0.5 * (V[0, 1] + V[1, 0])), float(V[1, 1]))

    def as_tuple(self):
        return (self.xx, self.xp, self.pp)

    @property
    def determinant(self):
        return self.xx * self.pp - self.xp**2


@dataclass(frozen=True)
class CovarianceTwo:
    """Covariance of (x_A, p_A, x_B, p_B)."""

    matrix: np.ndarray

    def __post_init__(self):
        V = np.asarray(self.matrix, dtype=float)
        object.__setattr__(self, "matrix", 0.5 * (V + V.T))

    @property
    def block_a(self):
        return CovarianceSingle.from_matrix(self.matrix[:2, :2])

    @property
    def block_b(self):
        return CovarianceSingle.from_matrix(self.matrix[2:, 2:])

    @property
    def cross(self):
        """[[V_xAxB, V_xApB], [V_pAxB, V_pApB]]"""
        return self.matrix[:2, 2:].copy()

    @classmethod
    def from_blocks(cls, a: CovarianceSingle, b: CovarianceSingle, cross=None):
        V = np.zeros((4, 4))
        V[:2, :2] = a.as_matrix()
        V[2:, 2:] = b.as_matrix()
        if cross is not None:
            V[:2, 2:] = cross
            V[2:, :2] = np.asarray(cross).T
        return cls(V)


def covariance_frequency(p: ModelParams, mode="+"):
    if p.configuration is Configuration.FOLDED:
        return folded_frequencies(p, mode)[1]
    if p.configuration is Configuration.LINEAR:
        return p.omega_q
    return self_gravity_frequencies(p)[1]


def riccati_rhs_single(V: CovarianceSingle, p: ModelParams, theta: float, mode="+"):
    """Time derivative of (V_xx, V_xp, V_pp) for one effective oscillator."""
    M, hb, a, g = p.M, p.hbar, p.alpha, p.gamma_m
    w2 = covariance_frequency(p, mode) ** 2
    s, c = math.sin(theta), math.cos(theta)
    a2 = a * a
    xx, xp, pp = V.xx, V.xp, V.pp
    dxx = 2 * xp / M - 2 * a2 * s * s * xx * xx
    dxp = (pp / M - M * w2 * xx - g * xp
           - 2 * a2 * s * s * xx * xp - a2 * s * c * hb * xx)
    dpp = (-2 * M * w2 * xp - 2 * g * pp - 2 * a2 * s * s * xp * xp
           - 2 * a2 * s * c * hb * xp + 0.5 * a2 * hb * hb * (1 - c * c)
           + p.thermal_diffusion)
    return CovarianceSingle(dxx, dxp, dpp)


def closed_form_steady(p: ModelParams, omega: float) -> CovarianceSingle:
    """Phase-quadrature, zero-temperature, high-Q fixed point at covariance frequency ``omega``."""
    M, hb = p.M, p.hbar
    L4 = (hb * p.alpha**2 / (M * omega**2)) ** 2
    r = math.sqrt(1.0 + L4)
    return CovarianceSingle(
        xx=hb / (math.sqrt(2.0) * M * omega) / math.sqrt(1.0 + r),
        xp=0.5 * hb * math.sqrt(L4) / (1.0 + r),
        pp=hb * M * omega / math.sqrt(2.0) * r / math.sqrt(1.0 + r),
    )


def ground_state(p: ModelParams, omega: float) -> CovarianceSingle:
    return CovarianceSingle(p.hbar / (2 * p.M * omega), 0.0, p.hbar * p.M * omega / 2)


def _rk4_single(V, p, theta, dt, mode):
    def f(v):
        return riccati_rhs_single(CovarianceSingle(*v), p, theta, mode).as_tuple()

    x = V.as_tuple()
    k1 = f(x)
    k2 = f(tuple(xi + 0.5 * dt * ki for xi, ki in zip(x, k1)))
    k3 = f(tuple(xi + 0.5 * dt * ki for xi, ki in zip(x, k2)))
    k4 = f(tuple(xi + dt * ki for xi, ki in zip(x, k3)))
    return CovarianceSingle(*(xi + dt / 6 * (a + 2 * b + 2 * c + d)
                              for xi, a, b, c, d in zip(x, k1, k2, k3, k4)))


def integrate_single(V0: CovarianceSingle, p: ModelParams, theta: float, t_end: float,
                     dt: float | None = None, mode="+", record_every: int = 0):
    """Fixed-step RK4 integration.  Returns the final covariance and, when
    ``record_every`` > 0, the list of sampled states."""
    w = covariance_frequency(p, mode)
    dt = 1e-3 * 2 * math.pi / w if dt is None else dt
    n = int(math.ceil(t_end / dt))
    V, trace = V0, []
    for i in range(n):
        V = _rk4_single(V, p, theta, dt, mode)
        if record_every and i % record_every == 0:
            trace.append(V)
    return (V, trace) if record_every else V


def integrate_to_steady(p: ModelParams, theta: float, V0: CovarianceSingle | None = None,
                        dt: float | None = None, mode="+", rtol=1e-10,
                        max_periods=200_000, return_history=False):
    """Integrate from ``V0`` (default ground state) until the maximum relative
    change over one mechanical period drops below ``rtol``."""
    w = covariance_frequency(p, mode)
    period = 2 * math.pi / w
    # RK4 fixed points do not depend on the step; 1/256 period keeps transients accurate
    dt = period / 256 if dt is None else dt
    steps = max(1, int(round(period / dt)))
    V = ground_state(p, w) if V0 is None else V0
    history = []
    for _ in range(max_periods):
        prev = V
        for _ in range(steps):
            V = _rk4_single(V, p, theta, dt, mode)
        if not all(math.isfinite(v) for v in V.as_tuple()):
            raise ConvergenceError("Riccati integration diverged", float("inf"))
        change = max((abs(a - b) / max(abs(a), abs(b), 1e-300)
                      for a, b in zip(V.as_tuple(), prev.as_tuple())
                      if max(abs(a), abs(b)) > 1e-14 * abs(V.xx) + 1e-300), default=0.0)
        history.append(change)
        if change < rtol:
            return (V, history) if return_history else V
    res = float(np.linalg.norm(riccati_rhs_single(V, p, theta, mode).as_tuple()))
    raise ConvergenceError("Riccati integration did not reach a fixed point", res)


def _split_blocks(sys: LinearGaussianSystem):
    """Per-channel subsystems when nothing couples the channels, else None."""
    k = sys.n_channels
    if k < 2 or sys.n_state != 2 * k:
        return None
    mask = np.kron(np.eye(k), np.ones((2, 2))) == 0
    cmask = np.kron(np.eye(k), np.ones((1, 2))) == 0
    if (np.any(sys.A_cov[mask]) or np.any(sys.D[mask]) or np.any(sys.C[cmask])
            or np.any(sys.Gamma.T[cmask])):
        return None
    subs = []
    for j in range(k):
        s = slice(2 * j, 2 * j + 2)
        subs.append(LinearGaussianSystem(sys.A_mean[s, s], sys.A_cov[s, s], sys.C[j:j + 1, s],
                                         sys.Gamma[s, j:j + 1], sys.D[s, s]))
    return subs


def care_steady(sys: LinearGaussianSystem) -> np.ndarray:
    """Stabilizing solution of A V + V A^T + D - 2 (V C^T + Gamma)(.)^T = 0.

    Uncoupled channels are solved one by one so that the cross blocks come out
    exactly zero rather than at round-off level."""
    subs = _split_blocks(sys)
    if subs is not None:
        return linalg.block_diag(*(care_steady(s) for s in subs))
    if not np.any(sys.C):
        # no information gain: the covariance obeys a Lyapunov equation
        K0 = sys.Gamma
        Q = sys.D - 2.0 * K0 @ K0.T
        return linalg.solve_continuous_lyapunov(sys.A_cov, -Q)
    k = sys.n_channels
    V = linalg.solve_continuous_are(sys.A_cov.T, sys.C.T, sys.D, 0.5 * np.eye(k), s=sys.Gamma)
    return 0.5 * (V + V.T)


def steady_covariance_single(p: ModelParams, theta: float | None = None, mode="+",
                             method="auto") -> CovarianceSingle:
    """Steady conditional covariance of one effective oscillator.

    ``method``: 'closed' (phase quadrature, T = 0, damping neglected),
    'care' (algebraic Riccati solve, any angle/temperature), 'integrate'
    (RK4 to a fixed point), or 'auto' (closed form where it applies, else care).
    """
    theta = p.meas.theta_a if theta is None else theta
    w = covariance_frequency(p, mode)
    closed_ok = math.isclose(math.sin(theta), 1.0, rel_tol=0, abs_tol=1e-15) and p.temperature == 0
    if method == "auto":
        method = "closed" if closed_ok else "care"
    if method == "closed":
        if not closed_ok:
            raise ValueError("closed form needs theta = pi/2 and T = 0")
        return closed_form_steady(p, w)
    if method == "care":
        sys = single_system(p, theta, w, w)
        V = CovarianceSingle.from_matrix(care_steady(sys))
        res = np.abs(riccati_rhs_single(V, p, theta, mode).as_tuple())
        scale = np.abs(riccati_rhs_single(ground_state(p, w), p, theta, mode).as_tuple()).max()
        if scale > 0 and res.max() > 1e-6 * scale:
            raise ConvergenceError("algebraic Riccati solution has a large residual", res.max())
        return V
    if method == "integrate":
        return integrate_to_steady(p, theta, mode=mode)
    raise ValueError(f"unknown method {method!r}")


def covariance_dynamics_two(V: CovarianceTwo, p: ModelParams, theta_a=None, theta_b=None):
    """dV/dt for the two-mirror linear-cavity covariance (returns CovarianceTwo)."""
    ta = p.meas.theta_a if theta_a is None else theta_a
    tb = p.meas.theta_b if theta_b is None else theta_b
    sys = build_system(p, theta=(ta, tb))
    return CovarianceTwo(riccati_rhs(sys, V.matrix))


def steady_covariance_two(p: ModelParams, theta_a=None, theta_b=None) -> CovarianceTwo:
    ta = p.meas.theta_a if theta_a is None else theta_a
    tb = p.meas.theta_b if theta_b is None else theta_b
    return CovarianceTwo(care_steady(build_system(p, theta=(ta, tb))))


def integrate_two(V0: CovarianceTwo, p: ModelParams, t_end, dt, theta_a=None, theta_b=None,
                  check_psd=True):
    """RK4 integration of the 4x4 covariance; optionally asserts positive
    semidefiniteness (eigenvalue floor -1e-12) at every step."""
    ta = p.meas.theta_a if theta_a is None else theta_a
    tb = p.meas.theta_b if theta_b is None else theta_b
    sys = build_system(p, theta=(ta, tb))
    V = V0.matrix.copy()
    for _ in range(int(math.ceil(t_end / dt))):
        k1 = riccati_rhs(sys, V)
        k2 = riccati_rhs(sys, V + 0.5 * dt * k1)
        k3 = riccati_rhs(sys, V + 0.5 * dt * k2)
        k4 = riccati_rhs(sys, V + dt * k3)
        V = V + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        V = 0.5 * (V + V.T)
        if check_psd and np.linalg.eigvalsh(V).min() < -1e-12:
            raise ConvergenceError("covariance lost positive semidefiniteness",
                                   float(np.linalg.eigvalsh(V).min()))
    return CovarianceTwo(V)
