"""Euler-Maruyama quantum trajectories of the conditional means and their
homodyne records.

The means obey d m = (A_mean m + f(t)) dt + sqrt(2) K dW and each channel
emits y = C m + dW / (sqrt(2) dt) with the same increment.  f(t) is the pull
of a pre-selected source trajectory (zero by default).  Simulation runs in
internal units (hbar = M = 1, time in 1/omega_q of the SI parameter set, or
as given for internal parameter sets).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .model import Configuration, ModelParams, Prescription, Theory
from .riccati import CovarianceTwo, care_steady
from .systems import (LinearGaussianSystem, as_matrix, build_system, gain, riccati_rhs,
                      self_gravity_frequencies, single_system)

MAX_NORM = 1e6
CHUNK = 4096


class SimulationError(RuntimeError):
    pass


@dataclass
class MeanState:
    """Conditional means, one (x, p) pair per mirror or mode."""

    x: np.ndarray
    p: np.ndarray
    x_pre: float | np.ndarray | None = None

    def __post_init__(self):
        self.x = np.atleast_1d(np.asarray(self.x, dtype=float))
        self.p = np.atleast_1d(np.asarray(self.p, dtype=float))
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.p))):
            raise SimulationError("non-finite conditional mean")

    def vector(self):
        return np.ravel(np.column_stack([self.x, self.p]))

    @classmethod
    def from_vector(cls, m, x_pre=None):
        m = np.asarray(m, dtype=float)
        return cls(m[0::2], m[1::2], x_pre)


@dataclass
class TrajectoryRecord:
    dt: float
    n_steps: int
    seed: int
    burn_in: int
    labels: tuple
    records: np.ndarray                 # (n_steps, n_channels)
    means: np.ndarray | None = None     # (n_steps, n_state), state before each step
    increments: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def times(self):
        return (self.burn_in + np.arange(self.n_steps)) * self.dt


def record_sample(x_mean, theta, dW, dt, alpha):
    """Homodyne record of one step: alpha <x> sin(theta) + dW / (sqrt(2) dt)."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    return alpha * np.asarray(x_mean) * math.sin(theta) + np.asarray(dW) / (math.sqrt(2.0) * dt)


def _em_step(sys: LinearGaussianSystem, m, V, dW, dt, force=None):
    """Exponential Euler-Maruyama: the kick sqrt(2) K dW and the force act at
    the start of the step, the drift is propagated exactly."""
    K = gain(sys, V)
    kick = math.sqrt(2.0) * np.asarray(dW) @ K.T
    if force is not None:
        kick = kick + force * dt
    return (m + kick) @ linalg.expm(sys.A_mean * dt).T


def pre_source(p: ModelParams, t, amplitude=0.0, phase=0.0):
    """Mean of the pre-selected state: free damped oscillation at omega_m."""
    if amplitude == 0.0:
        return np.zeros_like(np.asarray(t, dtype=float))
    wd = math.sqrt(max(p.omega_m**2 - p.gamma_m**2 / 4, 0.0))
    return amplitude * np.exp(-0.5 * p.gamma_m * t) * np.cos(wd * t + phase)


def _source_force(p: ModelParams, x_pre, n_state):
    f = np.zeros(n_state)
    f[1::2] = p.M * p.omega_sn**2 * x_pre
    return f


def step_self(s: MeanState, V, dW, dt, p: ModelParams, theta=None) -> MeanState:
    """One Euler-Maruyama step of a single mirror (causal, pre-selection or QG)."""
    theta = p.meas.theta_a if theta is None else theta
    wm, wc = self_gravity_frequencies(p)
    sys = single_system(p, theta, wm, wc)
    force = None
    if p.theory is Theory.SN and p.prescription is Prescription.PRE and s.x_pre is not None:
        force = _source_force(p, np.atleast_1d(s.x_pre)[0], 2)
    m = _em_step(sys, s.vector(), as_matrix(V), np.atleast_1d(dW), dt, force)
    return MeanState.from_vector(m, s.x_pre)


def folded_system(p: ModelParams, theta=None) -> LinearGaussianSystem:
    """Common (+) and differential (-) modes side by side, channels (c, d)."""
    theta = p.meas.theta_a if theta is None else theta
    plus = build_system(p, theta=theta, mode="+")
    minus = build_system(p, theta=theta, mode="-")
    bd = linalg.block_diag
    return LinearGaussianSystem(bd(plus.A_mean, minus.A_mean), bd(plus.A_cov, minus.A_cov),
                                bd(plus.C, minus.C), bd(plus.Gamma, minus.Gamma),
                                bd(plus.D, minus.D), labels=("c", "d"))


def step_folded(s_plus: MeanState, s_minus: MeanState, V_plus, V_minus, dW_c, dW_d, dt,
                p: ModelParams, theta=None):
    """Step both folded-interferometer modes; they share no noise or drift."""
    sys = folded_system(p, theta)
    V = linalg.block_diag(as_matrix(V_plus), as_matrix(V_minus))
    m = np.concatenate([s_plus.vector(), s_minus.vector()])
    m = _em_step(sys, m, V, np.array([dW_c, dW_d], dtype=float), dt)
    return MeanState.from_vector(m[:2]), MeanState.from_vector(m[2:])


def step_linear_two(s_a: MeanState, s_b: MeanState, V: CovarianceTwo, dW_a, dW_b, dt,
                    p: ModelParams, theta_a=None, theta_b=None):
    """Step the two mirrors of the linear-cavity configuration."""
    ta = p.meas.theta_a if theta_a is None else theta_a
    tb = p.meas.theta_b if theta_b is None else theta_b
    sys = build_system(p, theta=(ta, tb))
    m = np.concatenate([s_a.vector(), s_b.vector()])
    m = _em_step(sys, m, as_matrix(V), np.array([dW_a, dW_b], dtype=float), dt)
    return MeanState.from_vector(m[:2]), MeanState.from_vector(m[2:])


def simulation_system(p: ModelParams, theta=None) -> LinearGaussianSystem:
    if p.configuration is Configuration.FOLDED:
        return folded_system(p, theta)
    if p.configuration is Configuration.LINEAR and theta is not None:
        theta = tuple(theta)
    return build_system(p, theta=theta)


def max_frequency(sys: LinearGaussianSystem) -> float:
    return float(max(np.abs(np.linalg.eigvals(sys.A_mean)).max(),
                     np.abs(np.linalg.eigvals(sys.A_cov)).max()))


def ground_covariance(sys: LinearGaussianSystem, hbar=1.0) -> np.ndarray:
    """Oscillator ground state of every (x, p) block at its covariance frequency."""
    V = np.zeros((sys.n_state, sys.n_state))
    for j in range(0, sys.n_state, 2):
        M = 1.0 / sys.A_cov[j, j + 1]
        w = math.sqrt(-sys.A_cov[j + 1, j] * sys.A_cov[j, j + 1])
        V[j, j] = hbar / (2 * M * w)
        V[j + 1, j + 1] = hbar * M * w / 2
    return V


def _rk4_cov(sys, V, dt):
    k1 = riccati_rhs(sys, V)
    k2 = riccati_rhs(sys, V + 0.5 * dt * k1)
    k3 = riccati_rhs(sys, V + 0.5 * dt * k2)
    k4 = riccati_rhs(sys, V + dt * k3)
    V = V + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return 0.5 * (V + V.T)


def _phi_psi(A, tau):
    """(exp(A tau), int_0^tau exp(A u) du, int_0^tau int_0^u exp(A v) dv du)."""
    n = A.shape[0]
    Z, I = np.zeros((n, n)), np.eye(n)
    E = linalg.expm(np.block([[A, I, Z], [Z, Z, I], [Z, Z, Z]]) * tau)
    return E[:n, :n], E[:n, n:2 * n], E[:n, 2 * n:]


@dataclass(frozen=True)
class ExactStep:
    """Exact-in-law one-step map for frozen gain K.

    Given m_n, m_{n+1} = Phi m_n + xi and int m dt = Psi m_n + zeta over the
    step; (xi, zeta, dW) is a joint Gaussian with covariance ``cov`` driven by
    the same Wiener path.  ``factor`` satisfies factor factor^T = cov.
    """

    Phi: np.ndarray
    Psi: np.ndarray
    Psi2: np.ndarray
    cov: np.ndarray
    factor: np.ndarray
    n_state: int
    n_channels: int


def exact_step(sys: LinearGaussianSystem, K, h, nodes=48) -> ExactStep:
    n, k = sys.n_state, sys.n_channels
    A = sys.A_mean
    B = math.sqrt(2.0) * K
    Phi, Psi, Psi2 = _phi_psi(A, h)
    x, wts = np.polynomial.legendre.leggauss(nodes)
    cov = np.zeros((2 * n + k, 2 * n + k))
    for xi, wi in zip(x, wts):
        tau = 0.5 * h * (1 - xi)                       # time left in the step, h - s
        P, Q, _ = _phi_psi(A, tau)
        F = np.vstack([P @ B, Q @ B, np.eye(k)])
        cov += 0.5 * h * wi * F @ F.T
    cov = 0.5 * (cov + cov.T)
    lam, U = np.linalg.eigh(cov)
    factor = U * np.sqrt(np.clip(lam, 0.0, None))
    return ExactStep(Phi, Psi, Psi2, cov, factor, n, k)


def simulate(p: ModelParams, n_steps: int, dt: float | None = None, burn_in: int | None = None,
             n_trajectories: int = 1, seed: int = 0, freeze_covariance: bool = True,
             theta=None, source_amplitude=0.0, source_phase=0.0, store_means=False,
             store_increments=False):
    """Ensemble of independent trajectories; returns one TrajectoryRecord each.

    ``dt`` and the returned times/records are in the units of ``p``.
    ``burn_in`` counts steps (default 10/gamma_m).  Trajectory j draws from
    the j-th child of SeedSequence(seed), so results do not depend on how
    the ensemble is scheduled.

    With ``freeze_covariance`` the covariance sits at its steady value and
    the step is exact in law; each record sample is then the detector output
    averaged over its step, C <m>_step + dW / (sqrt(2) dt).  Otherwise the
    covariance is co-integrated (RK4) from the ground state, the means use
    exponential Euler-Maruyama and the record is C m_n + dW / (sqrt(2) dt).
    """
    if p.theory is Theory.SN and p.prescription is Prescription.POST:
        raise ValueError("post-selection cannot be simulated forward in time")
    if n_steps < 0 or n_trajectories < 1:
        raise ValueError("need n_steps >= 0 and n_trajectories >= 1")
    pre_drive = (p.theory is Theory.SN and p.prescription is Prescription.PRE
                 and source_amplitude != 0.0)
    if pre_drive and p.configuration is not Configuration.SELF:
        raise ValueError("a pre-selection source is only modelled for self gravity")
    q = p.to_internal()
    tscale = 1.0 if p.internal else q.scales.time
    sys = simulation_system(q, theta)
    dt_max = 2 * math.pi / max_frequency(sys) / 50
    h = dt_max if dt is None else dt / tscale
    if h <= 0 or h > dt_max * (1 + 1e-12):
        raise ValueError(f"dt must resolve the fastest frequency: need dt <= {dt_max * tscale:.6g}")
    burn = int(math.ceil(10.0 / (q.gamma_m * h))) if burn_in is None else int(burn_in)
    total = burn + n_steps
    n, k, nt = sys.n_state, sys.n_channels, n_trajectories
    amp = source_amplitude if p.internal else source_amplitude / q.scales.length

    V = care_steady(sys) if freeze_covariance else ground_covariance(sys, q.hbar)
    K = gain(sys, V)
    C = sys.C
    inv = 1.0 / (math.sqrt(2.0) * h)
    if freeze_covariance:
        ex = exact_step(sys, K, h)
        PhiT, PsiT, FT = ex.Phi.T, ex.Psi.T, ex.factor.T
        n_draw = FT.shape[0]
    else:
        PhiT = linalg.expm(sys.A_mean * h).T
        n_draw = k
    gens = [np.random.default_rng(c) for c in np.random.SeedSequence(seed).spawn(nt)]

    rec = np.empty((nt, n_steps, k))
    means = np.empty((nt, n_steps, n)) if store_means else None
    incs = np.empty((nt, n_steps, k)) if store_increments else None
    m = np.zeros((nt, n))
    step = 0
    while step < total:
        L = min(CHUNK, total - step)
        z = np.stack([g.standard_normal((L, n_draw)) for g in gens])
        for i in range(L):
            force = None
            if pre_drive:
                force = _source_force(q, pre_source(q, step * h, amp, source_phase), n)
            if freeze_covariance:
                noise = z[:, i, :] @ FT
                xi, zeta, dW = noise[:, :n], noise[:, n:2 * n], noise[:, 2 * n:]
                integral = m @ PsiT + zeta
                m_next = m @ PhiT + xi
                if force is not None:
                    integral = integral + ex.Psi2 @ force
                    m_next = m_next + ex.Psi @ force
                y = integral @ C.T / h + dW * inv
            else:
                dW = z[:, i, :] * math.sqrt(h)
                y = m @ C.T + dW * inv
                kick = math.sqrt(2.0) * (dW @ K.T)
                if force is not None:
                    kick = kick + force * h
                m_next = (m + kick) @ PhiT
                V = _rk4_cov(sys, V, h)
                K = gain(sys, V)
            j = step - burn
            if j >= 0:
                rec[:, j, :] = y
                if store_means:
                    means[:, j, :] = m
                if store_increments:
                    incs[:, j, :] = dW
            m = m_next
            step += 1
        peak = np.abs(m).max() if m.size else 0.0
        if not np.isfinite(peak) or peak > MAX_NORM:
            bad = int(np.argmax(np.abs(m).max(axis=1)))
            raise SimulationError(f"unstable integration: |mean| = {peak:.3e} at step {step}, "
                                  f"trajectory {bad}, dt = {h:.3e} internal")
    rscale = 1.0 / math.sqrt(tscale)
    mscale = np.ones(n) if p.internal else np.tile([q.scales.length, q.scales.momentum], n // 2)
    out = []
    for j in range(nt):
        out.append(TrajectoryRecord(
            dt=h * tscale, n_steps=n_steps, seed=seed, burn_in=burn, labels=sys.labels,
            records=rec[j] * rscale,
            means=None if means is None else means[j] * mscale,
            increments=None if incs is None else incs[j] * math.sqrt(tscale),
            meta={"trajectory": j, "units": "internal" if p.internal else "si",
                  "scheme": "exact" if freeze_covariance else "exponential-em",
                  "covariance": V.copy()}))
    return out
