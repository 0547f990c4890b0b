"""Closed-form output spectra, correlation levels and SN-vs-QG differences.

All spectra are two-sided and shot-noise normalized: with the measurement
switched off every auto-spectrum equals 1.  Cross-spectra use the convention
S_AB = <y_A^* y_B>.

Two evaluation forms are offered where it matters:

* ``"printed"``: the leading-order, high-Q closed forms.
* ``"exact"``: the innovations representation of the linear-Gaussian
  conditional dynamics, T(W) = I + 2 C (-iW - A)^-1 K, S = conj(T) T^T.
  It includes damping, thermal noise and any homodyne angle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import Configuration, ModelParams, Prescription, Theory
from .riccati import CovarianceSingle, care_steady, closed_form_steady
from .systems import build_system, single_system, spectral_matrix

PAIRS = {"A2B2": (math.pi / 2, math.pi / 2), "A1B2": (0.0, math.pi / 2)}


@dataclass
class SpectrumCurve:
    omega: np.ndarray
    values: np.ndarray
    channel: str
    theory: str = ""
    prescription: str = ""
    provenance: str = "analytic"
    form: str = "exact"
    stderr: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.omega = np.asarray(self.omega, dtype=float)
        self.values = np.asarray(self.values)
        if self.values.shape != self.omega.shape:
            raise ValueError("values and frequency grid differ in shape")

    @property
    def is_cross(self):
        return np.iscomplexobj(self.values)


def _labels(p: ModelParams):
    pres = "" if p.theory is Theory.QG else p.prescription.value
    return p.theory.value, pres


def _internal(p: ModelParams, omega):
    """Internal-unit copy of ``p`` and the grid expressed in its time unit."""
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    if p.internal:
        return p, omega
    q = p.to_internal()
    return q, omega * q.scales.time


def chi(omega, omega0, gamma):
    """Mechanical response 1 / (omega0^2 - W^2 - i W gamma)."""
    omega = np.asarray(omega, dtype=float)
    return 1.0 / (omega0**2 - omega**2 - 1j * omega * gamma)


def _refine(centres, gamma, span, n):
    return [np.linspace(c - span * gamma, c + span * gamma, n) for c in centres if c > 0]


def default_grid(p: ModelParams, n_log=2000, n_lin=401, span=10.0):
    """Log-spaced grid over [0.3 w_-, 3 w_m] plus linear refinement of
    +-``span`` linewidths around every resonance.  The landmark frequencies
    themselves are always grid points."""
    lo = p.omega_minus if p.mutual and p.omega_minus else min(p.omega_m, p.omega_q)
    hi = max(p.omega_m, p.omega_q)
    centres = sorted({p.omega_m, p.omega_q} | ({p.omega_minus} if p.mutual and p.omega_minus else set()))
    parts = [np.geomspace(0.3 * lo, 3.0 * hi, n_log), np.array(centres)]
    parts += _refine(centres, p.gamma_m, span, n_lin)
    grid = np.unique(np.concatenate(parts))
    return grid[grid > 0]


# ---------------------------------------------------------------- self gravity

def causal_spectrum_high_q(omega, alpha, M, omega_m, gamma, V):
    """Phase-quadrature spectrum of the conditional mean in the high-Q limit.

    ``V`` is the steady conditional covariance (xx, xp, pp); the mean
    oscillates at ``omega_m`` whatever frequency set V.
    """
    omega = np.asarray(omega, dtype=float)
    r2 = omega**2 / omega_m**2
    a2 = alpha * alpha
    bracket = (a2 * V.xp / M * (1.0 - r2)
               + a2 * a2 * (V.xp**2 / (M**2 * omega_m**2) + r2 * V.xx**2))
    return 1.0 + 4.0 / (gamma**2 + 4.0 * (omega - omega_m) ** 2) * bracket


def brownian_term(omega, alpha, M, omega_m, gamma, kT):
    """Thermal force 2 M gamma kT filtered by chi_m, in shot-noise units."""
    return 4.0 * alpha**2 * gamma * kT / M * np.abs(chi(omega, omega_m, gamma)) ** 2


def selection_signature(p: ModelParams, prescription, omega):
    """Pre/post-selection Lorentzian Delta S around w_q.

    Vanishes identically with gravity off: the feature comes from the
    restoring force M w_SN^2 (<x>_pre/post - <x>_c).
    """
    omega = np.asarray(omega, dtype=float)
    prescription = Prescription(prescription)
    if p.omega_sn == 0.0 or p.theory is Theory.QG:
        return np.zeros_like(omega)
    b, g = p.beta, p.gamma_m
    if prescription is Prescription.PRE:
        return b * (b + 2) * g**2 / (g**2 + 4 * (omega - p.omega_q) ** 2)
    if prescription is Prescription.POST:
        return -b * (b + 2) * g**2 / ((1 + b) ** 2 * g**2 + 4 * (omega - p.omega_q) ** 2)
    raise ValueError("selection signature exists only for pre/post-selection")


def _single_exact(p: ModelParams, omega, theta, mode="+"):
    q, w = _internal(p, omega)
    sys = build_system(q, theta=theta, mode=mode)
    return spectral_matrix(sys, care_steady(sys), w)[:, 0, 0].real


def _causal_printed(p: ModelParams, omega, thermal):
    if p.theory is Theory.QG:
        w_mean, w_cov = p.omega_m, p.omega_m
    else:
        w_mean, w_cov = p.omega_m, p.omega_q
    base = p if thermal == "covariance" else p.with_mech(temperature=0.0)
    if base.temperature == 0.0:
        V = closed_form_steady(base, w_cov)
    else:
        sys = single_system(base, math.pi / 2, w_cov, w_cov)
        V = CovarianceSingle.from_matrix(care_steady(sys))
    S = causal_spectrum_high_q(omega, p.alpha, p.M, w_mean, p.gamma_m, V)
    if thermal == "brownian" and p.temperature > 0:
        S = S + brownian_term(omega, p.alpha, p.M, w_mean, p.gamma_m, p.k_B * p.temperature)
    return S


def self_spectrum_analytic(p: ModelParams, prescription=None, omega=None, form="exact",
                           theta=None, thermal="covariance") -> SpectrumCurve:
    """Output auto-spectrum of a single self-gravitating mirror.

    ``prescription`` overrides the one in ``p`` (ignored for QG).  Pre- and
    post-selection are returned as the no-gravity baseline plus the selection
    signature.  ``form='printed'`` uses the high-Q phase-quadrature formula;
    ``form='exact'`` the full linear-Gaussian spectrum at angle ``theta``.
    ``thermal`` chooses how the printed form carries the bath: through the
    conditional covariance ('covariance') or as a filtered Brownian force
    added to the zero-temperature curve ('brownian').
    """
    if p.mutual:
        raise ValueError("self_spectrum_analytic needs a single-mirror configuration")
    if prescription is not None and p.theory is Theory.SN:
        p = p.with_gravity(prescription=Prescription(prescription))
    omega = default_grid(p) if omega is None else np.atleast_1d(np.asarray(omega, dtype=float))
    theta = p.meas.theta_a if theta is None else theta
    if form not in ("exact", "printed"):
        raise ValueError(f"unknown form {form!r}")
    if form == "printed" and not math.isclose(math.sin(theta), 1.0, abs_tol=1e-15):
        raise ValueError("the printed form is for the phase quadrature only")
    theory, pres = _labels(p)
    selection = p.theory is Theory.SN and p.prescription is not Prescription.CAUSAL
    core = p.with_theory(Theory.QG) if selection else p
    if form == "exact":
        S = _single_exact(core, omega, theta)
    else:
        S = _causal_printed(core, omega, thermal)
    if selection:
        S = S + selection_signature(p, p.prescription, omega)
    return SpectrumCurve(omega, S, channel="a2a2", theory=theory, prescription=pres, form=form)


def preselection_spectrum_exact(p: ModelParams, omega=None, theta=None) -> SpectrumCurve:
    """Spectrum of the pre-selection state-space model (deterministic zero
    source, mean restoring at w_q); what a pre-selection simulation estimates."""
    p = p.with_gravity(prescription=Prescription.PRE)
    omega = default_grid(p) if omega is None else np.atleast_1d(np.asarray(omega, dtype=float))
    theta = p.meas.theta_a if theta is None else theta
    return SpectrumCurve(omega, _single_exact(p, omega, theta), channel="a2a2",
                         theory="sn", prescription="pre", form="exact")


def resonance_ratio_sn_qg(p: ModelParams):
    """(Delta S^{SN-QG}(w_m) / S^QG(w_m), V_xx^SN / V_xx^QG) in the high-Q limit.

    The first value follows from the printed high-Q spectrum: at resonance the
    QG bracket sums to exactly 1/4 while the SN one falls short, giving
    -2/(1+sqrt(1+L_SN^4)) * L_QG^4 Q^2/(1+L_QG^4 Q^2) * w_SN^2/w_q^2.
    """
    if p.mutual:
        raise ValueError("resonance ratio is defined for self gravity")
    hb, M = p.hbar, p.M
    L_sn = math.sqrt(hb * p.alpha**2 / (M * p.omega_q**2))
    L_qg = math.sqrt(hb * p.alpha**2 / (M * p.omega_m**2))
    r_sn = math.sqrt(1 + L_sn**4)
    r_qg = math.sqrt(1 + L_qg**4)
    x = L_qg**4 * p.q_m**2
    ratio = -2.0 / (1.0 + r_sn) * x / (1.0 + x) * p.omega_sn**2 / p.omega_q**2
    vratio = p.omega_m / p.omega_q * math.sqrt((1 + r_qg) / (1 + r_sn))
    return ratio, vratio


# -------------------------------------------------------------- mutual gravity

def _lam_terms(p: ModelParams, omega):
    L4 = (p.hbar * p.alpha**2 / (p.M * p.omega_q**2)) ** 2
    r = 1.0 + math.sqrt(1.0 + L4)
    return r, L4 / r + 2.0 * omega**2 / p.omega_q**2


def _mutual_printed(p: ModelParams, pair, omega, decoupled=False):
    g, wq, wg = p.gamma_m, p.omega_q, p.omega_g
    w_plus, w_minus = p.omega_m, p.omega_minus
    if decoupled:
        # pre-selected means: no gravitational cross-talk, both modes at w_q
        w_plus = w_minus = wq
        wg = 0.0
    cm = chi(omega, w_plus, g)
    cg = chi(omega, w_minus, g)
    r, bracket = _lam_terms(p, omega)
    amp = (p.hbar * p.alpha**2 / p.M) ** 2 * np.abs(cm * cg) ** 2
    detune = (wq**2 - omega**2) ** 2 + g**2 * (omega**2 + wq**2) / 2
    if pair == "A2B2":
        S_ab = (2 * amp * wg**2 * (wq**2 - omega**2) / r * bracket).astype(complex)
        S_aa = 1.0 + amp * (wg**4 + detune) / r * bracket
        return S_ab, S_aa, S_aa.copy()
    S_ab = p.hbar * p.alpha**2 * wg**2 / p.M * cm * cg
    S_bb = 1.0 + amp * (wg**4 + detune / r * bracket)
    return S_ab, np.ones_like(omega), S_bb


def _mutual_exact(p: ModelParams, pair, omega):
    q, w = _internal(p, omega)
    sys = build_system(q, theta=PAIRS[pair])
    S = spectral_matrix(sys, care_steady(sys), w)
    return S[:, 0, 1], S[:, 0, 0].real, S[:, 1, 1].real


def mutual_spectra_analytic(p: ModelParams, pair="A2B2", omega=None, form="printed"):
    """{'S_AB', 'S_AA', 'S_BB'} curves for the linear-cavity pair of quadratures.

    ``pair`` is 'A2B2' (phase, phase) or 'A1B2' (amplitude of A, phase of B).
    The printed leading-order forms serve SN causal and QG alike (their
    difference is below leading order).  Pre-selection has no gravitational
    cross-talk: both mirrors respond at w_q and S_AB = 0.  Post-selection is only
    defined here with gravity off, where every prescription coincides.
    """
    if not p.mutual:
        raise ValueError("mutual spectra need a two-mirror configuration")
    if pair not in PAIRS:
        raise ValueError(f"pair must be one of {sorted(PAIRS)}, got {pair!r}")
    if form not in ("exact", "printed"):
        raise ValueError(f"unknown form {form!r}")
    omega = default_grid(p) if omega is None else np.atleast_1d(np.asarray(omega, dtype=float))
    theory, pres = _labels(p)
    q = p
    if p.theory is Theory.SN and p.prescription is Prescription.POST:
        if p.omega_g != 0.0:
            raise NotImplementedError("post-selection mutual-gravity spectra are not available")
        q = p.with_theory(Theory.QG)
    pre = q.theory is Theory.SN and q.prescription is Prescription.PRE
    if form == "printed":
        S_ab, S_aa, S_bb = _mutual_printed(q, pair, omega, decoupled=pre)
    else:
        S_ab, S_aa, S_bb = _mutual_exact(q, pair, omega)
    a, b = pair[:2], pair[2:]
    mk = lambda v, ch: SpectrumCurve(omega, v, channel=ch, theory=theory,
                                      prescription=pres, form=form)
    return {"S_AB": mk(S_ab, a + b), "S_AA": mk(S_aa, a + a), "S_BB": mk(S_bb, b + b)}


def _vals(x):
    return x.values if isinstance(x, SpectrumCurve) else np.asarray(x)


def coherence(S_ab, S_aa, S_bb, tol=1e-12):
    ab, aa, bb = _vals(S_ab), np.real(_vals(S_aa)), np.real(_vals(S_bb))
    if np.any(aa <= 0) or np.any(bb <= 0):
        raise ValueError("auto-spectra must be positive")
    coh = np.abs(ab) ** 2 / (aa * bb)
    if np.any(coh > 1.0 + tol):
        raise ValueError(f"coherence exceeds 1 (max {coh.max():.17g}): inconsistent spectra")
    return np.minimum(coh, 1.0)


def correlation_level(S_ab, S_aa, S_bb, tol=1e-12):
    """C = -10 log10(1 - |S_AB|^2 / (S_AA S_BB)) in dB."""
    arg = np.maximum(1.0 - coherence(S_ab, S_aa, S_bb, tol), np.finfo(float).tiny)
    C = -10.0 * np.log10(arg)
    if isinstance(S_ab, SpectrumCurve):
        return SpectrumCurve(S_ab.omega, C, channel="C_" + S_ab.channel.upper(),
                             theory=S_ab.theory, prescription=S_ab.prescription,
                             provenance=S_ab.provenance, form=S_ab.form)
    return C


def correlation_level_approx(p: ModelParams, pair="A2B2", omega=None):
    """Leading-order correlation levels (dB) for the two quadrature pairs."""
    omega = default_grid(p) if omega is None else np.asarray(omega, dtype=float)
    g, wq, wg = p.gamma_m, p.omega_q, p.omega_g
    detune = (wq**2 - omega**2) ** 2 + g**2 * (omega**2 + wq**2) / 2
    if pair == "A2B2":
        coh = (2 * wg**2 * (wq**2 - omega**2) / (wg**4 + detune)) ** 2
    elif pair == "A1B2":
        r, bracket = _lam_terms(p, omega)
        coh = 1.0 / (1.0 + detune / (wg**4 * r) * bracket)
    else:
        raise ValueError(f"unknown pair {pair!r}")
    return -10.0 * np.log10(np.maximum(1.0 - coh, np.finfo(float).tiny))


def sn_qg_difference(p: ModelParams, pair="A2B2", omega=None, form="printed",
                     strong_lambda=10.0) -> SpectrumCurve:
    """SN-causal minus QG relative conditional variance of the B-side phase
    output given the partner record.

    Printed forms: the A2B2 expression everywhere, the A1B2 expression when
    Lambda >= ``strong_lambda``.  Otherwise (or with ``form='exact'``) the
    difference is evaluated from the exact spectra: the relative conditional
    variance is minus the coherence, so the difference is coh_QG - coh_SN.
    """
    if not p.mutual:
        raise ValueError("SN-QG difference needs a two-mirror configuration")
    omega = default_grid(p) if omega is None else np.atleast_1d(np.asarray(omega, dtype=float))
    g, wg = p.gamma_m, p.omega_g
    if form == "printed" and (pair == "A2B2" or p.Lambda >= strong_lambda):
        wt2 = (omega**2 - p.omega_q**2) / wg**2
        if pair == "A2B2":
            d = (wt2 / (wt2**2 + 4 * (p.omega_m / wg) ** 2)) ** 3 * 4 * g**2 / wg**2
        else:
            d = 0.5 * wt2 / (wt2**2 + 1) * g**2 / wg**2
        used = "printed"
    else:
        sn = p.with_theory(Theory.SN, Prescription.CAUSAL)
        qg = p.with_theory(Theory.QG)
        d = (coherence(*_mutual_exact(qg, pair, omega))
             - coherence(*_mutual_exact(sn, pair, omega)))
        used = "exact"
    return SpectrumCurve(omega, d, channel="dSN-QG_" + pair, theory="sn-qg",
                         prescription="causal", form=used)
