"""Physical parameters, derived frequencies and unit conversion.

Everything downstream reads the flat quantities on :class:`ModelParams`
(``M``, ``hbar``, ``omega_m``, ``alpha`` ...).  Those are SI after
:func:`derive_params` and dimensionless (hbar = M = omega_q = 1) after
:meth:`ModelParams.to_internal`, so the same formulas serve both.
"""

from __future__ import annotations

import dataclasses
import enum
import math
from dataclasses import dataclass, field

import scipy.constants as const

HBAR = const.hbar
K_B = const.k
G_NEWTON = const.G
C_LIGHT = const.c


class ParameterError(ValueError):
    """Raised when inputs violate a physical invariant."""


class Configuration(str, enum.Enum):
    SELF = "self"
    FOLDED = "folded"
    LINEAR = "linear"


class Theory(str, enum.Enum):
    SN = "sn"
    QG = "qg"


class Prescription(str, enum.Enum):
    PRE = "pre"
    POST = "post"
    CAUSAL = "causal"


@dataclass(frozen=True)
class MechanicalParams:
    mass: float
    omega_m: float
    q_m: float
    temperature: float = 0.0
    gamma_m: float = field(init=False)

    def __post_init__(self):
        if not self.mass > 0:
            raise ParameterError(f"mass must satisfy M > 0, got {self.mass}")
        if not self.omega_m > 0:
            raise ParameterError(f"omega_m must satisfy omega_m > 0, got {self.omega_m}")
        if not self.q_m > 0:
            raise ParameterError(f"q_m must satisfy Q_m > 0, got {self.q_m}")
        if not self.temperature >= 0:
            raise ParameterError(f"temperature must satisfy T >= 0, got {self.temperature}")
        object.__setattr__(self, "gamma_m", self.omega_m / self.q_m)


@dataclass(frozen=True)
class GravityParams:
    """Gravity model.  ``omega_sn`` is used in self-gravity mode; mutual
    modes take either ``coupling`` (N/m) or ``omega_g`` (rad/s)."""

    configuration: Configuration = Configuration.SELF
    theory: Theory = Theory.SN
    prescription: Prescription = Prescription.CAUSAL
    omega_sn: float = 0.0
    coupling: float | None = None
    omega_g: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "configuration", Configuration(self.configuration))
        object.__setattr__(self, "theory", Theory(self.theory))
        object.__setattr__(self, "prescription", Prescription(self.prescription))
        # all prescriptions coincide for quantum gravity
        if self.theory is Theory.QG:
            object.__setattr__(self, "prescription", Prescription.CAUSAL)
        if self.omega_sn < 0:
            raise ParameterError(f"omega_sn must be >= 0, got {self.omega_sn}")
        if self.coupling is not None and self.coupling < 0:
            raise ParameterError(f"coupling must be >= 0, got {self.coupling}")
        if self.omega_g is not None and self.omega_g < 0:
            raise ParameterError(f"omega_g must be >= 0, got {self.omega_g}")
        if self.coupling is not None and self.omega_g is not None:
            raise ParameterError("give either coupling or omega_g, not both")


@dataclass(frozen=True)
class MeasurementParams:
    alpha: float | None = None
    theta_a: float = math.pi / 2
    theta_b: float = math.pi / 2
    p_cav: float | None = None
    finesse: float | None = None
    wavelength: float | None = None

    def __post_init__(self):
        if self.alpha is not None and self.alpha < 0:
            raise ParameterError(f"alpha must be >= 0, got {self.alpha}")
        for name in ("theta_a", "theta_b"):
            th = getattr(self, name)
            if not 0 <= th < 2 * math.pi:
                raise ParameterError(f"{name} must lie in [0, 2*pi), got {th}")
        cavity = (self.p_cav, self.finesse, self.wavelength)
        given = [v is not None for v in cavity]
        if any(given) and not all(given):
            raise ParameterError("cavity inputs need all of p_cav, finesse, wavelength")
        if all(given) and min(cavity) <= 0:
            raise ParameterError("cavity inputs must be positive")
        if self.alpha is not None and all(given):
            raise ParameterError("give either alpha or the cavity inputs, not both")
        if self.alpha is None and not all(given):
            raise ParameterError("missing measurement strength: give alpha or p_cav/finesse/wavelength")


@dataclass(frozen=True)
class SNLatticeInputs:
    m: float
    x_zp: float
    G: float = G_NEWTON

    def __post_init__(self):
        if not (self.m > 0 and self.x_zp > 0):
            raise ParameterError("lattice inputs need m > 0 and x_zp > 0")


@dataclass(frozen=True)
class UnitScales:
    """SI size of one internal unit."""

    time: float
    length: float
    momentum: float
    energy: float
    mass: float

    @property
    def frequency(self):
        return 1.0 / self.time


SI_SCALES = UnitScales(1.0, 1.0, 1.0, 1.0, 1.0)


@dataclass(frozen=True)
class ModelParams:
    mech: MechanicalParams
    grav: GravityParams
    meas: MeasurementParams
    alpha: float
    omega_q: float
    omega_g: float
    omega_minus: float | None
    Lambda: float
    beta: float
    hbar: float = HBAR
    k_B: float = K_B
    internal: bool = False
    scales: UnitScales = SI_SCALES

    # flat accessors used by every formula
    @property
    def M(self):
        return self.mech.mass

    @property
    def omega_m(self):
        return self.mech.omega_m

    @property
    def gamma_m(self):
        return self.mech.gamma_m

    @property
    def q_m(self):
        return self.mech.q_m

    @property
    def temperature(self):
        return self.mech.temperature

    @property
    def omega_sn(self):
        return self.grav.omega_sn

    @property
    def configuration(self):
        return self.grav.configuration

    @property
    def theory(self):
        return self.grav.theory

    @property
    def prescription(self):
        return self.grav.prescription

    @property
    def mutual(self):
        return self.grav.configuration is not Configuration.SELF

    @property
    def coupling(self):
        """Mutual SN coefficient C = M omega_g^2 / 2."""
        return 0.5 * self.M * self.omega_g**2

    @property
    def thermal_diffusion(self):
        """Momentum diffusion 2 M gamma_m k_B T of the Brownian bath."""
        return 2.0 * self.M * self.gamma_m * self.k_B * self.temperature

    def with_gravity(self, **changes) -> ModelParams:
        return derive_params(self.mech, dataclasses.replace(self.grav, **changes), self.meas,
                             _units=self)

    def with_theory(self, theory, prescription=Prescription.CAUSAL) -> ModelParams:
        return self.with_gravity(theory=Theory(theory), prescription=Prescription(prescription))

    def with_mech(self, **changes) -> ModelParams:
        return derive_params(dataclasses.replace(self.mech, **changes), self.grav, self.meas,
                             _units=self)

    def with_meas(self, **changes) -> ModelParams:
        return derive_params(self.mech, self.grav, dataclasses.replace(self.meas, **changes),
                             _units=self)

    def to_internal(self) -> ModelParams:
        """Rescale to hbar = M = omega_q = 1 (and k_B = 1)."""
        if self.internal:
            return self
        t = 1.0 / self.omega_q
        L = math.sqrt(self.hbar / (self.M * self.omega_q))
        P = math.sqrt(self.hbar * self.M * self.omega_q)
        E = self.hbar * self.omega_q
        s = UnitScales(time=t, length=L, momentum=P, energy=E, mass=self.M)
        return _rescale(self, s, to_internal=True)

    def to_si(self) -> ModelParams:
        if not self.internal:
            return self
        return _rescale(self, self.scales, to_internal=False)


def _rescale(p: ModelParams, s: UnitScales, to_internal: bool) -> ModelParams:
    f = (lambda v, scale: v / scale) if to_internal else (lambda v, scale: v * scale)
    temp_scale = s.energy / K_B
    mech = MechanicalParams(
        mass=f(p.M, s.mass),
        omega_m=f(p.omega_m, s.frequency),
        q_m=p.q_m,
        temperature=f(p.temperature, temp_scale),
    )
    grav = dataclasses.replace(p.grav, omega_sn=f(p.omega_sn, s.frequency),
                               coupling=None, omega_g=f(p.omega_g, s.frequency))
    # alpha carries 1/(length sqrt(time))
    alpha_scale = 1.0 / (s.length * math.sqrt(s.time))
    meas = MeasurementParams(alpha=f(p.alpha, alpha_scale), theta_a=p.meas.theta_a,
                             theta_b=p.meas.theta_b)
    return ModelParams(
        mech=mech,
        grav=grav,
        meas=meas,
        alpha=meas.alpha,
        omega_q=f(p.omega_q, s.frequency),
        omega_g=grav.omega_g,
        omega_minus=None if p.omega_minus is None else f(p.omega_minus, s.frequency),
        Lambda=p.Lambda,
        beta=p.beta,
        hbar=1.0 if to_internal else HBAR,
        k_B=1.0 if to_internal else K_B,
        internal=to_internal,
        scales=s if to_internal else SI_SCALES,
    )


def sn_frequency(inputs: SNLatticeInputs) -> float:
    """Self-gravity frequency sqrt(G m / (6 sqrt(pi) x_zp^3))."""
    return math.sqrt(inputs.G * inputs.m / (6.0 * math.sqrt(math.pi) * inputs.x_zp**3))


def alpha_from_cavity(p_cav, finesse, wavelength, mass=None, omega_m=None):
    """Readout strength of a resonant Fabry-Perot cavity,
    alpha = (8F/lambda) sqrt(P_cav / (hbar omega_c)),  omega_c = 2 pi c / lambda.

    ``mass`` and ``omega_m`` do not enter this relation; they are accepted so
    callers can pass a full mechanical description.
    """
    for name, v in (("p_cav", p_cav), ("finesse", finesse), ("wavelength", wavelength)):
        if not v > 0:
            raise ParameterError(f"{name} must be positive, got {v}")
    omega_c = 2.0 * math.pi * C_LIGHT / wavelength
    return (8.0 * finesse / wavelength) * math.sqrt(p_cav / (HBAR * omega_c))


def derive_params(mech: MechanicalParams, grav: GravityParams, meas: MeasurementParams,
                  *, _units: ModelParams | None = None) -> ModelParams:
    """Populate every derived quantity.

    ``_units`` lets the ``with_*`` helpers keep the unit system of an existing
    parameter set.
    """
    hbar, k_B, internal, scales = HBAR, K_B, False, SI_SCALES
    if _units is not None:
        hbar, k_B, internal, scales = _units.hbar, _units.k_B, _units.internal, _units.scales

    if meas.alpha is not None:
        alpha = meas.alpha
    else:
        if internal:
            raise ParameterError("cavity inputs are SI only; give alpha in internal units")
        alpha = alpha_from_cavity(meas.p_cav, meas.finesse, meas.wavelength)

    M, wm = mech.mass, mech.omega_m
    omega_minus = None
    if grav.configuration is Configuration.SELF:
        omega_g = 0.0
        omega_sn = 0.0 if grav.theory is Theory.QG else grav.omega_sn
        omega_q = math.sqrt(wm**2 + omega_sn**2)
    else:
        if grav.omega_g is not None:
            omega_g = grav.omega_g
        elif grav.coupling is not None:
            omega_g = math.sqrt(2.0 * grav.coupling / M)
        else:
            omega_g = 0.0
        if not wm**2 > 2.0 * omega_g**2:
            raise ParameterError(
                f"mutual mode needs omega_m^2 > 2 omega_g^2 (got {wm**2!r} <= {2 * omega_g**2!r})")
        omega_q = math.sqrt(wm**2 - omega_g**2)
        omega_minus = math.sqrt(wm**2 - 2.0 * omega_g**2)

    Lam = math.sqrt(hbar * alpha**2 / (M * omega_q**2))
    # dimensionless spectral coupling hbar alpha^2 / (M gamma_m omega_q)
    beta = hbar * alpha**2 / (M * mech.gamma_m * omega_q)
    return ModelParams(mech=mech, grav=grav, meas=dataclasses.replace(meas), alpha=alpha,
                       omega_q=omega_q, omega_g=omega_g, omega_minus=omega_minus,
                       Lambda=Lam, beta=beta, hbar=hbar, k_B=k_B, internal=internal,
                       scales=scales)


def internal_params(omega_m=1.0, q_m=1e3, Lambda=1.0, omega_sn=0.0, omega_g=None,
                    temperature=0.0, configuration=Configuration.SELF, theory=Theory.SN,
                    prescription=Prescription.CAUSAL, theta_a=math.pi / 2, theta_b=math.pi / 2):
    """Desk-scale parameters directly in units hbar = M = k_B = 1.

    ``Lambda`` is the dimensionless strength at the resulting omega_q.
    """
    grav = GravityParams(configuration=configuration, theory=theory, prescription=prescription,
                         omega_sn=omega_sn, omega_g=omega_g)
    mech = MechanicalParams(mass=1.0, omega_m=omega_m, q_m=q_m, temperature=temperature)
    unit = ModelParams(mech=mech, grav=grav, meas=MeasurementParams(alpha=0.0), alpha=0.0,
                       omega_q=1.0, omega_g=0.0, omega_minus=None, Lambda=0.0, beta=0.0,
                       hbar=1.0, k_B=1.0, internal=True, scales=SI_SCALES)
    probe = derive_params(mech, grav, MeasurementParams(alpha=0.0, theta_a=theta_a,
                                                        theta_b=theta_b), _units=unit)
    alpha = Lambda * probe.omega_q
    return probe.with_meas(alpha=alpha)


def table_one(theory=Theory.SN, prescription=Prescription.CAUSAL, temperature=0.0):
    """Single-mirror self-gravity parameter set."""
    mech = MechanicalParams(mass=0.2, omega_m=2 * math.pi * 4e-3, q_m=1e7,
                            temperature=temperature)
    grav = GravityParams(Configuration.SELF, theory, prescription,
                         omega_sn=2 * math.pi * 7.8e-2)
    meas = MeasurementParams(p_cav=480e-9, finesse=300.0, wavelength=1064e-9)
    return derive_params(mech, grav, meas)


def table_two(configuration=Configuration.LINEAR, theory=Theory.SN,
              prescription=Prescription.CAUSAL, temperature=300.0, q_m=3e7, p_cav=2000.0):
    """Two-mirror mutual-gravity parameter set."""
    mech = MechanicalParams(mass=1e-3, omega_m=2 * math.pi * 0.5, q_m=q_m,
                            temperature=temperature)
    grav = GravityParams(configuration, theory, prescription, omega_g=2 * math.pi * 2e-4)
    meas = MeasurementParams(p_cav=p_cav, finesse=4000.0, wavelength=1064e-9)
    return derive_params(mech, grav, meas)
