"""Physical parameters of the two-layer ocean basin model and derived constants.

Everything downstream works with nondimensional advection coefficients
(basin widths per year).  This module turns the dimensional basin
configuration into those coefficients, and computes the wave structure of
the hyperbolic part: characteristic speeds, delays, the eigenvector
transformation and the coupling matrices used by the delay models.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace, asdict

import numpy as np


class DegenerateSystemError(ValueError):
    """Raised when the advection matrix has complex or repeated eigenvalues."""


# Default basin configuration.  Lengths in m, times in s, temperatures in K,
# salinity in psu.  W is the zonal basin size at ~52N.
_DEFAULTS = dict(
    h1=600.0,
    h2=600.0,
    h3=3300.0,
    H=4500.0,
    W=4000e3,
    L=6500e3,
    Y=3.1536e7,
    kappa=2e3,
    g=9.8,
    f=1e-4,
    beta=1.5e-11,
    alpha_T=2e-4,
    alpha_S=7e-4,
    dT=-20.0,
    dS=-1.5,
    u_bar=1e-2,
    C=1.0,
    v_bar=0.0,
    w_bar=0.0,
)


@dataclass(frozen=True)
class PhysicalParams:
    """Dimensional configuration of the three-layer ocean basin.

    Attributes
    ----------
    h1, h2, h3 : float
        Layer thicknesses (m).  Must satisfy h1 + h2 + h3 == H.
    H : float
        Total ocean depth (m).
    W, L : float
        Zonal and meridional basin size (m).
    Y : float
        Time scale, one year (s).
    kappa : float
        Horizontal diffusivity (m^2/s).
    g : float
        Gravity (m/s^2).
    f : float
        Coriolis parameter (1/s).
    beta : float
        Planetary beta effect (1/(m s)).
    alpha_T, alpha_S : float
        Thermal expansion (1/K) and haline contraction (1/psu).
    dT, dS : float
        Meridional temperature (K) and salinity (psu) differences.
    u_bar : float
        Zonal background velocity (m/s).
    C : float
        Control parameter scaling the vertical temperature gradient.
    v_bar, w_bar : float
        Meridional and vertical background velocities (m/s); both zero in
        the base model, nonzero in the extended background state.
    """

    h1: float = _DEFAULTS["h1"]
    h2: float = _DEFAULTS["h2"]
    h3: float = _DEFAULTS["h3"]
    H: float = _DEFAULTS["H"]
    W: float = _DEFAULTS["W"]
    L: float = _DEFAULTS["L"]
    Y: float = _DEFAULTS["Y"]
    kappa: float = _DEFAULTS["kappa"]
    g: float = _DEFAULTS["g"]
    f: float = _DEFAULTS["f"]
    beta: float = _DEFAULTS["beta"]
    alpha_T: float = _DEFAULTS["alpha_T"]
    alpha_S: float = _DEFAULTS["alpha_S"]
    dT: float = _DEFAULTS["dT"]
    dS: float = _DEFAULTS["dS"]
    u_bar: float = _DEFAULTS["u_bar"]
    C: float = _DEFAULTS["C"]
    v_bar: float = _DEFAULTS["v_bar"]
    w_bar: float = _DEFAULTS["w_bar"]

    def __post_init__(self):
        for name in ("W", "L", "Y", "H", "h1", "h2", "h3"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be strictly positive, got {getattr(self, name)}")
        if self.f == 0.0:
            raise ValueError("Coriolis parameter f must be nonzero")
        if abs(self.h1 + self.h2 + self.h3 - self.H) > 1e-9 * self.H:
            raise ValueError(
                f"layer thicknesses must add up to the total depth: "
                f"{self.h1}+{self.h2}+{self.h3} != {self.H}"
            )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PhysicalParams":
        unknown = set(d) - set(_DEFAULTS)
        if unknown:
            raise ValueError(f"unknown parameter keys: {sorted(unknown)}")
        return cls(**{**_DEFAULTS, **d})


def load_config(path) -> tuple[PhysicalParams, float]:
    """Read a JSON config mirroring the physical-parameter field names.

    An optional ``alpha`` key sets the linear damping of the reduced model
    (default 0).  Returns ``(params, alpha)``.
    """
    with open(path) as fh:
        raw = json.load(fh)
    if not isinstance(raw, dict):
        raise ValueError("config must be a JSON object of parameter: value pairs")
    alpha = float(raw.pop("alpha", 0.0))
    params = PhysicalParams.from_dict({k: float(v) for k, v in raw.items()})
    return params, alpha


@dataclass(frozen=True)
class ModelCoeffs:
    """Nondimensional coefficients of the layered temperature model.

    a1, b1, c1 / a2, b2, c2 multiply the x-derivatives of T1, T2, T3 in the
    first / second layer equation (basin widths per year).  kappa_s is the
    nondimensional diffusivity, alpha the linear damping used in place of
    diffusion by the two-layer model, and beta1..beta3 the linear terms
    contributed by a background overturning circulation.
    """

    a1: float
    b1: float
    c1: float
    a2: float
    b2: float
    c2: float
    kappa_s: float
    alpha: float = 0.0
    beta1: float = 0.0
    beta2: float = 0.0
    beta3: float = 0.0

    @property
    def advection_matrix(self) -> np.ndarray:
        """The 2x2 matrix [[a1, b1], [a2, b2]] of the two-layer system."""
        return np.array([[self.a1, self.b1], [self.a2, self.b2]])

    def discriminant(self) -> float:
        return (self.a1 - self.b2) ** 2 + 4.0 * self.a2 * self.b1

    @classmethod
    def from_speeds(cls, a1, a2, b1, b2, alpha=0.0, **kw) -> "ModelCoeffs":
        """Build a coefficient set directly from the two-layer entries."""
        return cls(a1=a1, b1=b1, c1=0.0, a2=a2, b2=b2, c2=0.0,
                   kappa_s=0.0, alpha=alpha, **kw)


def derive_coeffs(p: PhysicalParams, alpha: float = 0.0) -> ModelCoeffs:
    """Nondimensionalize the basin configuration.

    The background temperature gradients are
    ``d_y T = (2/L) (dT - (alpha_S/alpha_T) dS)`` and
    ``d_z T = -(2 C/(h1+h2)) (dT - (alpha_S/alpha_T) dS)``; the advection
    coefficients combine thermal-wind and planetary-vorticity contributions
    of the three layers and are scaled by Y/W into basin widths per year.

    Parameters
    ----------
    p : PhysicalParams
    alpha : float
        Linear damping of the reduced two-layer model (1/year).  Free
        parameter, default 0.
    """
    delta = p.dT - (p.alpha_S / p.alpha_T) * p.dS
    dyT = 2.0 / p.L * delta
    dzT = -2.0 * p.C / (p.h1 + p.h2) * delta

    pref = p.alpha_T * p.g / (2.0 * p.H * p.f)
    bf = p.beta / (2.0 * p.f)
    h1, h2, h3 = p.h1, p.h2, p.h3
    scale = p.Y / p.W

    a1 = scale * (pref * (-h1 * (h2 + h3) * dyT + bf * h1**2 * (h2 + h3) * dzT) - p.u_bar)
    b1 = scale * pref * (-h2 * (h2 + 2 * h3) * dyT + bf * h1 * h2 * (h2 + 2 * h3) * dzT)
    c1 = scale * pref * (-h3**2 * dyT + bf * h1 * h3**2 * dzT)
    a2 = scale * pref * (h1**2 * dyT + bf * h1**2 * (h2 + 2 * h3) * dzT)
    b2 = scale * (pref * (-h2 * (h3 - h1) * dyT
                          + bf * (4 * h1 * h2 * h3 + h2**2 * (h1 + h3)) * dzT) - p.u_bar)
    c2 = scale * pref * (-h3**2 * dyT + bf * h3**2 * (2 * h1 + h2) * dzT)

    beta1 = p.Y * (p.beta / p.f * p.v_bar + 2.0 / h1 * p.w_bar)
    beta2 = -p.Y * 4.0 / h1 * p.w_bar
    beta3 = p.Y * (p.beta / p.f * p.v_bar + 2.0 / h2 * p.w_bar)

    return ModelCoeffs(a1=a1, b1=b1, c1=c1, a2=a2, b2=b2, c2=c2,
                       kappa_s=p.kappa * p.Y / p.W**2, alpha=alpha,
                       beta1=beta1, beta2=beta2, beta3=beta3)


def scale_basin_width(p: PhysicalParams, w_new: float) -> PhysicalParams:
    """Return a copy of ``p`` with the zonal basin size replaced (m).

    All advection coefficients scale as 1/W (kappa_s as 1/W^2), so the
    delays scale linearly with W.
    """
    if w_new <= 0.0:
        raise ValueError(f"basin width must be positive, got {w_new}")
    return replace(p, W=w_new)


@dataclass(frozen=True)
class WaveStructure:
    """Characteristic structure of the two-layer hyperbolic system.

    l_plus/l_minus are the fast and slow westward wave speeds (basin widths
    per year), tau_plus/tau_minus the corresponding basin-crossing delays
    (years).  T_P collects the eigenvectors [w, 1] column-wise; note the
    first T_P column is the slow (l_minus) eigenvector, the second the fast
    one.  C1 and C2 are the negatives of the spectral projectors onto the
    fast and slow eigenvector respectively, so that the delay-difference
    system reads T(t) = exp(-alpha tau+) C1 T(t-tau+)
    + exp(-alpha tau-) C2 T(t-tau-).  M_plus/M_minus are the coupling
    matrices of the memory integrand; they satisfy tau* M = A C per branch.
    """

    l_plus: float
    l_minus: float
    tau_plus: float
    tau_minus: float
    w_plus: float
    w_minus: float
    T_P: np.ndarray
    T_P_inv: np.ndarray
    C1: np.ndarray
    C2: np.ndarray
    M_plus: np.ndarray
    M_minus: np.ndarray

    def delay_matrix(self, branch: str, alpha: float) -> np.ndarray:
        """Delay coupling with the damping factor folded in."""
        if branch == "plus":
            return math.exp(-alpha * self.tau_plus) * self.C1
        if branch == "minus":
            return math.exp(-alpha * self.tau_minus) * self.C2
        raise ValueError(f"branch must be 'plus' or 'minus', got {branch!r}")


def derive_wave_structure(c: ModelCoeffs) -> WaveStructure:
    """Characteristic speeds, delays, eigen-transformation and couplings.

    Raises
    ------
    DegenerateSystemError
        If the discriminant (a1+b2)^2 - 4 a1 b2 + 4 a2 b1 is not strictly
        positive (complex or repeated characteristics are unsupported).
    """
    a1, b1, a2, b2 = c.a1, c.b1, c.a2, c.b2
    disc = c.discriminant()
    if disc <= 0.0:
        raise DegenerateSystemError(
            f"characteristic discriminant must be positive, got {disc:g}; "
            "the wave decomposition requires real distinct speeds"
        )
    s = math.sqrt(disc)
    l_plus = 0.5 * (a1 + b2 + s)
    l_minus = 0.5 * (a1 + b2 - s)
    if l_plus == 0.0 or l_minus == 0.0:
        raise DegenerateSystemError("zero characteristic speed, delays undefined")
    w_plus = (a1 - b2 + s) / (2.0 * a2) if a2 != 0.0 else math.inf
    w_minus = (a1 - b2 - s) / (2.0 * a2) if a2 != 0.0 else -math.inf

    if a2 == 0.0:
        # Triangular system: build the eigenvectors from the first row.
        def _eigvec(l):
            if abs(l - a1) > 1e-300:
                return np.array([b1 / (l - a1), 1.0])
            return np.array([1.0, 0.0])

        T_P = np.column_stack([_eigvec(l_minus), _eigvec(l_plus)])
        T_P_inv = np.linalg.inv(T_P)
    else:
        T_P = np.array([[(a1 - l_plus) / a2, (a1 - l_minus) / a2], [1.0, 1.0]])
        T_P_inv = np.array([
            [-a2 / (l_plus - l_minus), (a1 - l_minus) / (l_plus - l_minus)],
            [a2 / (l_plus - l_minus), (l_plus - a1) / (l_plus - l_minus)],
        ])

    # Negative spectral projectors of the advection matrix.
    C1 = -T_P @ np.diag([0.0, 1.0]) @ T_P_inv
    C2 = -T_P @ np.diag([1.0, 0.0]) @ T_P_inv

    # Memory-integrand coupling constants.
    if a2 != 0.0:
        den = w_plus - w_minus
        M_plus = np.array([
            [(a1 * w_plus + b1) * (-a1 + w_minus * a2),
             (a1 * w_plus + b1) * (-b1 + w_minus * b2)],
            [(a2 * w_plus + b2) * (-a1 + w_minus * a2),
             (a2 * w_plus + b2) * (-b1 + w_minus * b2)],
        ]) / den
        M_minus = -np.array([
            [(a1 * w_minus + b1) * (-a1 + w_plus * a2),
             (a1 * w_minus + b1) * (-b1 + w_plus * b2)],
            [(a2 * w_minus + b2) * (-a1 + w_plus * a2),
             (a2 * w_minus + b2) * (-b1 + w_plus * b2)],
        ]) / den
    else:
        # Same algebraic objects, computed from the projectors.
        M_plus = l_plus**2 * C1
        M_minus = l_minus**2 * C2

    return WaveStructure(
        l_plus=l_plus, l_minus=l_minus,
        tau_plus=1.0 / l_plus, tau_minus=1.0 / l_minus,
        w_plus=w_plus, w_minus=w_minus,
        T_P=T_P, T_P_inv=T_P_inv, C1=C1, C2=C2,
        M_plus=M_plus, M_minus=M_minus,
    )


@dataclass(frozen=True)
class ExpansionCoeffs:
    """Leading orders of the grid-dependent wave speeds of the extended model.

    With a background overturning switched on, the orthogonal-dynamics wave
    speeds acquire a dependence on the grid spacing dx; l0 is the dx -> 0
    speed and l1 the first-order correction (an effective extra damping of
    the corresponding mode when positive).
    """

    l0_plus: float
    l0_minus: float
    l1_plus: float
    l1_minus: float


def expansion_coeffs(c: ModelCoeffs) -> ExpansionCoeffs:
    """Zeroth- and first-order wave speeds of the extended-background model.

    The exact speeds are l(dx) = (a1 + b2 + dx (beta1+beta3)
    +- sqrt(A + B dx + C dx^2)) / 2 with A = (a1-b2)^2 + 4 a2 b1,
    B = 2((a1-b2)(beta1-beta3) + 2 a2 beta2), C = (beta1-beta3)^2; the
    returned l1 values are d l/d(dx) at dx = 0.
    """
    A = c.discriminant()
    if A <= 0.0:
        raise DegenerateSystemError(
            f"characteristic discriminant must be positive, got {A:g}"
        )
    sA = math.sqrt(A)
    B = 2.0 * ((c.a1 - c.b2) * (c.beta1 - c.beta3) + 2.0 * c.a2 * c.beta2)
    l0_plus = 0.5 * (c.a1 + c.b2 + sA)
    l0_minus = 0.5 * (c.a1 + c.b2 - sA)
    l1_plus = 0.5 * ((c.beta1 + c.beta3) + B / (2.0 * sA))
    l1_minus = 0.5 * ((c.beta1 + c.beta3) - B / (2.0 * sA))
    return ExpansionCoeffs(l0_plus=l0_plus, l0_minus=l0_minus,
                           l1_plus=l1_plus, l1_minus=l1_minus)
