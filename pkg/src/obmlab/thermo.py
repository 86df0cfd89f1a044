"""Equation of state, entropy, and transport coefficients.

The gas model combines a molecular part, generated by a structural function
P acting on the degeneracy variable Z = rho / theta**(3/2), with a radiative
part proportional to theta**4:

    p(rho, theta)     = theta**(5/2) * P(Z) + (a/3) * theta**4
    rho * e(rho, theta) = (3/2) * theta**(5/2) * P(Z) + a * theta**4
    s(rho, theta)     = S(Z) + (4*a/3) * theta**3 / rho

with S'(Z) = -(3/2) * (ated := (5/3) * P(Z) - P'(Z) * Z) / Z**2.  The default
structural function

    P(Z) = Z + p_inf * Z**(5/3)

keeps everything in closed form: p = rho*theta + p_inf*rho**(5/3) + (a/3)*theta**4
and S(Z) = s0 - log(Z).  The molecular pressure-energy relation
p_M = (2/3) * rho * e_M and the Gibbs relation

    theta * Ds = De + p * D(1/rho)

hold identically and are re-checked numerically by :func:`thermo_check`.

All evaluation functions are numpy-vectorized, accept floats or arrays, and
raise :class:`ThermoDomainError` outside their physical domain.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol

import numpy as np

__all__ = [
    "ThermoDomainError",
    "GasParams",
    "ReferenceState",
    "ThermoPoint",
    "PStructure",
    "DefaultPStructure",
    "structural_P",
    "pressure",
    "internal_energy",
    "entropy",
    "rho_e_total",
    "rho_s_total",
    "dp_drho",
    "dp_dtheta",
    "de_drho",
    "de_dtheta",
    "ds_drho",
    "ds_dtheta",
    "gibbs_residual",
    "alpha_cp",
    "cancellation_summands",
    "heat_flux_identity_residual",
    "mu",
    "eta",
    "kappa",
    "zeta",
    "theta_from_rho_S",
    "thermo_check",
    "ThermoCheckReport",
]


class ThermoDomainError(ValueError):
    """Raised when state variables leave the physical domain."""


def _arr(x) -> np.ndarray:
    return np.asarray(x, dtype=float)


@dataclass(frozen=True)
class GasParams:
    """Constants of the gas model and its transport laws.

    p_inf scales the degenerate (cold-pressure) component, a the radiative
    component, s0 the entropy additive constant.  Transport laws are affine
    in temperature,

        mu(theta)    = mu_low    * (1 + theta)
        eta(theta)   = 0
        kappa(theta) = kappa_low * (1 + theta**beta)
        zeta(theta)  = zeta_low  * (1 + theta)

    which sit on the lower envelope of the admissible two-sided growth
    bounds; the *_high constants define the upper envelope used only for
    validation.
    """

    p_inf: float = 1.0
    a: float = 0.0
    s0: float = 0.0
    mu_low: float = 0.05
    mu_high: float = 0.05
    eta_high: float = 0.0
    kappa_low: float = 0.05
    kappa_high: float = 0.05
    beta: float = 3.0
    zeta_low: float = 0.05
    zeta_high: float = 0.05

    def __post_init__(self) -> None:
        if not self.p_inf > 0:
            raise ThermoDomainError(f"p_inf must be > 0, got {self.p_inf}")
        if not self.a >= 0:
            raise ThermoDomainError(f"a must be >= 0, got {self.a}")
        if not 0 < self.mu_low <= self.mu_high:
            raise ThermoDomainError("need 0 < mu_low <= mu_high")
        if not self.eta_high >= 0:
            raise ThermoDomainError("eta_high must be >= 0")
        if not 0 < self.kappa_low <= self.kappa_high:
            raise ThermoDomainError("need 0 < kappa_low <= kappa_high")
        if not self.beta > 0:
            raise ThermoDomainError(f"beta must be > 0, got {self.beta}")
        if not 0 < self.zeta_low <= self.zeta_high:
            raise ThermoDomainError("need 0 < zeta_low <= zeta_high")

    def structure(self) -> "DefaultPStructure":
        return DefaultPStructure(p_inf=self.p_inf, s0=self.s0)


@dataclass(frozen=True)
class ReferenceState:
    """Constant background state the scaled system expands around."""

    rho_bar: float = 1.0
    theta_bar: float = 1.0
    b_bar: float = 0.5

    def __post_init__(self) -> None:
        if not self.rho_bar > 0:
            raise ThermoDomainError(f"rho_bar must be > 0, got {self.rho_bar}")
        if not self.theta_bar > 0:
            raise ThermoDomainError(f"theta_bar must be > 0, got {self.theta_bar}")


@dataclass(frozen=True)
class ThermoPoint:
    """A validated (rho, theta) state point."""

    rho: float
    theta: float

    def __post_init__(self) -> None:
        if not np.isfinite(self.rho) or not np.isfinite(self.theta):
            raise ThermoDomainError("non-finite state point")
        if not self.rho > 0:
            raise ThermoDomainError(f"rho must be > 0, got {self.rho}")
        if not self.theta > 0:
            raise ThermoDomainError(f"theta must be > 0, got {self.theta}")


class PStructure(Protocol):
    """Interface alternative structural functions must implement."""

    def value(self, Z): ...

    def deriv(self, Z): ...

    def entropy(self, Z): ...

    def entropy_deriv(self, Z): ...


@dataclass(frozen=True)
class DefaultPStructure:
    """P(Z) = Z + p_inf * Z**(5/3), S(Z) = s0 - log(Z)."""

    p_inf: float
    s0: float = 0.0

    def value(self, Z):
        Z = _arr(Z)
        return Z + self.p_inf * Z ** (5.0 / 3.0)

    def deriv(self, Z):
        Z = _arr(Z)
        return 1.0 + (5.0 / 3.0) * self.p_inf * Z ** (2.0 / 3.0)

    def entropy(self, Z):
        Z = _arr(Z)
        if np.any(Z <= 0):
            raise ThermoDomainError("entropy needs Z > 0")
        return self.s0 - np.log(Z)

    def entropy_deriv(self, Z):
        Z = _arr(Z)
        if np.any(Z <= 0):
            raise ThermoDomainError("entropy slope needs Z > 0")
        return -1.0 / Z


def _structure(gas: GasParams, structure: PStructure | None) -> PStructure:
    return gas.structure() if structure is None else structure


def _check_rho_theta(rho: np.ndarray, theta: np.ndarray, need_rho_pos: bool) -> None:
    if np.any(~np.isfinite(rho)) or np.any(~np.isfinite(theta)):
        raise ThermoDomainError("non-finite state input")
    if np.any(theta <= 0):
        raise ThermoDomainError("theta must be > 0")
    if need_rho_pos:
        if np.any(rho <= 0):
            raise ThermoDomainError("rho must be > 0")
    elif np.any(rho < 0):
        raise ThermoDomainError("rho must be >= 0")


def structural_P(Z, gas: GasParams, structure: PStructure | None = None):
    """Evaluate the structural function P at Z >= 0."""
    Z = _arr(Z)
    if np.any(Z < 0):
        raise ThermoDomainError("Z must be >= 0")
    return _structure(gas, structure).value(Z)


def pressure(rho, theta, gas: GasParams, structure: PStructure | None = None):
    """Total pressure p = theta**(5/2) P(Z) + (a/3) theta**4, rho >= 0."""
    rho, theta = _arr(rho), _arr(theta)
    _check_rho_theta(rho, theta, need_rho_pos=False)
    P = _structure(gas, structure)
    Z = rho * theta ** -1.5
    return theta ** 2.5 * P.value(Z) + (gas.a / 3.0) * theta ** 4


def rho_e_total(rho, theta, gas: GasParams, structure: PStructure | None = None):
    """Volumetric internal energy rho*e; safe down to vacuum rho = 0.

    The molecular part shares its subexpression with the pressure, so the
    relation p_M = (2/3) * (rho*e)_M holds to rounding by construction.
    """
    rho, theta = _arr(rho), _arr(theta)
    _check_rho_theta(rho, theta, need_rho_pos=False)
    P = _structure(gas, structure)
    Z = rho * theta ** -1.5
    p_mol = theta ** 2.5 * P.value(Z)
    return 1.5 * p_mol + gas.a * theta ** 4


def internal_energy(rho, theta, gas: GasParams, structure: PStructure | None = None):
    """Specific internal energy e(rho, theta), rho > 0."""
    rho, theta = _arr(rho), _arr(theta)
    _check_rho_theta(rho, theta, need_rho_pos=True)
    return rho_e_total(rho, theta, gas, structure) / rho


def entropy(rho, theta, gas: GasParams, structure: PStructure | None = None):
    """Specific entropy s = S(Z) + (4a/3) theta**3 / rho, rho > 0."""
    rho, theta = _arr(rho), _arr(theta)
    _check_rho_theta(rho, theta, need_rho_pos=True)
    P = _structure(gas, structure)
    Z = rho * theta ** -1.5
    return P.entropy(Z) + (4.0 * gas.a / 3.0) * theta ** 3 / rho


def rho_s_total(rho, theta, gas: GasParams, structure: PStructure | None = None):
    """Volumetric entropy rho*s, continuously extended by 0 to rho = 0."""
    rho, theta = _arr(rho), _arr(theta)
    _check_rho_theta(rho, theta, need_rho_pos=False)
    P = _structure(gas, structure)
    rho_safe = np.where(rho > 0, rho, 1.0)
    Z = rho_safe * theta ** -1.5
    out = rho_safe * P.entropy(Z) + (4.0 * gas.a / 3.0) * theta ** 3
    return np.where(rho > 0, out, (4.0 * gas.a / 3.0) * theta ** 3)


def dp_drho(rho, theta, gas: GasParams, structure: PStructure | None = None):
    """d p / d rho = theta * P'(Z); strictly positive for admissible states."""
    rho, theta = _arr(rho), _arr(theta)
    _check_rho_theta(rho, theta, need_rho_pos=False)
    P = _structure(gas, structure)
    Z = rho * theta ** -1.5
    return theta * P.deriv(Z)


def dp_dtheta(rho, theta, gas: GasParams, structure: PStructure | None = None):
    """d p / d theta = theta**(3/2) [ (5/2)P - (3/2) Z P' ] + (4a/3) theta**3."""
    rho, theta = _arr(rho), _arr(theta)
    _check_rho_theta(rho, theta, need_rho_pos=False)
    P = _structure(gas, structure)
    Z = rho * theta ** -1.5
    mol = theta ** 1.5 * (2.5 * P.value(Z) - 1.5 * Z * P.deriv(Z))
    return mol + (4.0 * gas.a / 3.0) * theta ** 3


def de_drho(rho, theta, gas: GasParams, structure: PStructure | None = None):
    """d e / d rho = (3/2) theta**(5/2) (Z P' - P) / rho**2 - a theta**4 / rho**2."""
    rho, theta = _arr(rho), _arr(theta)
    _check_rho_theta(rho, theta, need_rho_pos=True)
    P = _structure(gas, structure)
    Z = rho * theta ** -1.5
    mol = 1.5 * theta ** 2.5 * (Z * P.deriv(Z) - P.value(Z)) / rho ** 2
    return mol - gas.a * theta ** 4 / rho ** 2


def de_dtheta(rho, theta, gas: GasParams, structure: PStructure | None = None):
    """d e / d theta; strictly positive (thermodynamic stability)."""
    rho, theta = _arr(rho), _arr(theta)
    _check_rho_theta(rho, theta, need_rho_pos=True)
    P = _structure(gas, structure)
    Z = rho * theta ** -1.5
    mol = 1.5 * theta ** 1.5 * (2.5 * P.value(Z) - 1.5 * Z * P.deriv(Z)) / rho
    return mol + 4.0 * gas.a * theta ** 3 / rho


def ds_drho(rho, theta, gas: GasParams, structure: PStructure | None = None):
    """d s / d rho = S'(Z) / theta**(3/2) - (4a/3) theta**3 / rho**2."""
    rho, theta = _arr(rho), _arr(theta)
    _check_rho_theta(rho, theta, need_rho_pos=True)
    P = _structure(gas, structure)
    Z = rho * theta ** -1.5
    return P.entropy_deriv(Z) * theta ** -1.5 - (4.0 * gas.a / 3.0) * theta ** 3 / rho ** 2


def ds_dtheta(rho, theta, gas: GasParams, structure: PStructure | None = None):
    """d s / d theta = -(3/2) Z S'(Z) / theta + 4 a theta**2 / rho."""
    rho, theta = _arr(rho), _arr(theta)
    _check_rho_theta(rho, theta, need_rho_pos=True)
    P = _structure(gas, structure)
    Z = rho * theta ** -1.5
    return -1.5 * Z * P.entropy_deriv(Z) / theta + 4.0 * gas.a * theta ** 2 / rho


def gibbs_residual(rho, theta, gas: GasParams, structure: PStructure | None = None):
    """Both residuals of the Gibbs relation theta*Ds = De + p*D(1/rho).

    Returns (theta * ds_dtheta - de_dtheta,
             theta * ds_drho - (de_drho - p / rho**2)); both vanish for a
    thermodynamically consistent model.
    """
    rho, theta = _arr(rho), _arr(theta)
    res_theta = theta * ds_dtheta(rho, theta, gas, structure) - de_dtheta(rho, theta, gas, structure)
    res_rho = theta * ds_drho(rho, theta, gas, structure) - (
        de_drho(rho, theta, gas, structure)
        - pressure(rho, theta, gas, structure) / rho ** 2
    )
    return res_theta, res_rho


def alpha_cp(ref: ReferenceState, gas: GasParams, structure: PStructure | None = None):
    """Thermal expansion alpha and heat capacity c_p at the reference state.

        alpha = dp_dtheta / (rho_bar * dp_drho)
        c_p   = de_dtheta + (theta_bar * alpha / rho_bar) * dp_dtheta

    By construction rho_bar*c_p - theta_bar*alpha*dp_dtheta = rho_bar*de_dtheta.
    """
    rb, tb = ref.rho_bar, ref.theta_bar
    pt = float(dp_dtheta(rb, tb, gas, structure))
    pr = float(dp_drho(rb, tb, gas, structure))
    et = float(de_dtheta(rb, tb, gas, structure))
    alpha = pt / (rb * pr)
    cp = et + (tb * alpha / rb) * pt
    return alpha, cp


def cancellation_summands(ref: ReferenceState, gas: GasParams, structure: PStructure | None = None):
    """Summands of the coefficient cancellation used when the momentum and
    heat balances are combined:

        -alpha*de_dtheta/c_p
        - (rho_bar*ds_drho/dp_dtheta) * (1 - theta_bar*alpha*dp_dtheta/(rho_bar*c_p))
          * (dp_dtheta/dp_drho)

    Returns (first_summand, second_summand); their sum vanishes identically.
    """
    rb, tb = ref.rho_bar, ref.theta_bar
    alpha, cp = alpha_cp(ref, gas, structure)
    et = float(de_dtheta(rb, tb, gas, structure))
    pt = float(dp_dtheta(rb, tb, gas, structure))
    pr = float(dp_drho(rb, tb, gas, structure))
    sr = float(ds_drho(rb, tb, gas, structure))
    first = -alpha * et / cp
    second = -(rb * sr / pt) * (1.0 - tb * alpha * pt / (rb * cp)) * (pt / pr)
    return first, second


def heat_flux_identity_residual(ref: ReferenceState, gas: GasParams, structure: PStructure | None = None):
    """Residual of the heat-flux coefficient identity

        (kappa/c_p) * (ds_drho*dp_dtheta/dp_drho - ds_dtheta) = -kappa/theta_bar

    evaluated at the reference state.  Returns lhs - rhs.
    """
    rb, tb = ref.rho_bar, ref.theta_bar
    _, cp = alpha_cp(ref, gas, structure)
    k = float(kappa(tb, gas))
    sr = float(ds_drho(rb, tb, gas, structure))
    st = float(ds_dtheta(rb, tb, gas, structure))
    pt = float(dp_dtheta(rb, tb, gas, structure))
    pr = float(dp_drho(rb, tb, gas, structure))
    lhs = (k / cp) * (sr * pt / pr - st)
    rhs = -k / tb
    return lhs - rhs


def _check_theta(theta: np.ndarray) -> None:
    if np.any(~np.isfinite(theta)):
        raise ThermoDomainError("non-finite temperature")
    if np.any(theta < 0):
        raise ThermoDomainError("temperature must be >= 0")


def mu(theta, gas: GasParams):
    """Shear viscosity mu_low * (1 + theta)."""
    theta = _arr(theta)
    _check_theta(theta)
    return gas.mu_low * (1.0 + theta)


def eta(theta, gas: GasParams):
    """Bulk viscosity; identically zero in this model."""
    theta = _arr(theta)
    _check_theta(theta)
    return np.zeros_like(theta)


def kappa(theta, gas: GasParams):
    """Heat conductivity kappa_low * (1 + theta**beta)."""
    theta = _arr(theta)
    _check_theta(theta)
    return gas.kappa_low * (1.0 + theta ** gas.beta)


def zeta(theta, gas: GasParams):
    """Magnetic diffusivity zeta_low * (1 + theta)."""
    theta = _arr(theta)
    _check_theta(theta)
    return gas.zeta_low * (1.0 + theta)


def theta_from_rho_S(rho, S, gas: GasParams, structure: PStructure | None = None,
                     tol: float = 1e-13, max_iter: int = 100):
    """Invert S = rho * s(rho, theta) for theta at fixed rho > 0 (Newton).

    The map theta -> rho*s is strictly increasing (ds_dtheta > 0), so the
    root is unique.  Used by independent verification oracles that need the
    energy as a function of the conservative variables.
    """
    rho, S = np.broadcast_arrays(_arr(rho), _arr(S))
    rho = rho.astype(float).copy()
    S = S.astype(float).copy()
    if np.any(rho <= 0):
        raise ThermoDomainError("rho must be > 0")
    theta = np.ones_like(rho)
    # Bracket expansion first: rho*s is increasing in theta.
    lo = np.full_like(rho, 1e-8)
    hi = np.full_like(rho, 1.0)
    for _ in range(200):
        val = rho * entropy(rho, hi, gas, structure)
        need = val < S
        if not np.any(need):
            break
        hi = np.where(need, hi * 2.0, hi)
    for _ in range(200):
        val = rho * entropy(rho, lo, gas, structure)
        need = val > S
        if not np.any(need):
            break
        lo = np.where(need, lo * 0.5, lo)
    theta = np.sqrt(lo * hi)
    for _ in range(max_iter):
        f = rho * entropy(rho, theta, gas, structure) - S
        df = rho * ds_dtheta(rho, theta, gas, structure)
        step = f / df
        new = theta - step
        # fall back to bisection when Newton leaves the bracket
        bad = (new <= lo) | (new >= hi) | ~np.isfinite(new)
        new = np.where(bad, 0.5 * (lo + hi), new)
        hi = np.where(f > 0, theta, hi)
        lo = np.where(f <= 0, theta, lo)
        done = np.abs(new - theta) <= tol * np.maximum(1.0, np.abs(new))
        theta = new
        if np.all(done):
            break
    return theta


@dataclass
class ThermoCheckReport:
    """Result of the consistency suite: named checks with worst residuals."""

    results: list  # list of (name, passed: bool, worst: float, tol: float)

    @property
    def passed(self) -> bool:
        return all(ok for _, ok, _, _ in self.results)

    def lines(self) -> list:
        out = []
        for name, ok, worst, tol in self.results:
            out.append(f"{'PASS' if ok else 'FAIL'}  {name:40s}  worst={worst:.3e}  tol={tol:.1e}")
        return out


def thermo_check(gas: GasParams, ref: ReferenceState, seed: int = 0,
                 n_points: int = 100, fd_step: float = 1e-5,
                 structure: PStructure | None = None) -> ThermoCheckReport:
    """Run the full thermodynamic consistency suite.

    Checks, on n_points random states in [0.5, 2]^2 and at the reference
    state: closed-form Gibbs residuals, finite-difference cross-validation
    of all five derivative functions, thermodynamic stability, monotone
    S, the molecular pressure-energy relation, positivity of alpha and c_p,
    the two coefficient identities, and the two-sided transport bounds.
    """
    rng = np.random.default_rng(seed)
    rho = rng.uniform(0.5, 2.0, n_points)
    theta = rng.uniform(0.5, 2.0, n_points)
    results = []

    def add(name, worst, tol):
        results.append((name, bool(worst < tol), float(worst), float(tol)))

    res_t, res_r = gibbs_residual(rho, theta, gas, structure)
    add("gibbs closed-form", max(np.max(np.abs(res_t)), np.max(np.abs(res_r))), 1e-12)

    # central finite differences as an independent derivative oracle
    h = fd_step
    fd_pr = (pressure(rho + h, theta, gas, structure) - pressure(rho - h, theta, gas, structure)) / (2 * h)
    fd_pt = (pressure(rho, theta + h, gas, structure) - pressure(rho, theta - h, gas, structure)) / (2 * h)
    fd_et = (internal_energy(rho, theta + h, gas, structure) - internal_energy(rho, theta - h, gas, structure)) / (2 * h)
    fd_er = (internal_energy(rho + h, theta, gas, structure) - internal_energy(rho - h, theta, gas, structure)) / (2 * h)
    fd_sr = (entropy(rho + h, theta, gas, structure) - entropy(rho - h, theta, gas, structure)) / (2 * h)
    fd_st = (entropy(rho, theta + h, gas, structure) - entropy(rho, theta - h, gas, structure)) / (2 * h)

    def rel(a, b):
        return np.max(np.abs(a - b) / np.maximum(1.0, np.abs(b)))

    worst_fd = max(
        rel(dp_drho(rho, theta, gas, structure), fd_pr),
        rel(dp_dtheta(rho, theta, gas, structure), fd_pt),
        rel(de_dtheta(rho, theta, gas, structure), fd_et),
        rel(de_drho(rho, theta, gas, structure), fd_er),
        rel(ds_drho(rho, theta, gas, structure), fd_sr),
        rel(ds_dtheta(rho, theta, gas, structure), fd_st),
    )
    add("derivatives vs central differences", worst_fd, 1e-7)

    gibbs_fd_t = np.max(np.abs(theta * fd_st - fd_et))
    gibbs_fd_r = np.max(np.abs(theta * fd_sr - (fd_er - pressure(rho, theta, gas, structure) / rho ** 2)))
    add("gibbs vs central differences", max(gibbs_fd_t, gibbs_fd_r), 1e-7)

    add("dp_drho > 0", float(np.max(-dp_drho(rho, theta, gas, structure))) + 1e-300, 0.0 + 1e-12)
    add("de_dtheta > 0", float(np.max(-de_dtheta(rho, theta, gas, structure))) + 1e-300, 1e-12)

    P = _structure(gas, structure)
    Z = np.geomspace(1e-2, 1e2, 50)
    add("S' < 0", float(np.max(P.entropy_deriv(Z))) + 1e-300, 1e-12)

    p_mol = pressure(rho, theta, gas, structure) - (gas.a / 3.0) * theta ** 4
    e_mol = rho_e_total(rho, theta, gas, structure) - gas.a * theta ** 4
    add("p_M = (2/3) rho e_M", rel(p_mol, (2.0 / 3.0) * e_mol), 1e-12)

    alpha, cp = alpha_cp(ref, gas, structure)
    add("alpha > 0", -alpha + 1e-300, 1e-12)
    add("c_p > 0", -cp + 1e-300, 1e-12)
    ident = ref.rho_bar * cp - ref.theta_bar * alpha * float(dp_dtheta(ref.rho_bar, ref.theta_bar, gas, structure)) \
        - ref.rho_bar * float(de_dtheta(ref.rho_bar, ref.theta_bar, gas, structure))
    add("rho_bar c_p - theta_bar alpha dp_dtheta = rho_bar de_dtheta", abs(ident), 1e-12)

    s5a, s5b = cancellation_summands(ref, gas, structure)
    add("coefficient cancellation (momentum/heat)", abs(s5a + s5b), 1e-12)
    add("heat-flux coefficient identity", abs(heat_flux_identity_residual(ref, gas, structure)), 1e-12)

    th = rng.uniform(0.0, 5.0, 200)
    worst_tr = 0.0
    worst_tr = max(worst_tr, float(np.max(gas.mu_low * (1 + th) - mu(th, gas))))
    worst_tr = max(worst_tr, float(np.max(mu(th, gas) - gas.mu_high * (1 + th))))
    worst_tr = max(worst_tr, float(np.max(-eta(th, gas))))
    worst_tr = max(worst_tr, float(np.max(eta(th, gas) - gas.eta_high * (1 + th))))
    worst_tr = max(worst_tr, float(np.max(gas.kappa_low * (1 + th ** gas.beta) - kappa(th, gas))))
    worst_tr = max(worst_tr, float(np.max(kappa(th, gas) - gas.kappa_high * (1 + th ** gas.beta))))
    worst_tr = max(worst_tr, float(np.max(gas.zeta_low * (1 + th) - zeta(th, gas))))
    worst_tr = max(worst_tr, float(np.max(zeta(th, gas) - gas.zeta_high * (1 + th))))
    add("transport two-sided bounds", worst_tr + 1e-300, 1e-12)

    return ThermoCheckReport(results)
