"""Damped compressible flow in enthalpy variables on the periodic torus.

State is the pair ``(n, v)``: the enthalpy deviation and the velocity,
evolving by

    dn/dt + v.grad(n) + div(v) + G(n) div(v) = 0
    dv/dt + v.grad(v) + grad(n) = -v/eps

with the reference normalization ``P'(rho_ref) = rho_ref = 1``, so the
linear part couples ``n`` with the longitudinal velocity through the
symbol ``lambda**2 + lambda/eps + |xi|**2 = 0`` while transverse velocity
is damped at rate ``1/eps``.

Time stepping is a Lawson scheme: the stiff linear part is applied as an
exact per-frequency matrix exponential (closed form, stable for any
``dt/eps``) and a classical 4-stage Runge-Kutta advances the transformed
nonlinear tendency.  With the nonlinear terms switched off a step *is*
the matrix exponential.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .grid import (
    Grid,
    SpectralField,
    dealias,
    gradient,
    l2_norm_spectral,
    spectral_from_values,
    values_from_spectral,
)

__all__ = [
    "PressureLaw",
    "linear_law",
    "quadratic_law",
    "gamma_law",
    "enthalpy_from_pressure",
    "EulerState",
    "StepToggles",
    "symbol_eigenvalues",
    "LinearPropagator",
    "FlowStepper",
    "nonlinear_rhs",
    "step",
    "effective_velocity",
    "reformulation_residual",
    "CFLError",
    "RegimeError",
]

DEGENERATE_ROOT_TOL = 1e-8


class CFLError(ValueError):
    """Step refused: dt exceeds the advective CFL bound."""

    def __init__(self, dt: float, dt_max: float):
        super().__init__(f"dt={dt:g} exceeds the CFL bound {dt_max:g}")
        self.dt_required = dt_max


class RegimeError(RuntimeError):
    """The smallness regime ||n||_inf < 1 was left; the run must stop."""

    def __init__(self, state: "EulerState"):
        super().__init__(f"enthalpy left the smooth regime at t={state.t:g}")
        self.state = state


# ---------------------------------------------------------------------------
# pressure laws and the enthalpy change of unknown
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PressureLaw:
    """Smooth barotropic pressure, normalized so P'(1) = 1.

    Supported kinds: ``linear`` (P = rho), ``quadratic`` (P = rho^2/2) and
    ``gamma`` (P = rho^gamma / gamma).  In enthalpy variables all three
    give the closed forms below; in particular the compressibility
    coefficient is ``G(n) = (gamma - 1) n`` with gamma = 1, 2, gamma.
    """

    kind: str
    gamma: float = 2.0

    def __post_init__(self) -> None:
        if self.kind not in ("linear", "quadratic", "gamma"):
            raise ValueError(f"unknown pressure law {self.kind!r}")
        if self.kind == "gamma" and self.gamma <= 0:
            raise ValueError("gamma must be positive")

    @property
    def gamma_eff(self) -> float:
        return {"linear": 1.0, "quadratic": 2.0}.get(self.kind, self.gamma)

    def P(self, rho):
        rho = self._check_rho(rho)
        g = self.gamma_eff
        if g == 1.0:
            return rho
        return rho**g / g

    def dP(self, rho):
        rho = self._check_rho(rho)
        return rho ** (self.gamma_eff - 1.0)

    def n_of_rho(self, rho):
        """Enthalpy n(rho) = integral_1^rho P'(s)/s ds."""
        rho = self._check_rho(rho)
        g = self.gamma_eff
        if g == 1.0:
            return np.log(rho)
        return (rho ** (g - 1.0) - 1.0) / (g - 1.0)

    def rho_of_n(self, n):
        g = self.gamma_eff
        if g == 1.0:
            return np.exp(np.asarray(n, dtype=float))
        base = 1.0 + (g - 1.0) * np.asarray(n, dtype=float)
        if np.any(base <= 0.0):
            raise ValueError("enthalpy outside the positive-density range")
        return base ** (1.0 / (g - 1.0))

    def G(self, n):
        """G(n) = P'(rho(n)) - 1; vanishes at the reference state."""
        return (self.gamma_eff - 1.0) * np.asarray(n, dtype=float)

    def dG(self, n):
        return np.full_like(np.asarray(n, dtype=float), self.gamma_eff - 1.0)

    def _check_rho(self, rho):
        rho = np.asarray(rho, dtype=float)
        if np.any(rho <= 0.0):
            raise ValueError("density must be positive")
        return rho

    def key(self) -> tuple:
        return (self.kind, self.gamma_eff)


def linear_law() -> PressureLaw:
    return PressureLaw("linear")


def quadratic_law() -> PressureLaw:
    return PressureLaw("quadratic")


def gamma_law(gamma: float) -> PressureLaw:
    return PressureLaw("gamma", gamma=gamma)


def enthalpy_from_pressure(law: PressureLaw):
    """The change of unknown as callables ``(n_of_rho, G)``."""
    return law.n_of_rho, law.G


# ---------------------------------------------------------------------------
# states
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StepToggles:
    advection: bool = True
    g_term: bool = True

    @property
    def linear_only(self) -> bool:
        return not (self.advection or self.g_term)


@dataclass(frozen=True)
class EulerState:
    """Time-stamped (enthalpy, velocity) pair with its flow parameters."""

    t: float
    n: SpectralField
    v: SpectralField
    eps: float
    k: int
    law: PressureLaw = field(default_factory=quadratic_law)

    def __post_init__(self) -> None:
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if not self.n.is_scalar:
            raise ValueError("n must be scalar")
        if self.v.is_scalar and self.n.grid.d != 1:
            raise ValueError("v must have d components")

    @property
    def grid(self) -> Grid:
        return self.n.grid

    def v_coeffs_stacked(self) -> np.ndarray:
        c = self.v.coeffs
        return c[None, ...] if self.v.is_scalar else c

    def energy(self) -> float:
        return (l2_norm_spectral(self.grid, self.n.coeffs) ** 2
                + l2_norm_spectral(self.grid, self.v.coeffs) ** 2)

    def n_max(self) -> float:
        return float(np.max(np.abs(values_from_spectral(self.grid, self.n.coeffs))))


def effective_velocity(state: EulerState) -> SpectralField:
    """``z = v/eps + grad(n)``: the damped combination that relaxes to zero."""
    g = state.grid
    vz = state.v_coeffs_stacked() / state.eps + gradient(state.n).coeffs
    return SpectralField(g, vz)


# ---------------------------------------------------------------------------
# the linear symbol
# ---------------------------------------------------------------------------

def symbol_eigenvalues(xi_abs, eps: float):
    """Roots of ``lambda**2 + lambda/eps + |xi|**2 = 0`` plus the transverse rate.

    Returns ``(lam_plus, lam_minus, lam_transverse)`` as complex arrays;
    ``lam_plus`` carries the + branch (the slow/diffusive one for small
    ``eps*|xi|``), ``lam_transverse = -1/eps``.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    xi_abs = np.asarray(xi_abs, dtype=float)
    disc = np.asarray(1.0 - 4.0 * eps**2 * xi_abs**2, dtype=complex)
    root = np.sqrt(disc)
    lam_plus = (-1.0 + root) / (2.0 * eps)
    lam_minus = (-1.0 - root) / (2.0 * eps)
    lam_t = np.full_like(lam_plus, -1.0 / eps)
    return lam_plus, lam_minus, lam_t


def degenerate_root_mask(xi_abs, eps: float):
    """Frequencies within tolerance of the double root 2*eps*|xi| = 1."""
    xi_abs = np.asarray(xi_abs, dtype=float)
    return np.abs(1.0 - 4.0 * eps**2 * xi_abs**2) < DEGENERATE_ROOT_TOL


class LinearPropagator:
    """Exact flow of the linear part, one 2x2 block per frequency.

    For each frequency the pair ``(n_hat, s_hat)`` (s = longitudinal
    velocity component) evolves by ``exp(t*A)`` with
    ``A = [[0, -i|xi|], [-i|xi|, -1/eps]]``; transverse components decay by
    ``exp(-t/eps)``.  Entries are assembled from ``exp((mu +- nu) t)`` with
    ``mu = -1/(2 eps)``, ``nu = sqrt(mu^2 - |xi|^2)``, which keeps every
    exponent non-positive (no overflow for any ``t/eps``), and a series
    form takes over near the double root.
    """

    def __init__(self, grid: Grid, eps: float):
        self.grid = grid
        self.eps = eps
        self.k = grid.xi_abs
        self.mu = -0.5 / eps
        d = grid.d
        xhat = np.zeros((d,) + grid.shape)
        with np.errstate(invalid="ignore", divide="ignore"):
            for ax in range(d):
                xhat[ax] = np.where(self.k > 0, grid.xi[ax] / self.k, 0.0)
        self.xhat = xhat
        self._cache: dict[float, tuple] = {}

    def matrices(self, t: float):
        """(E11, E12, E22, Et) lattice arrays for exp(t*A); E21 = E12."""
        got = self._cache.get(t)
        if got is not None:
            return got
        mu = self.mu
        nu = np.sqrt(np.asarray(mu**2 - self.k**2, dtype=complex))
        ep = np.exp((mu + nu) * t)
        em = np.exp((mu - nu) * t)
        eC = 0.5 * (ep + em)                 # exp(mu t) cosh(nu t)
        with np.errstate(invalid="ignore", divide="ignore"):
            eS = np.where(nu != 0.0, (ep - em) / (2.0 * nu), t * np.exp(mu * t))
        small = np.abs(nu * t) < 1e-5
        if np.any(small):
            z2 = (nu * t) ** 2
            series = t * np.exp(mu * t) * (1.0 + z2 / 6.0 + z2**2 / 120.0)
            eS = np.where(small, series, eS)
        e11 = eC - mu * eS
        e12 = -1j * self.k * eS
        e22 = eC + mu * eS
        et = math.exp(-t / self.eps)
        out = (e11, e12, e22, et)
        self._cache[t] = out
        return out

    def apply(self, n_hat: np.ndarray, v_hat: np.ndarray, t: float):
        """Advance raw coefficient arrays by time t (v_hat has shape (d, ...))."""
        e11, e12, e22, et = self.matrices(t)
        s = np.zeros_like(n_hat)
        for ax in range(self.grid.d):
            s = s + self.xhat[ax] * v_hat[ax]
        n_new = e11 * n_hat + e12 * s
        s_new = e12 * n_hat + e22 * s
        v_new = np.empty_like(v_hat)
        for ax in range(self.grid.d):
            v_new[ax] = self.xhat[ax] * (s_new - et * s) + et * v_hat[ax]
        return n_new, v_new


# ---------------------------------------------------------------------------
# nonlinear tendency and the Lawson step
# ---------------------------------------------------------------------------

class FlowStepper:
    """Precomputed machinery for stepping one (grid, eps, law, toggles) flow."""

    def __init__(self, grid: Grid, eps: float, law: PressureLaw,
                 toggles: StepToggles = StepToggles(), c_cfl: float = 0.5):
        self.grid = grid
        self.eps = eps
        self.law = law
        self.toggles = toggles
        self.c_cfl = c_cfl
        self.prop = LinearPropagator(grid, eps)
        self.mask = grid.dealias_mask
        self.ixi = tuple(1j * grid.xi[ax] for ax in range(grid.d))
        self.last_v_max: float | None = None

    # -- tendency -----------------------------------------------------

    def nonlinear(self, n_hat: np.ndarray, v_hat: np.ndarray):
        """Dealiased nonlinear tendency (the linear part lives in the propagator).

        dn = -v.grad(n) - G(n) div(v);  dv_c = -v.grad(v_c).
        """
        g = self.grid
        d = g.d
        tog = self.toggles
        if tog.linear_only:
            self.last_v_max = None
            return np.zeros_like(n_hat), np.zeros_like(v_hat)

        batch = [v_hat[ax] for ax in range(d)]
        if tog.advection:
            batch += [self.ixi[ax] * n_hat for ax in range(d)]
            for c in range(d):
                batch += [self.ixi[ax] * v_hat[c] for ax in range(d)]
        if tog.g_term:
            batch.append(n_hat)
            div = np.zeros_like(n_hat)
            for ax in range(d):
                div = div + self.ixi[ax] * v_hat[ax]
            batch.append(div)
        phys = values_from_spectral(g, np.stack(batch))
        vp = phys[:d]
        self.last_v_max = float(np.max(np.abs(vp)))
        pos = d

        dn_phys = np.zeros(g.shape)
        dv_phys = None
        if tog.advection:
            gradn = phys[pos:pos + d]
            pos += d
            for ax in range(d):
                dn_phys -= vp[ax] * gradn[ax]
            dv_phys = np.zeros((d,) + g.shape)
            for c in range(d):
                dvc = phys[pos:pos + d]
                pos += d
                for ax in range(d):
                    dv_phys[c] -= vp[ax] * dvc[ax]
        if tog.g_term:
            n_phys = phys[pos]
            div_phys = phys[pos + 1]
            pos += 2
            dn_phys -= self.law.G(n_phys) * div_phys

        if dv_phys is None:
            dn_hat = spectral_from_values(g, dn_phys)
            dv_hat = np.zeros_like(v_hat)
        else:
            out = spectral_from_values(g, np.concatenate((dn_phys[None], dv_phys)))
            dn_hat, dv_hat = out[0], out[1:]
        return (np.where(self.mask, dn_hat, 0.0),
                np.where(self.mask, dv_hat, 0.0))

    # -- one Lawson-RK4 step -------------------------------------------

    def step_arrays(self, n_hat: np.ndarray, v_hat: np.ndarray, dt: float):
        E = lambda n, v: self.prop.apply(n, v, dt)       # noqa: E731
        E2 = lambda n, v: self.prop.apply(n, v, 0.5 * dt)  # noqa: E731

        a1n, a1v = self.nonlinear(n_hat, v_hat)
        self._enforce_cfl(dt)

        s2n, s2v = E2(n_hat + 0.5 * dt * a1n, v_hat + 0.5 * dt * a1v)
        a2n, a2v = self.nonlinear(s2n, s2v)

        e2n, e2v = E2(n_hat, v_hat)
        a3n, a3v = self.nonlinear(e2n + 0.5 * dt * a2n, e2v + 0.5 * dt * a2v)

        efn, efv = E(n_hat, v_hat)
        h3n, h3v = E2(a3n, a3v)
        a4n, a4v = self.nonlinear(efn + dt * h3n, efv + dt * h3v)

        e1n, e1v = E(a1n, a1v)
        h2n, h2v = E2(a2n, a2v)
        n_new = efn + (dt / 6.0) * (e1n + 2.0 * h2n + 2.0 * h3n + a4n)
        v_new = efv + (dt / 6.0) * (e1v + 2.0 * h2v + 2.0 * h3v + a4v)
        return n_new, v_new

    def _enforce_cfl(self, dt: float) -> None:
        v_max = self.last_v_max
        if v_max is None:  # linear-only: no advected scale to resolve
            v_max = 0.0
        dt_max = self.c_cfl * self.grid.dx / (1.0 + v_max)
        if dt > dt_max * (1.0 + 1e-12):
            raise CFLError(dt, dt_max)


_STEPPER_CACHE: dict[tuple, FlowStepper] = {}


def get_stepper(grid: Grid, eps: float, law: PressureLaw,
                toggles: StepToggles, c_cfl: float) -> FlowStepper:
    key = (grid.key(), eps, law.key(), toggles.advection, toggles.g_term, c_cfl)
    st = _STEPPER_CACHE.get(key)
    if st is None:
        st = FlowStepper(grid, eps, law, toggles, c_cfl)
        _STEPPER_CACHE[key] = st
    return st


def nonlinear_rhs(state: EulerState,
                  toggles: StepToggles = StepToggles()) -> tuple[SpectralField,
                                                                 SpectralField]:
    """Public form of the nonlinear tendency; aborts outside the regime."""
    if state.n_max() >= 1.0:
        raise RegimeError(state)
    stepper = get_stepper(state.grid, state.eps, state.law, toggles, c_cfl=0.5)
    dn, dv = stepper.nonlinear(state.n.coeffs, state.v_coeffs_stacked())
    return SpectralField(state.grid, dn), SpectralField(state.grid, dv)


def step(state: EulerState, dt: float,
         toggles: StepToggles = StepToggles(), c_cfl: float = 0.5,
         check_regime: bool = True) -> EulerState:
    """Advance the state by one Lawson-RK4 step of size dt."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    stepper = get_stepper(state.grid, state.eps, state.law, toggles, c_cfl)
    n_new, v_new = stepper.step_arrays(state.n.coeffs, state.v_coeffs_stacked(), dt)
    out = replace(state, t=state.t + dt,
                  n=SpectralField(state.grid, n_new),
                  v=SpectralField(state.grid, v_new))
    if check_regime and out.n_max() >= 1.0:
        raise RegimeError(out)
    return out


# ---------------------------------------------------------------------------
# per-block residual of the reformulated scalar equation
# ---------------------------------------------------------------------------

def reformulation_residual(snapshots, j: int,
                           toggles: StepToggles = StepToggles()) -> float:
    """Discrete residual of the block-projected heat-form scalar equation.

    ``d/dt block_j n - eps Lap block_j n + eps div block_j z
      + block_j(v.grad n) + block_j(G(n) div v) = 0``
    holds exactly in space; a centered time difference over equispaced
    snapshots leaves only the O(dt^2) differencing error.  Returns the
    maximum over interior snapshot times of the residual norm divided by
    the largest participating term norm (0 for an identically zero state).
    """
    snaps = list(snapshots)
    if len(snaps) < 3:
        raise ValueError("need at least three snapshots for a centered difference")
    times = np.array([s.t for s in snaps])
    dts = np.diff(times)
    if not np.allclose(dts, dts[0], rtol=1e-8):
        raise ValueError("snapshots must be equispaced in time")
    from .lp import get_basis, project_coeffs  # local: avoids cycle at import

    grid = snaps[0].grid
    basis = get_basis(grid)
    worst = 0.0
    for i in range(1, len(snaps) - 1):
        prev_n = project_coeffs(basis, snaps[i - 1].n.coeffs, j)
        next_n = project_coeffs(basis, snaps[i + 1].n.coeffs, j)
        if prev_n is None:
            return 0.0
        state = snaps[i]
        dn_dt = (next_n - prev_n) / (times[i + 1] - times[i - 1])
        terms = [dn_dt]
        nj = project_coeffs(basis, state.n.coeffs, j)
        terms.append(-state.eps * (-grid.xi_sq) * nj)
        z = effective_velocity(state)
        divz = np.zeros(grid.shape, dtype=complex)
        for ax in range(grid.d):
            divz += 1j * grid.xi[ax] * z.coeffs[ax] if not z.is_scalar \
                else 1j * grid.xi[ax] * z.coeffs
        terms.append(state.eps * project_coeffs(basis, divz, j))
        stepper = get_stepper(grid, state.eps, state.law, toggles, c_cfl=0.5)
        dn_nl, _ = stepper.nonlinear(state.n.coeffs, state.v_coeffs_stacked())
        terms.append(-project_coeffs(basis, dn_nl, j))
        residual = sum(terms)
        scale = max(l2_norm_spectral(grid, t) for t in terms)
        if scale == 0.0:
            continue
        worst = max(worst, l2_norm_spectral(grid, residual) / scale)
    return worst
