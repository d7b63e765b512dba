"""Stationary coupled-mode equations for the forward/backward polariton fields.

With ``S = psi_plus + psi_minus`` and ``D = psi_plus - psi_minus`` the
equations integrated here are::

    psi_plus'  = (i/2)(mu/l) D + (i l/2) G S
    psi_minus' = (i/2)(mu/l) D - (i l/2) G S
    G = eps - V - V cos(2z) - (chi/2)|S|^2

where ``mu`` is the complex mass ratio and ``l`` the coherence length.  The
drive enters through ``psi_plus(0) = alpha`` and the open right end through
``psi_minus(d) = 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy.optimize import brentq

from .errors import DivergedGuess, FieldOverflow, NoConvergence, ParameterError, SingularSystem
from .params import EffectiveParams

OVERFLOW_FACTOR = 1e6
COND_LIMIT = 1e12


@dataclass(frozen=True)
class Grid:
    d: float
    n_steps: int

    def __post_init__(self):
        if not self.d > 0:
            raise ParameterError(f"d must be > 0, got {self.d!r}")
        minimum = math.ceil(64 * self.d / math.pi)
        if self.n_steps < minimum:
            raise ParameterError(
                f"n_steps={self.n_steps} is below the minimum {minimum} (128 steps per lattice period)")

    @classmethod
    def for_params(cls, ep: EffectiveParams, n_steps=1024):
        return cls(ep.d, n_steps)

    @property
    def h(self):
        return self.d / self.n_steps

    @property
    def z(self):
        return np.linspace(0.0, self.d, self.n_steps + 1)


@dataclass(frozen=True)
class SolverSettings:
    newton_tol: float | None = None  # None: 1e-10 |alpha| with a 1e-12 floor
    max_newton_iters: int = 50
    fd_step: float = 1e-7
    max_halvings: int = 8

    def __post_init__(self):
        if self.newton_tol is not None and not self.newton_tol > 0:
            raise ParameterError("newton_tol must be positive")
        if self.max_newton_iters <= 0 or not self.fd_step > 0 or self.max_halvings < 0:
            raise ParameterError("solver settings must be positive")

    def tol_for(self, alpha):
        if self.newton_tol is not None:
            return self.newton_tol
        return max(1e-10 * abs(alpha), 1e-12)


@dataclass(frozen=True)
class FieldSolution:
    z: np.ndarray
    psi_plus: np.ndarray
    psi_minus: np.ndarray
    epsilon: float
    alpha: complex
    T: float = float("nan")
    R: float = float("nan")
    residual: float = float("nan")
    iterations: int = 0
    converged: bool = True

    def __post_init__(self):
        for name in ("z", "psi_plus", "psi_minus"):
            arr = getattr(self, name)
            arr.flags.writeable = False

    @property
    def shooting_value(self):
        return complex(self.psi_minus[0])

    @property
    def symmetric(self):
        """Symmetric polariton amplitude (psi_plus + psi_minus)/sqrt(2)."""
        return (self.psi_plus + self.psi_minus) / math.sqrt(2.0)


def _transmission(psi_plus, psi_minus, alpha):
    a2 = abs(alpha) ** 2
    if a2 == 0:
        return float("nan"), 0.0
    return float(abs(psi_plus[-1]) ** 2 / a2), float(abs(psi_minus[0]) ** 2 / a2)


@numba.njit(cache=True, inline="always")
def _deriv(z, pp, pm, eps, vbar, chi, l, mu):
    s = pp + pm
    dd = pp - pm
    g = eps - vbar - vbar * math.cos(2.0 * z) - 0.5 * chi * (s.real * s.real + s.imag * s.imag)
    a = 0.5j * (mu / l) * dd
    b = 0.5j * l * g * s
    return a + b, a - b


@numba.njit(cache=True)
def _rk4(pp, pm, eps, vbar, chi, l, mu, z0, h, n, limit, out_p, out_m):
    """Classical RK4 over n steps of (signed) size h from z0.  Returns (pp, pm, ok)."""
    store = out_p.shape[0] == n + 1
    if store:
        out_p[0] = pp
        out_m[0] = pm
    lim2 = limit * limit
    for k in range(n):
        z = z0 + k * h
        k1p, k1m = _deriv(z, pp, pm, eps, vbar, chi, l, mu)
        k2p, k2m = _deriv(z + 0.5 * h, pp + 0.5 * h * k1p, pm + 0.5 * h * k1m, eps, vbar, chi, l, mu)
        k3p, k3m = _deriv(z + 0.5 * h, pp + 0.5 * h * k2p, pm + 0.5 * h * k2m, eps, vbar, chi, l, mu)
        k4p, k4m = _deriv(z + h, pp + h * k3p, pm + h * k3m, eps, vbar, chi, l, mu)
        pp = pp + (h / 6.0) * (k1p + 2.0 * k2p + 2.0 * k3p + k4p)
        pm = pm + (h / 6.0) * (k1m + 2.0 * k2m + 2.0 * k3m + k4m)
        if store:
            out_p[k + 1] = pp
            out_m[k + 1] = pm
        mp = pp.real * pp.real + pp.imag * pp.imag
        mm = pm.real * pm.real + pm.imag * pm.imag
        if not (mp <= lim2 and mm <= lim2):
            return pp, pm, False
    return pp, pm, True


_EMPTY = np.zeros(0, dtype=np.complex128)


def rhs(z, psi_plus, psi_minus, eps, ep: EffectiveParams, chibar=None):
    """Spatial derivatives of (psi_plus, psi_minus); ``chibar`` overrides ``ep.chibar``."""
    chi = ep.chibar if chibar is None else complex(chibar)
    S = psi_plus + psi_minus
    D = psi_plus - psi_minus
    G = eps - ep.Vbar - ep.Vbar * np.cos(2.0 * z) - 0.5 * chi * np.abs(S) ** 2
    a = 0.5j * (ep.massRatio / ep.lcoh) * D
    b = 0.5j * ep.lcoh * G * S
    return a + b, a - b


def _limit(alpha, psi_plus0, psi_minus0):
    scale = abs(alpha) if alpha is not None else max(abs(psi_plus0), abs(psi_minus0))
    if scale == 0:
        scale = max(abs(psi_plus0), abs(psi_minus0), 1.0)
    return OVERFLOW_FACTOR * scale


def _endpoint(pp0, pm0, eps, ep, grid, chi, limit):
    pp, pm, ok = _rk4(complex(pp0), complex(pm0), float(eps), float(ep.Vbar), complex(chi),
                      float(ep.lcoh), complex(ep.massRatio), 0.0, grid.h, int(grid.n_steps),
                      float(limit), _EMPTY, _EMPTY)
    if not ok:
        raise FieldOverflow(f"field exceeded {limit:.3g} during integration at eps={eps}")
    return pp, pm


def input_for_output(tau, eps, ep: EffectiveParams, grid: Grid, limit=math.inf):
    """(psi_plus(0), psi_minus(0)) reached by integrating back from psi_plus(d)=tau, psi_minus(d)=0."""
    pp, pm, ok = _rk4(complex(tau), 0j, float(eps), float(ep.Vbar), complex(ep.chibar), float(ep.lcoh),
                      complex(ep.massRatio), float(grid.d), -grid.h, int(grid.n_steps), float(limit),
                      _EMPTY, _EMPTY)
    if not ok:
        raise FieldOverflow(f"field exceeded {limit:.3g} in backward integration at eps={eps}")
    return pp, pm


def integrate_ivp(psi_plus0, psi_minus0, eps, ep: EffectiveParams, grid: Grid, chibar=None,
                  alpha=None) -> FieldSolution:
    """Integrate from the left end with given initial data (no boundary conditions imposed)."""
    chi = ep.chibar if chibar is None else complex(chibar)
    n = grid.n_steps
    out_p = np.empty(n + 1, dtype=np.complex128)
    out_m = np.empty(n + 1, dtype=np.complex128)
    limit = _limit(alpha, psi_plus0, psi_minus0)
    _, _, ok = _rk4(complex(psi_plus0), complex(psi_minus0), float(eps), float(ep.Vbar), chi,
                    float(ep.lcoh), complex(ep.massRatio), 0.0, grid.h, n, float(limit), out_p, out_m)
    if not ok:
        raise FieldOverflow(f"field exceeded {limit:.3g} during integration at eps={eps}")
    a = complex(psi_plus0) if alpha is None else complex(alpha)
    return FieldSolution(z=grid.z, psi_plus=out_p, psi_minus=out_m, epsilon=float(eps), alpha=a)


def solve_linear(eps, alpha, ep: EffectiveParams, grid: Grid) -> FieldSolution:
    """Exact linear transmission problem by superposition of two basis integrations."""
    alpha = complex(alpha)
    u = integrate_ivp(1.0, 0.0, eps, ep, grid, chibar=0.0, alpha=1.0)
    v = integrate_ivp(0.0, 1.0, eps, ep, grid, chibar=0.0, alpha=1.0)
    M = np.array([[1.0, 0.0], [u.psi_minus[-1], v.psi_minus[-1]]], dtype=complex)
    cond = np.linalg.cond(M)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise SingularSystem(f"boundary system singular at eps={eps} (cond={cond:.3g})")
    a, b = np.linalg.solve(M, np.array([alpha, 0.0], dtype=complex))
    psi_p = a * u.psi_plus + b * v.psi_plus
    psi_m = a * u.psi_minus + b * v.psi_minus
    psi_p[0] = alpha
    T, R = _transmission(psi_p, psi_m, alpha)
    return FieldSolution(z=grid.z, psi_plus=psi_p, psi_minus=psi_m, epsilon=float(eps), alpha=alpha,
                         T=T, R=R, residual=float(abs(psi_m[-1])), iterations=0)


def linear_guess(eps, alpha, ep, grid):
    """psi_minus(0) of the linear solution, used to cold-start Newton."""
    return solve_linear(eps, alpha, ep, grid).shooting_value


def shooting_residual(s, eps, alpha, ep, grid, limit=None):
    """psi_minus(d) for the shooting value s = psi_minus(0)."""
    if limit is None:
        limit = _limit(alpha, alpha, s)
    _, pm = _endpoint(alpha, s, eps, ep, grid, ep.chibar, limit)
    return pm


def _fd_jacobian(func, s, f0, step):
    J = np.empty((2, 2))
    for col, ds in enumerate((step, 1j * step)):
        f1 = func(s + ds)
        df = (f1 - f0) / step
        J[0, col] = df.real
        J[1, col] = df.imag
    return J


def newton_shoot(residual, guess, tol, scale, settings: SolverSettings):
    """Damped Newton on a complex scalar unknown with a 2x2 real FD Jacobian.

    Returns (s, |F|, iterations).  Raises DivergedGuess if the starting guess
    itself overflows, NoConvergence otherwise.
    """
    s = complex(guess)
    try:
        f = residual(s)
    except FieldOverflow as exc:
        raise DivergedGuess(str(exc)) from exc
    nf = abs(f)
    it = 0
    while nf > tol:
        if it >= settings.max_newton_iters:
            raise NoConvergence(f"no convergence after {it} iterations (|F|={nf:.3g})", s, nf)
        it += 1
        step = settings.fd_step * max(abs(s), scale)
        try:
            J = _fd_jacobian(residual, s, f, step)
            dx = np.linalg.solve(J, [-f.real, -f.imag])
        except (FieldOverflow, np.linalg.LinAlgError) as exc:
            raise NoConvergence(f"Jacobian failure: {exc}", s, nf) from exc
        ds = complex(dx[0], dx[1])
        lam = 1.0
        for _ in range(settings.max_halvings + 1):
            trial = s + lam * ds
            try:
                ft = residual(trial)
                nt = abs(ft)
            except FieldOverflow:
                nt = math.inf
            if nt < nf:
                break
            lam *= 0.5
        else:
            raise NoConvergence(f"line search stalled at |F|={nf:.3g}", s, nf)
        s, f, nf = trial, ft, nt
    return s, nf, it


def output_roots(eps, alpha, ep: EffectiveParams, grid: Grid, n_samples=600, tau_max=None):
    """Shooting values of every solution found by scanning the transmitted amplitude.

    Fixing ``psi_plus(d) = tau`` real and ``psi_minus(d) = 0`` makes the problem an
    initial-value one in the backward direction; a solution for drive ``alpha``
    is a root of ``|psi_plus(0; tau)| - |alpha|`` rotated by a global phase.
    Roots are bracketed on a uniform ``tau`` grid and refined with Brent's method,
    so closely spaced pairs below the sampling resolution can be missed.
    """
    alpha = complex(alpha)
    a = abs(alpha)
    if a == 0:
        return [0j]
    tau_max = 2.0 * a if tau_max is None else tau_max
    limit = OVERFLOW_FACTOR * a

    def g(tau):
        try:
            pp, _ = input_for_output(tau, eps, ep, grid, limit)
        except FieldOverflow:
            return limit
        return abs(pp) - a

    taus = np.linspace(0.0, tau_max, n_samples + 1)[1:]
    vals = np.array([g(t) for t in taus])
    roots = []
    prev_t, prev_v = 0.0, -a
    for t, v in zip(taus, vals):
        if v == 0.0:
            roots.append(t)
        elif prev_v < 0.0 < v or v < 0.0 < prev_v:
            roots.append(brentq(g, prev_t, t, xtol=1e-15 * a, rtol=1e-15))
        prev_t, prev_v = t, v
    out = []
    for tau in roots:
        pp, pm = input_for_output(tau, eps, ep, grid, limit)
        out.append(complex(pm * alpha / pp))
    return out


def solve_nonlinear(eps, alpha, ep: EffectiveParams, grid: Grid, guess=None,
                    settings: SolverSettings | None = None) -> FieldSolution:
    """Nonlinear two-point problem by shooting on psi_minus(0).

    Without a guess the linear solution seeds Newton; if that start fails, the
    roots of the transmitted-amplitude scan are tried, nearest to the linear
    guess first.
    """
    settings = settings or SolverSettings()
    alpha = complex(alpha)
    tol = settings.tol_for(alpha)
    scale = max(abs(alpha), 1e-300)

    def attempt(start):
        limit = _limit(alpha, alpha, start)
        return newton_shoot(lambda s: shooting_residual(s, eps, alpha, ep, grid, limit),
                            start, tol, scale, settings)

    if guess is not None:
        s, nf, it = attempt(guess)
    else:
        lin = linear_guess(eps, alpha, ep, grid)
        try:
            s, nf, it = attempt(lin)
        except (NoConvergence, FieldOverflow) as exc:
            first_error = exc
            for start in sorted(output_roots(eps, alpha, ep, grid), key=lambda r: abs(r - lin)):
                try:
                    s, nf, it = attempt(start)
                    break
                except (NoConvergence, FieldOverflow):
                    continue
            else:
                raise first_error
    sol = integrate_ivp(alpha, s, eps, ep, grid, alpha=alpha)
    T, R = _transmission(sol.psi_plus, sol.psi_minus, alpha)
    return FieldSolution(z=sol.z, psi_plus=np.array(sol.psi_plus), psi_minus=np.array(sol.psi_minus),
                         epsilon=float(eps), alpha=alpha, T=T, R=R,
                         residual=float(abs(sol.psi_minus[-1])), iterations=it)
