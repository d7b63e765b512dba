"""Linear stability of stationary solutions.

A perturbation ``dpsi`` of the symmetric field ``psi0 = (psi_plus + psi_minus)/sqrt(2)``
evolves, in recoil units and in the frame rotating at the drive detuning, as::

    i dpsi/dt = -(1/mu) dpsi'' + (V + V cos 2z - eps) dpsi
                + 2 chi |psi0|^2 dpsi + chi psi0^2 C(dpsi)

with ``C(dpsi) = dpsi`` (default, "direct" coupling) or ``conj(dpsi)``
(Bogoliubov coupling).  The conjugate form is the exact linearisation of the
stationary coupled-mode equations written for ``psi0``; the direct form keeps
its coefficients with ``dpsi`` in place of ``conj(dpsi)``.  With ``mu = 1``,
``V = chi = 0`` the dispersion is ``omega = k^2``, matching plane waves of
wave number ``sqrt(eps)`` in the stationary problem.  At a fold of the
stationary branch the conjugate form has a zero eigenvalue.

The ends carry outgoing Robin conditions
``dpsi(0) - i (l/mu) dpsi'(0) = 0`` and ``dpsi(d) + i (l/mu) dpsi'(d) = 0``,
closed with second-order one-sided differences so that the boundary nodes are
algebraic functions of their two inner neighbours.  The interior operator
stays tridiagonal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.interpolate import CubicSpline

from .coupled_modes import FieldSolution
from .errors import (BlowupBeyondLinearRegime, GridMismatch, LinearSolveFailure, ParameterError,
                     ZeroNorm)
from .params import EffectiveParams

NORMS = ("max", "probe")


@dataclass(frozen=True)
class GaussianSeed:
    center: float
    width: float
    amplitude: float

    def profile(self, z):
        return self.amplitude * np.exp(-((z - self.center) / self.width) ** 2)


@dataclass(frozen=True)
class StabilityOptions:
    dt: float = 0.01
    t_end: float = 50.0
    snapshot_every: float = 0.5
    norm: str = "max"
    probe_z: float | None = None  # None: middle of the domain
    conjugate: bool = False
    rate_tol: float = 1e-3
    blowup_factor: float = 1e3

    def __post_init__(self):
        if not (self.dt > 0 and self.t_end > 0 and self.snapshot_every > 0):
            raise ParameterError("dt, t_end and snapshot_every must be positive")
        if self.snapshot_every < self.dt:
            raise ParameterError("snapshot_every must be >= dt")
        if self.norm not in NORMS:
            raise ParameterError(f"norm must be one of {NORMS}")
        if not self.rate_tol > 0:
            raise ParameterError("rate_tol must be positive")


@dataclass(frozen=True)
class PerturbationState:
    delta_psi: np.ndarray
    t: float


@dataclass
class StabilityReport:
    xi_series: list  # [(t, xi)]
    asymptotic_rate: float
    verdict: str
    branch: str = "unique"
    norms: list = field(default_factory=list)  # [(t, N(t))]
    halted_early: bool = False
    max_boundary_residual: float = 0.0


class LinearizedOperator:
    """Discrete linearised generator ``dv/dt = G v`` on the interior nodes.

    For the direct coupling ``v`` is the interior perturbation; for the
    conjugate coupling ``v = (dpsi, conj(dpsi))`` stacked.
    """

    def __init__(self, base: FieldSolution, ep: EffectiveParams, conjugate=False, z=None):
        self.ep = ep
        self.conjugate = conjugate
        self.eps = base.epsilon
        zb = np.asarray(base.z)
        psi0 = base.symmetric
        if z is None:
            z = zb
        else:
            z = np.asarray(z, dtype=float)
            if abs(z[0]) > 1e-12 or abs(z[-1] - zb[-1]) > 1e-9 * max(1.0, zb[-1]):
                raise GridMismatch("stability grid must span the same interval as the base solution")
            if len(z) != len(zb) or np.max(np.abs(z - zb)) > 1e-12:
                psi0 = (CubicSpline(zb, psi0.real)(z) + 1j * CubicSpline(zb, psi0.imag)(z))
        n = len(z) - 1
        if n < 4:
            raise GridMismatch("stability grid needs at least 5 points")
        self.z = z
        self.psi0 = psi0
        self.h = h = z[1] - z[0]
        if np.max(np.abs(np.diff(z) - h)) > 1e-9 * h:
            raise GridMismatch("stability grid must be uniform")
        mu = ep.massRatio
        chi = ep.chibar
        self.c = c = 1j * ep.lcoh / mu
        self.bc = c / (2 * h + 3 * c)  # boundary node = bc * (4 inner - next inner)

        zi = z[1:-1]
        pot = ep.Vbar + ep.Vbar * np.cos(2.0 * zi) - self.eps
        p0 = psi0[1:-1]
        self.diag_potential = pot + 2.0 * chi * np.abs(p0) ** 2
        self.coupling = chi * p0**2
        self.A0 = self._kinetic(mu, self.bc, n) + sp.diags(self.diag_potential)
        if conjugate:
            Acc = self._kinetic(np.conj(mu), np.conj(self.bc), n) + sp.diags(np.conj(self.diag_potential))
            B = sp.diags(self.coupling)
            self.G = sp.bmat([[-1j * self.A0, -1j * B], [1j * B.conj(), 1j * Acc]], format="csc")
        else:
            self.G = (-1j * (self.A0 + sp.diags(self.coupling))).tocsc()
        self.n_interior = n - 1

    def _kinetic(self, mu, bc, n):
        m = n - 1
        k = -1.0 / (mu * self.h**2)
        main = np.full(m, -2.0 * k, dtype=complex)
        off = np.full(m - 1, k, dtype=complex)
        A = sp.diags([off, main, off], [-1, 0, 1], format="lil", dtype=complex)
        # node 0 = bc(4 d1 - d2) folded into row 1; node n likewise into row n-1
        A[0, 0] += k * 4.0 * bc
        A[0, 1] += -k * bc
        A[m - 1, m - 1] += k * 4.0 * bc
        A[m - 1, m - 2] += -k * bc
        return A.tocsr()

    def pack(self, full):
        inner = np.asarray(full, dtype=complex)[1:-1]
        if self.conjugate:
            return np.concatenate([inner, np.conj(inner)])
        return inner

    def unpack(self, v):
        inner = v[: self.n_interior]
        left = self.bc * (4.0 * inner[0] - inner[1])
        right = self.bc * (4.0 * inner[-1] - inner[-2])
        return np.concatenate([[left], inner, [right]])

    def apply(self, full):
        """Time derivative of a full-grid perturbation (boundary nodes closed by Robin)."""
        v = self.pack(full)
        dv = self.G @ v
        return self.unpack(dv)

    def boundary_residual(self, full):
        h, c = self.h, self.c
        d0 = (-3 * full[0] + 4 * full[1] - full[2]) / (2 * h)
        dn = (3 * full[-1] - 4 * full[-2] + full[-3]) / (2 * h)
        return max(abs(full[0] - c * d0), abs(full[-1] + c * dn))

    def eigenvalues(self):
        return scipy.linalg.eigvals(self.G.toarray())

    def max_growth(self):
        return float(np.max(self.eigenvalues().real))


def linearized_rhs(delta_psi, base: FieldSolution, ep: EffectiveParams, conjugate=False):
    delta_psi = np.asarray(delta_psi, dtype=complex)
    if delta_psi.shape != base.psi_plus.shape:
        raise GridMismatch(f"perturbation has {delta_psi.shape}, base has {base.psi_plus.shape}")
    return LinearizedOperator(base, ep, conjugate=conjugate).apply(delta_psi)


def growth_rate_xi(first: PerturbationState, second: PerturbationState, norm="max", probe_index=None):
    dt = second.t - first.t
    if dt <= 0:
        raise ParameterError("snapshots must be time ordered")
    n1 = _norm(first.delta_psi, norm, probe_index)
    n2 = _norm(second.delta_psi, norm, probe_index)
    if n1 == 0 or n2 == 0:
        raise ZeroNorm(f"perturbation norm vanished at t={first.t if n1 == 0 else second.t}")
    return (math.log(n2) - math.log(n1)) / dt


def _norm(delta_psi, norm, probe_index):
    if norm == "max":
        return float(np.max(np.abs(delta_psi)))
    return float(abs(delta_psi[probe_index].real))


def _verdict(rate, tol):
    if not math.isfinite(rate):
        return "inconclusive"
    if rate > tol:
        return "unstable"
    if rate < -tol:
        return "stable"
    return "inconclusive"


def default_seed(base: FieldSolution, rel_amplitude=1e-4):
    d = float(base.z[-1])
    scale = float(np.max(np.abs(base.symmetric)))
    amp = rel_amplitude * scale if scale > 0 else 1e-8
    return GaussianSeed(center=0.5 * d, width=0.05 * d, amplitude=amp)


def evolve_perturbation(base: FieldSolution, ep: EffectiveParams, seed: GaussianSeed,
                        options: StabilityOptions | None = None, branch="unique", z=None,
                        operator: LinearizedOperator | None = None):
    """Crank-Nicolson evolution of the linearised equation from a Gaussian seed.

    Returns ``(snapshots, report)``.
    """
    opts = options or StabilityOptions()
    op = operator or LinearizedOperator(base, ep, conjugate=opts.conjugate, z=z)
    base_scale = float(np.max(np.abs(op.psi0)))
    if base_scale > 0 and abs(seed.amplitude) > 1e-3 * base_scale:
        raise ParameterError(
            f"seed amplitude {seed.amplitude:.3g} exceeds 1e-3 of the base amplitude {base_scale:.3g}")
    zgrid = op.z
    delta0 = seed.profile(zgrid).astype(complex)
    v = op.pack(delta0)
    delta0 = op.unpack(v)
    probe_index = None
    if opts.norm == "probe":
        pz = 0.5 * zgrid[-1] if opts.probe_z is None else opts.probe_z
        probe_index = int(np.argmin(np.abs(zgrid - pz)))

    snapshots = [PerturbationState(delta0, 0.0)]
    if seed.amplitude == 0:
        report = StabilityReport(xi_series=[], asymptotic_rate=float("nan"), verdict="inconclusive",
                                 branch=branch, norms=[(0.0, 0.0)])
        return snapshots, report

    n_steps = int(round(opts.t_end / opts.dt))
    per_snap = max(1, int(round(opts.snapshot_every / opts.dt)))
    dt = opts.t_end / n_steps
    I = sp.identity(op.G.shape[0], dtype=complex, format="csc")
    lhs = (I - 0.5 * dt * op.G).tocsc()
    rhs_mat = (I + 0.5 * dt * op.G).tocsr()
    try:
        lu = spla.splu(lhs)
    except RuntimeError as exc:
        raise LinearSolveFailure(f"factorisation failed: {exc}") from exc

    limit = opts.blowup_factor * abs(seed.amplitude)
    halted = False
    max_res = op.boundary_residual(delta0) / max(np.max(np.abs(delta0)), 1e-300)
    for k in range(1, n_steps + 1):
        v = lu.solve(rhs_mat @ v)
        if not np.all(np.isfinite(v)):
            raise LinearSolveFailure(f"non-finite perturbation at step {k}")
        last = k == n_steps
        if k % per_snap == 0 or last:
            full = op.unpack(v)
            amp = float(np.max(np.abs(full)))
            max_res = max(max_res, op.boundary_residual(full) / max(amp, 1e-300))
            snapshots.append(PerturbationState(full, k * dt))
            if amp > limit:
                halted = not last
                break
        elif np.max(np.abs(v[: op.n_interior])) > limit:
            full = op.unpack(v)
            snapshots.append(PerturbationState(full, k * dt))
            halted = not last
            break

    xi, norms = [], [(s.t, _norm(s.delta_psi, opts.norm, probe_index)) for s in snapshots]
    for a, b in zip(snapshots[:-1], snapshots[1:]):
        try:
            xi.append((b.t, growth_rate_xi(a, b, opts.norm, probe_index)))
        except ZeroNorm:
            xi.append((b.t, float("nan")))
    t_last = snapshots[-1].t
    window = [x for t, x in xi if t > 0.75 * t_last + 1e-12]
    rate = float(np.mean(window)) if window else float("nan")
    verdict = "unstable" if halted else _verdict(rate, opts.rate_tol)
    report = StabilityReport(xi_series=xi, asymptotic_rate=rate, verdict=verdict, branch=branch,
                             norms=norms, halted_early=halted, max_boundary_residual=max_res)
    return snapshots, report


def classify_branches(branch_solutions: dict, ep: EffectiveParams, seed: GaussianSeed | None = None,
                      options: StabilityOptions | None = None):
    """Run ``evolve_perturbation`` for each labelled stationary solution."""
    reports = {}
    for label, sol in branch_solutions.items():
        s = seed if seed is not None else default_seed(sol)
        _, reports[label] = evolve_perturbation(sol, ep, s, options, branch=label)
    return reports
