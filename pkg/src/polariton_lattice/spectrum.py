"""Transmission spectra, branch tracking through folds and peak analysis."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.optimize
import scipy.signal

from .coupled_modes import (FieldOverflow, FieldSolution, Grid, SolverSettings, _limit, integrate_ivp,
                            shooting_residual, solve_linear, solve_nonlinear)
from .errors import EmptySpectrum, NoConvergence, ParameterError, PolaritonLatticeError, SingularSystem
from .params import EffectiveParams

log = logging.getLogger(__name__)

ARC_MARGIN = 0.25
DEDUP_REL = 1e-6


@dataclass(frozen=True)
class SpectrumPoint:
    epsilon: float
    T: float
    R: float
    shooting_value: complex
    branch_id: int = 0
    arc_index: int = 0
    converged: bool = True
    label: str = "unique"
    newton_iters: int = 0
    residual: float = 0.0
    source: str = ""


@dataclass
class Fold:
    epsilon: float
    shooting_value: complex
    T: float


@dataclass
class ArcCurve:
    """Raw pseudo-arclength path: columns (eps, Re s, Im s) in physical units."""
    eps: np.ndarray
    s: np.ndarray
    folds: list
    truncated: bool
    steps: int


@dataclass
class Spectrum:
    points: list
    alpha: complex = 1.0
    multivalued: list = field(default_factory=list)  # [(eps_lo, eps_hi)]
    folds: list = field(default_factory=list)
    curves: list = field(default_factory=list)
    truncated: bool = False
    failures: int = 0

    def __iter__(self):
        return iter(self.points)

    def __len__(self):
        return len(self.points)

    def __getitem__(self, i):
        return self.points[i]

    def grid_values(self):
        return sorted({p.epsilon for p in self.points})

    def at(self, eps, tol=1e-9):
        """Converged solutions at one scan value (matched to within ``tol`` relative)."""
        tol = tol * max(1.0, abs(eps))
        return [p for p in self.points if abs(p.epsilon - eps) <= tol and p.converged]

    def counts(self):
        """(eps, number of distinct converged solutions) in scan order."""
        out = {}
        for p in self.points:
            out.setdefault(p.epsilon, 0)
            if p.converged:
                out[p.epsilon] += 1
        return sorted(out.items())

    def envelope(self, which="L"):
        """Single-valued (eps, T) curve: lowest (L) or highest (U) converged T per eps."""
        pick = min if which == "L" else max
        eps, T = [], []
        for e, _ in self.counts():
            sols = self.at(e)
            if sols:
                eps.append(e)
                T.append(pick(p.T for p in sols))
        return np.array(eps), np.array(T)


@dataclass
class PeakReport:
    peak_positions: list
    peak_heights: list
    first_peak_shift: float = float("nan")
    prominences: list = field(default_factory=list)


def _eps_grid(eps_range, n_points):
    if n_points < 2:
        raise ParameterError("n_points must be >= 2")
    lo, hi = map(float, eps_range)
    if hi < lo:
        raise ParameterError("eps_range must be increasing")
    return np.linspace(lo, hi, n_points)


def _point_from(sol: FieldSolution, **kw):
    return SpectrumPoint(epsilon=sol.epsilon, T=sol.T, R=sol.R, shooting_value=sol.shooting_value,
                         newton_iters=sol.iterations, residual=sol.residual, **kw)


def _failed(eps, **kw):
    nan = float("nan")
    return SpectrumPoint(epsilon=float(eps), T=nan, R=nan, shooting_value=complex(nan, nan),
                         converged=False, residual=nan, **kw)


def scan_linear(eps_range, n_points, ep: EffectiveParams, grid: Grid, alpha=1.0) -> Spectrum:
    points, failures = [], 0
    for k, e in enumerate(_eps_grid(eps_range, n_points)):
        try:
            sol = solve_linear(e, alpha, ep, grid)
            points.append(_point_from(sol, arc_index=k, source="linear"))
        except (SingularSystem, FieldOverflow) as exc:
            log.warning("linear solve failed at eps=%g: %s", e, exc)
            points.append(_failed(e, arc_index=k, source="linear"))
            failures += 1
    return Spectrum(points=points, alpha=complex(alpha), failures=failures)


# ---------------------------------------------------------------- continuation


def _natural_pass(eps_values, order, alpha, ep, grid, settings):
    out = {}
    s = None
    for i in order:
        sol = None
        for guess in ((s, None) if s is not None else (None,)):
            try:
                sol = solve_nonlinear(eps_values[i], alpha, ep, grid, guess=guess, settings=settings)
                break
            except PolaritonLatticeError:
                continue
        out[i] = sol
        s = sol.shooting_value if sol is not None else None
    return out


class _ArcSystem:
    """Residual in scaled variables x = (Re s/|a|, Im s/|a|, eps/width)."""

    def __init__(self, alpha, ep, grid, width, settings):
        self.alpha = complex(alpha)
        self.scale = abs(alpha)
        self.ep, self.grid = ep, grid
        self.width = width
        self.settings = settings
        self.limit = _limit(alpha, alpha, 0.0)
        self.tol = settings.tol_for(alpha) / self.scale

    def to_phys(self, x):
        return complex(x[0], x[1]) * self.scale, x[2] * self.width

    def F(self, x):
        s, e = self.to_phys(x)
        r = shooting_residual(s, e, self.alpha, self.ep, self.grid, self.limit) / self.scale
        return np.array([r.real, r.imag])

    def jac(self, x, f0):
        h = self.settings.fd_step * max(1.0, np.max(np.abs(x[:2])))
        J = np.empty((2, 3))
        for k in range(3):
            hk = h if k < 2 else self.settings.fd_step * max(1.0, abs(x[2]))
            xp = x.copy()
            xp[k] += hk
            J[:, k] = (self.F(xp) - f0) / hk
        return J


def _tangent(J, prev=None):
    _, _, vt = np.linalg.svd(J)
    t = vt[-1]
    if prev is not None and np.dot(t, prev) < 0:
        t = -t
    return t / np.linalg.norm(t)


def arclength_trace(start_s, start_eps, direction, alpha, ep, grid, settings, eps_bounds,
                    width, ds_limits=(1e-4, 1e-1), max_steps=20000, max_turn=0.35):
    """Pseudo-arclength continuation from a converged point until eps leaves ``eps_bounds``.

    ``direction`` (+1/-1) fixes the initial sign of d(eps)/ds.  Steps live in
    the scaled variables, so ``ds_limits`` are fractions of the scan width.
    """
    sys = _ArcSystem(alpha, ep, grid, width, settings)
    x = np.array([start_s.real / sys.scale, start_s.imag / sys.scale, start_eps / width])
    f = sys.F(x)
    t = _tangent(sys.jac(x, f))
    if t[2] * direction < 0:
        t = -t
    ds_min, ds_max = ds_limits
    ds = min(ds_max, max(ds_min, 0.01))
    path = [x.copy()]
    folds, truncated, steps = [], False, 0
    lo, hi = eps_bounds
    while steps < max_steps:
        steps += 1
        xp = x + ds * t
        y = xp.copy()
        ok = False
        it = 0
        try:
            for it in range(12):
                fy = sys.F(y)
                if np.linalg.norm(fy) <= sys.tol and it > 0:
                    ok = True
                    break
                M = np.vstack([sys.jac(y, fy), t])
                g = np.concatenate([fy, [np.dot(t, y - xp)]])
                y = y + np.linalg.solve(M, -g)
                if not np.all(np.isfinite(y)):
                    break
            else:
                ok = np.linalg.norm(sys.F(y)) <= sys.tol
            t_new = None
            if ok:
                t_new = _tangent(sys.jac(y, sys.F(y)), t)
                if math.acos(min(1.0, abs(float(np.dot(t_new, t))))) > max_turn and ds > ds_min:
                    ok = False
        except (FieldOverflow, np.linalg.LinAlgError):
            ok = False
        if not ok:
            if ds <= ds_min * (1 + 1e-12):
                truncated = True
                break
            ds = max(ds_min, ds * 0.5)
            continue
        if t_new[2] * t[2] < 0:
            folds.append(_refine_fold(path[-1], y, t, t_new, sys))
        x, t = y, t_new
        path.append(x.copy())
        if it <= 3:
            ds = min(ds_max, ds * 1.5)
        eps_now = x[2] * width
        if eps_now > hi or eps_now < lo:
            break
    else:
        truncated = True
    arr = np.array(path)
    s = (arr[:, 0] + 1j * arr[:, 1]) * sys.scale
    return ArcCurve(eps=arr[:, 2] * width, s=s, folds=folds, truncated=truncated, steps=steps)


def _correct_on_plane(sys, xp, u):
    """Newton-correct onto the solution curve within the hyperplane through ``xp`` normal to ``u``."""
    y = xp.copy()
    for _ in range(12):
        fy = sys.F(y)
        if np.linalg.norm(fy) <= sys.tol:
            return y
        M = np.vstack([sys.jac(y, fy), u])
        y = y + np.linalg.solve(M, -np.concatenate([fy, [np.dot(u, y - xp)]]))
    if np.linalg.norm(sys.F(y)) > sys.tol:
        raise NoConvergence("fold corrector did not converge")
    return y


def _refine_fold(x0, x1, t0, t1, sys):
    """Locate d(eps)/ds = 0 between two path points.

    Points on the curve are parametrised by their projection on the chord
    x0 -> x1; the eps-component of the tangent is bracketed and solved for.
    Falls back to linear interpolation of the tangent if correction fails.
    """
    chord = x1 - x0
    length = float(np.linalg.norm(chord))
    u = chord / length

    def slope(sig):
        y = _correct_on_plane(sys, x0 + sig * u, u)
        return _tangent(sys.jac(y, sys.F(y)), t0)[2]

    try:
        sig = scipy.optimize.brentq(slope, 0.0, length, xtol=1e-12 * max(length, 1e-300))
        x = _correct_on_plane(sys, x0 + sig * u, u)
    except (ValueError, PolaritonLatticeError, np.linalg.LinAlgError):
        w = t0[2] / (t0[2] - t1[2])
        x = (1 - w) * x0 + w * x1
    s, e = sys.to_phys(x)
    try:
        sol = integrate_ivp(sys.alpha, s, e, sys.ep, sys.grid, alpha=sys.alpha)
        T = abs(sol.psi_plus[-1]) ** 2 / abs(sys.alpha) ** 2
    except FieldOverflow:
        T = float("nan")
    return Fold(epsilon=float(e), shooting_value=s, T=float(T))


def _sample_curve(curve: ArcCurve, eps_values, idx_range, alpha, ep, grid, settings):
    """Newton-corrected solutions where the path crosses scan values.

    Returns [(grid index, position along path, sheet, FieldSolution)].
    """
    out = []
    sheet_at = np.zeros(len(curve.eps), dtype=int)
    de = np.diff(curve.eps)
    sign = np.sign(de)
    sheet = 0
    last = 0
    for k in range(len(de)):
        if sign[k] != 0:
            if last != 0 and sign[k] != last:
                sheet += 1
            last = sign[k]
        sheet_at[k + 1] = sheet
    i_lo, i_hi = idx_range
    for k in range(len(de)):
        e0, e1 = curve.eps[k], curve.eps[k + 1]
        a, b = min(e0, e1), max(e0, e1)
        for i in range(i_lo, i_hi + 1):
            e = eps_values[i]
            # half-open so a scan value on a path node is sampled once per direction
            if not (a <= e < b or (e == b and k == len(de) - 1)):
                continue
            w = 0.0 if e1 == e0 else (e - e0) / (e1 - e0)
            guess = curve.s[k] + w * (curve.s[k + 1] - curve.s[k])
            try:
                sol = solve_nonlinear(e, alpha, ep, grid, guess=guess, settings=settings)
            except PolaritonLatticeError:
                continue
            out.append((i, k + w, int(sheet_at[k + 1] if sign[k] == 0 else sheet_at[k + 1]), sol))
    return out


def _distinct(a: complex, b: complex, alpha):
    return abs(a - b) > DEDUP_REL * max(abs(alpha), 1e-300)


def dedupe(candidates, alpha):
    """Cluster candidates whose shooting values lie within the dedup threshold.

    Connected components of the threshold graph, so the relation used is
    symmetric and transitive by construction.  Each candidate is
    ``(priority, key, solution_like)``; the lowest priority represents a cluster.
    """
    n = len(candidates)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            if not _distinct(candidates[i][2].shooting_value, candidates[j][2].shooting_value, alpha):
                parent[find(i)] = find(j)
    groups = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(candidates[i])
    reps = [min(g, key=lambda c: (c[0], c[1])) for g in groups.values()]
    return sorted(reps, key=lambda c: c[1])


def label_by_transmission(sols):
    """U/M/L by descending T when three coexist; 'unique' when one."""
    order = sorted(range(len(sols)), key=lambda k: -sols[k].T)
    labels = [None] * len(sols)
    n = len(sols)
    for rank, k in enumerate(order):
        if n == 1:
            labels[k] = "unique"
        elif rank == 0:
            labels[k] = "U"
        elif rank == n - 1:
            labels[k] = "L"
        else:
            labels[k] = "M"
    return labels


def _regions(flags, n):
    """Group flagged indices into padded contiguous index ranges."""
    idx = [i for i in range(n) if flags[i]]
    regions = []
    for i in idx:
        if regions and i - regions[-1][1] <= 3:
            regions[-1][1] = i
        else:
            regions.append([i, i])
    return [(max(0, a - 1), min(n - 1, b + 1)) for a, b in regions]


def scan_nonlinear(eps_range, n_points, alpha, ep: EffectiveParams, grid: Grid,
                   settings: SolverSettings | None = None, seeds=None, ds_limits=(1e-4, 1e-1)) -> Spectrum:
    """Nonlinear spectrum including every branch reachable from the scan.

    Upward and downward natural continuation are compared; wherever they
    disagree, fail, or jump, pseudo-arclength continuation is run across the
    region to pick up the middle branch.  ``seeds`` optionally maps scan
    indices to shooting guesses from an earlier run.
    """
    settings = settings or SolverSettings()
    alpha = complex(alpha)
    eps_values = _eps_grid(eps_range, n_points)
    n = len(eps_values)
    width = max(eps_values[-1] - eps_values[0], 1e-12)

    if alpha == 0:
        pts = [_point_from(solve_nonlinear(e, 0.0, ep, grid, guess=0.0, settings=settings),
                           arc_index=k, source="zero") for k, e in enumerate(eps_values)]
        return Spectrum(points=pts, alpha=alpha)

    up = _natural_pass(eps_values, range(n), alpha, ep, grid, settings)
    down = _natural_pass(eps_values, range(n - 1, -1, -1), alpha, ep, grid, settings)
    seeded = {}
    if seeds:
        for i, guesses in seeds.items():
            for g in np.atleast_1d(guesses):
                try:
                    seeded.setdefault(i, []).append(
                        solve_nonlinear(eps_values[i], alpha, ep, grid, guess=complex(g), settings=settings))
                except PolaritonLatticeError:
                    pass

    flags = [False] * n
    scale = abs(alpha)
    for pass_ in (up, down):
        steps = [abs(pass_[i].shooting_value - pass_[i - 1].shooting_value)
                 for i in range(1, n) if pass_[i] is not None and pass_[i - 1] is not None]
        typical = np.median(steps) if steps else 0.0
        for i in range(n):
            if pass_[i] is None:
                flags[i] = True
            elif i > 0 and pass_[i - 1] is not None:
                jump = abs(pass_[i].shooting_value - pass_[i - 1].shooting_value)
                if jump > max(20 * typical, 0.05 * scale):
                    flags[i] = flags[i - 1] = True
    for i in range(n):
        if up[i] is not None and down[i] is not None and _distinct(
                up[i].shooting_value, down[i].shooting_value, alpha):
            flags[i] = True
    if seeded:
        for i, sols in seeded.items():
            ref = up[i] or down[i]
            if ref is None or any(_distinct(s.shooting_value, ref.shooting_value, alpha) for s in sols):
                flags[i] = True

    regions = _regions(flags, n)
    curves, folds, truncated = [], [], False
    samples = {}  # region index -> [(i, pos, sheet, sol)]
    for r, (a, b) in enumerate(regions):
        # the path may leave the region and come back through a fold just outside it
        pad = ARC_MARGIN * width
        lo_e = eps_values[a] - pad
        hi_e = eps_values[b] + pad
        starts = []
        for anchor, direction in ((a, +1), (b, -1)):
            for cand in (up[anchor], down[anchor]):
                if cand is not None:
                    starts.append((cand, direction))
                    break
        region_samples = []
        for start, direction in starts:
            curve = arclength_trace(start.shooting_value, start.epsilon, direction, alpha, ep, grid,
                                    settings, (lo_e, hi_e), width, ds_limits=ds_limits)
            curves.append(curve)
            folds.extend(curve.folds)
            sampled = _sample_curve(curve, eps_values, (a, b), alpha, ep, grid, settings)
            if direction < 0:
                # express positions/sheets as if traced left to right
                total = len(curve.eps)
                nf = len(curve.folds)
                sampled = [(i, total - pos, nf - sh, sol) for i, pos, sh, sol in sampled]
            region_samples.append((curve, sampled))
            if not curve.truncated and direction > 0:
                break
        truncated |= any(c.truncated for c, _ in region_samples)
        samples[r] = region_samples

    folds = _dedupe_folds(folds, alpha, width)

    # global sheet numbering: every fold passed along the assembled curve starts a new sheet
    region_folds = []
    for r in range(len(regions)):
        done = [c for c, _ in samples[r] if not c.truncated]
        region_folds.append(len(done[0].folds) if done else max((len(c.folds) for c, _ in samples[r]), default=0))
    offsets = np.concatenate([[0], np.cumsum(region_folds)]).astype(int)
    region_of = {i: r for r, (a, b) in enumerate(regions) for i in range(a, b + 1)}

    per_index = {i: [] for i in range(n)}
    for i in range(n):
        r = region_of.get(i)
        if r is None:
            sheet = int(offsets[sum(1 for a, b in regions if b < i)])
        else:
            sheet = int(offsets[r])
            for curve, sampled in samples[r]:
                for j, pos, sh, sol in sampled:
                    if j == i:
                        per_index[i].append((0, pos, sol, int(offsets[r]) + sh))
        for prio, pass_ in ((1, up), (2, down)):
            if pass_[i] is not None:
                per_index[i].append((prio, 0.0, pass_[i], sheet))
        for sol in seeded.get(i, []):
            per_index[i].append((3, 0.0, sol, sheet))

    points, failures = [], 0
    source_names = {0: "arclength", 1: "up", 2: "down", 3: "seed"}
    for i in range(n):
        cands = per_index[i]
        if not cands:
            points.append(_failed(eps_values[i], branch_id=-1, source="none"))
            failures += 1
            continue
        reps = dedupe([(c[0], c[1], c[2]) for c in cands], alpha)
        sheet_of = {id(c[2]): c[3] for c in cands}
        labels = label_by_transmission([c[2] for c in reps])
        for (prio, _, sol), lab in zip(reps, labels):
            points.append(_point_from(sol, branch_id=sheet_of[id(sol)], label=lab, source=source_names[prio]))

    # even sheets run towards larger eps, odd sheets back towards smaller eps
    order = sorted(range(len(points)), key=lambda k: (
        points[k].branch_id, points[k].epsilon if points[k].branch_id % 2 == 0 else -points[k].epsilon))
    arc = {k: rank for rank, k in enumerate(order)}
    points = [replace(p, arc_index=arc[k]) for k, p in enumerate(points)]

    spectrum = Spectrum(points=points, alpha=alpha, folds=folds, curves=curves, truncated=truncated,
                        failures=failures)
    spectrum.multivalued = multivalued_intervals(spectrum)
    return spectrum


def _dedupe_folds(folds, alpha, width):
    # fold positions are interpolated between path nodes, so repeated traces agree only roughly
    out = []
    for f in sorted(folds, key=lambda f: f.epsilon):
        if all(abs(f.epsilon - g.epsilon) > 1e-3 * width
               or abs(f.shooting_value - g.shooting_value) > 1e-2 * abs(alpha) for g in out):
            out.append(f)
    return out


def multivalued_intervals(spectrum: Spectrum):
    """Contiguous scan intervals with more than one converged solution."""
    out, run = [], None
    for e, c in spectrum.counts():
        if c > 1:
            run = [e, e] if run is None else [run[0], e]
        elif run is not None:
            out.append(tuple(run))
            run = None
    if run is not None:
        out.append(tuple(run))
    return out


# ---------------------------------------------------------------- peaks


def find_peaks(spectrum, prominence=0.01, branch="L", reference=None, refine=None):
    """Local maxima of T with at least ``prominence``.

    Multi-valued spectra are reduced to the lowest (``branch="L"``) or highest
    (``"U"``) converged solution per scan value.  A peak that sits beside a
    located fold is moved onto the fold, where the envelope jumps; otherwise
    ``refine``, an optional callable ``T(eps)``, polishes it by bounded
    maximisation.
    ``reference`` is an earlier ``PeakReport`` (or spectrum) for the shift.
    """
    if isinstance(spectrum, Spectrum):
        eps, T = spectrum.envelope(branch)
    else:
        pts = [p for p in spectrum if p.converged]
        eps = np.array([p.epsilon for p in pts])
        T = np.array([p.T for p in pts])
    if len(eps) == 0:
        raise EmptySpectrum("spectrum has no converged points")
    idx, props = scipy.signal.find_peaks(T, prominence=prominence)
    folds = spectrum.folds if isinstance(spectrum, Spectrum) else []
    positions, heights = [], []
    for i in idx:
        e, t = float(eps[i]), float(T[i])
        lo, hi = eps[max(i - 1, 0)], eps[min(i + 1, len(eps) - 1)]
        # an envelope maximum next to a fold is the jump onto the other sheet
        near = [f.epsilon for f in folds if lo < f.epsilon < hi]
        if near:
            e = float(min(near, key=lambda x: abs(x - eps[i])))
        elif refine is not None and 0 < i < len(eps) - 1:
            e, t = _refine_peak(refine, lo, hi, e, t)
        positions.append(e)
        heights.append(t)
    report = PeakReport(peak_positions=positions, peak_heights=heights,
                        prominences=[float(p) for p in props.get("prominences", [])])
    if reference is not None:
        ref = reference if isinstance(reference, PeakReport) else find_peaks(reference, prominence, branch)
        if positions and ref.peak_positions:
            report.first_peak_shift = positions[0] - ref.peak_positions[0]
    return report


def _refine_peak(func, a, b, e0, t0):
    try:
        res = scipy.optimize.minimize_scalar(lambda e: -func(e), bounds=(a, b), method="bounded",
                                             options={"xatol": 1e-10})
    except PolaritonLatticeError:
        return e0, t0
    if res.success and -res.fun >= t0:
        return float(res.x), float(-res.fun)
    return e0, t0


def linear_transmission(ep, grid):
    return lambda e: solve_linear(e, 1.0, ep, grid).T


def nonlinear_transmission(alpha, ep, grid, settings=None, seed_spectrum=None):
    """T(eps) on the branch nearest to a stored guess (warm-started Newton)."""
    cache = {}

    def nearest_guess(e):
        pts = [p for p in (seed_spectrum or []) if p.converged and p.label in ("L", "unique")]
        if not pts:
            return None
        return min(pts, key=lambda p: abs(p.epsilon - e)).shooting_value

    def T(e):
        guess = cache.get("s", nearest_guess(e))
        sol = solve_nonlinear(e, alpha, ep, grid, guess=guess, settings=settings)
        cache["s"] = sol.shooting_value
        return sol.T
    return T


def shift_study(alpha_values, chi_values, base: EffectiveParams, grid: Grid, settings=None,
                eps_range=None, n_points=201, prominence=0.01):
    """First-peak shift versus effective nonlinearity chi|alpha|^2.

    Returns a list of dict rows.  The linear reference uses the same
    geometry and loss with the nonlinearity switched off.
    """
    settings = settings or SolverSettings()
    lin_ep = base.with_(chibar=0.0)
    if eps_range is None:
        eps_range = (0.05, 2.0)
    ref_spec = scan_linear(eps_range, n_points, lin_ep, grid)
    ref = find_peaks(ref_spec, prominence, refine=linear_transmission(lin_ep, grid))
    if not ref.peak_positions:
        raise EmptySpectrum("linear reference spectrum has no peak in the scan range")
    rows = []
    for a in alpha_values:
        for chi in chi_values:
            ep = base.with_(chibar=chi)
            row = {"alpha": abs(a), "chibar": complex(chi), "effective": complex(chi) * abs(a) ** 2}
            if chi == 0:
                rows.append({**row, "peak": ref.peak_positions[0], "shift": 0.0, "ok": True})
                continue
            try:
                spec = scan_nonlinear(eps_range, n_points, a, ep, grid, settings)
                refine = nonlinear_transmission(a, ep, grid, settings, spec)
                rep = find_peaks(spec, prominence, refine=refine, reference=ref)
                rows.append({**row, "peak": rep.peak_positions[0], "shift": rep.first_peak_shift,
                             "ok": spec.failures == 0})
            except PolaritonLatticeError as exc:
                log.warning("shift study row alpha=%g chi=%s failed: %s", abs(a), chi, exc)
                rows.append({**row, "peak": float("nan"), "shift": float("nan"), "ok": False})
    return rows
