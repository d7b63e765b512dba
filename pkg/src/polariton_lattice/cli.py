"""Command-line entry point.

Example:
  polariton-lattice spectrum --config bistable.cfg --out runs/bistable
  polariton-lattice stability --config bistable.cfg --seed-from runs/bistable/spectrum.csv

Exit status: 0 on full success, 1 if any point/branch failed (the failure is
recorded in the tables), 2 for configuration errors, 3 for file errors.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .config import MODES, RunConfig, parse_config
from .coupled_modes import output_roots, solve_nonlinear
from .errors import ConfigParseError, ConfigValidationError, PolaritonLatticeError
from .params import sweep_effective
from .spectrum import Spectrum, label_by_transmission, scan_linear, scan_nonlinear, shift_study
from .stability import GaussianSeed, default_seed, evolve_perturbation
from .tables import OutputTable, read_table

log = logging.getLogger("polariton_lattice")

SPECTRUM_COLUMNS = ["epsilon", "T", "R", "branch_id", "label", "converged", "newton_iters", "s_re", "s_im"]


def spectrum_table(spec: Spectrum) -> OutputTable:
    t = OutputTable(list(SPECTRUM_COLUMNS))
    for p in sorted(spec.points, key=lambda p: (p.epsilon, p.branch_id, -np.nan_to_num(p.T))):
        t.add(p.epsilon, p.T, p.R, p.branch_id, p.label, p.converged, p.newton_iters,
              p.shooting_value.real, p.shooting_value.imag)
    t.meta["multivalued"] = "; ".join(f"{a:.12g} .. {b:.12g}" for a, b in spec.multivalued) or "none"
    t.meta["failures"] = spec.failures
    t.meta["truncated"] = spec.truncated
    return t


def field_table(sol, extra=None) -> OutputTable:
    t = OutputTable(["z", "psi_plus_re", "psi_plus_im", "psi_minus_re", "psi_minus_im"])
    for z, pp, pm in zip(sol.z, sol.psi_plus, sol.psi_minus):
        t.add(z, pp.real, pp.imag, pm.real, pm.imag)
    t.meta.update(extra or {})
    return t


def load_seeds(path, eps_values):
    """Map scan indices to shooting guesses from an earlier spectrum table."""
    table = read_table(path)
    if not {"epsilon", "s_re", "s_im"} <= set(table.columns):
        raise ConfigValidationError(f"{path} is not a spectrum table (needs epsilon, s_re, s_im)")
    eps_values = np.asarray(eps_values)
    spacing = np.min(np.diff(eps_values)) if len(eps_values) > 1 else np.inf
    seeds = {}
    for row in table.rows:
        if row.get("converged") == "false":
            continue
        e = float(row["epsilon"])
        i = int(np.argmin(np.abs(eps_values - e)))
        if abs(eps_values[i] - e) <= 0.5 * spacing:
            seeds.setdefault(i, []).append(complex(float(row["s_re"]), float(row["s_im"])))
    return seeds


def run_params(cfg: RunConfig, out: Path):
    axes = list(cfg.sweep) or [("Omega", (cfg.optical.Omega,))]
    res = sweep_effective(cfg.optical, *axes, d=cfg.d)
    extra = [name for name, _ in axes if name not in ("Omega", "DeltaP")]
    t = OutputTable(["Omega", "DeltaP", *extra, "Vbar", "chibar_re", "chibar_im", "lcoh", "beta", "Lambda",
                     "status"])
    names = [name for name, _ in axes]
    for i, j, ep in res.rows():
        point = {name: float(res.axis1[1][i]) if k == 0 else float(res.axis2[1][j]) for k, name in enumerate(names)}
        om = point.get("Omega", cfg.optical.Omega)
        dp = point.get("DeltaP", cfg.optical.DeltaP)
        if ep is None:
            nan = float("nan")
            t.add(om, dp, *[point[n] for n in extra], nan, nan, nan, nan, nan, nan, res.errors[(i, j)])
        else:
            t.add(om, dp, *[point[n] for n in extra], ep.Vbar, ep.chibar.real, ep.chibar.imag, ep.lcoh,
                  ep.beta, ep.Lambda, "ok")
    t.write(out / "params.csv", cfg.config_hash)
    return len(res.errors)


def run_linear(cfg: RunConfig, out: Path):
    lo, hi, n = cfg.scan
    spec = scan_linear((lo, hi), n, cfg.effective, cfg.grid, alpha=cfg.alpha)
    spectrum_table(spec).write(out / "spectrum.csv", cfg.config_hash)
    return spec.failures


def run_spectrum(cfg: RunConfig, out: Path, seed_from=None):
    lo, hi, n = cfg.scan
    seeds = load_seeds(seed_from, np.linspace(lo, hi, n)) if seed_from else None
    spec = scan_nonlinear((lo, hi), n, cfg.alpha, cfg.effective, cfg.grid, cfg.solver, seeds=seeds)
    spectrum_table(spec).write(out / "spectrum.csv", cfg.config_hash)
    folds = OutputTable(["epsilon", "T", "s_re", "s_im"])
    for f in spec.folds:
        folds.add(f.epsilon, f.T, f.shooting_value.real, f.shooting_value.imag)
    folds.write(out / "folds.csv", cfg.config_hash)
    return spec.failures + int(spec.truncated)


def run_shift_study(cfg: RunConfig, out: Path):
    lo, hi, n = cfg.scan
    rows = shift_study(cfg.shift_alphas, cfg.shift_chis, cfg.effective, cfg.grid, cfg.solver,
                       eps_range=(lo, hi), n_points=n, prominence=cfg.prominence)
    t = OutputTable(["alpha", "chibar_re", "chibar_im", "effective_re", "effective_im", "peak", "shift", "ok"])
    for r in rows:
        t.add(r["alpha"], r["chibar"].real, r["chibar"].imag, r["effective"].real, r["effective"].imag,
              r["peak"], r["shift"], r["ok"])
    t.write(out / "shift_study.csv", cfg.config_hash)
    return sum(not r["ok"] for r in rows)


def stationary_branches(cfg: RunConfig, seed_from=None):
    """Labelled stationary solutions at the stability epsilon."""
    eps = cfg.stability_epsilon
    if cfg.scan is not None:
        lo, hi, n = cfg.scan
        grid_eps = np.linspace(lo, hi, n)
        seeds = load_seeds(seed_from, grid_eps) if seed_from else None
        spec = scan_nonlinear((lo, hi), n, cfg.alpha, cfg.effective, cfg.grid, cfg.solver, seeds=seeds)
        e = float(grid_eps[np.argmin(np.abs(grid_eps - eps))])
        starts = [p.shooting_value for p in spec.at(e)]
    else:
        e = eps
        starts = output_roots(e, cfg.alpha, cfg.effective, cfg.grid)
        if seed_from:
            table = read_table(seed_from)
            starts += [complex(float(r["s_re"]), float(r["s_im"])) for r in table.rows
                       if r.get("converged") != "false" and abs(float(r["epsilon"]) - e) <= 1e-9 * max(1, abs(e))]
    sols = []
    for s in starts:
        try:
            sol = solve_nonlinear(e, cfg.alpha, cfg.effective, cfg.grid, guess=s, settings=cfg.solver)
        except PolaritonLatticeError as exc:
            log.warning("branch at eps=%g from guess %s failed: %s", e, s, exc)
            continue
        if all(abs(sol.shooting_value - o.shooting_value) > 1e-6 * abs(cfg.alpha) for o in sols):
            sols.append(sol)
    labels = label_by_transmission(sols)
    if len(sols) > 3:  # several middle sheets share the label M
        labels = [f"{lab}{k}" if lab == "M" else lab for k, lab in enumerate(labels)]
    return e, dict(zip(labels, sols))


def run_stability(cfg: RunConfig, out: Path, seed_from=None):
    eps, branches = stationary_branches(cfg, seed_from)
    wanted = list(branches) if list(branches) == ["unique"] else [b for b in cfg.branches if b != "unique"]
    failures = 0
    summary = OutputTable(["branch", "epsilon", "T", "s_re", "s_im", "asymptotic_rate", "verdict",
                           "halted_early", "max_boundary_residual"])
    for label in wanted:
        sol = branches.get(label)
        nan = float("nan")
        if sol is None:
            log.warning("no %s branch at eps=%g", label, eps)
            summary.add(label, eps, nan, nan, nan, nan, "missing", False, nan)
            failures += 1
            continue
        base = default_seed(sol)
        seed = GaussianSeed(center=cfg.seed.get("center", base.center), width=cfg.seed.get("width", base.width),
                            amplitude=cfg.seed.get("amplitude", base.amplitude))
        snaps, rep = evolve_perturbation(sol, cfg.effective, seed, cfg.stability, branch=label)
        t = OutputTable(["t", "max_abs_delta_psi", "Xi"])
        xi = dict(rep.xi_series)
        for s in snaps:
            t.add(s.t, float(np.max(np.abs(s.delta_psi))), xi.get(s.t, nan))
        t.meta.update({"branch": label, "epsilon": eps, "norm": cfg.stability.norm,
                       "conjugate": cfg.stability.conjugate})
        t.footer.update({"asymptotic_rate": rep.asymptotic_rate, "verdict": rep.verdict})
        t.write(out / f"stability_{label}.csv", cfg.config_hash)
        field_table(sol, {"branch": label, "epsilon": eps}).write(out / f"field_{label}.csv", cfg.config_hash)
        if cfg.dump_snapshots:
            d = OutputTable(["t", "z", "delta_psi_re", "delta_psi_im"])
            for s in snaps:
                for z, v in zip(sol.z, s.delta_psi):
                    d.add(s.t, z, v.real, v.imag)
            d.write(out / f"perturbation_{label}.csv", cfg.config_hash)
        summary.add(label, eps, sol.T, sol.shooting_value.real, sol.shooting_value.imag, rep.asymptotic_rate,
                    rep.verdict, rep.halted_early, rep.max_boundary_residual)
        print(f"{label}: rate={rep.asymptotic_rate:.6g} verdict={rep.verdict}")
    summary.write(out / "stability.csv", cfg.config_hash)
    return failures


RUNNERS = {
    "params": lambda cfg, out, seed: run_params(cfg, out),
    "linear": lambda cfg, out, seed: run_linear(cfg, out),
    "spectrum": run_spectrum,
    "shift-study": lambda cfg, out, seed: run_shift_study(cfg, out),
    "stability": run_stability,
}


def run(cfg: RunConfig, out_dir=None, seed_from=None) -> int:
    """Execute one configured run; returns the number of failed points/branches."""
    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    return RUNNERS[cfg.mode](cfg, out, seed_from)


def build_parser():
    ap = argparse.ArgumentParser(prog="polariton-lattice",
                                 description="Transmission spectra and stability of driven lattice polaritons.")
    sub = ap.add_subparsers(dest="mode", required=True)
    for mode in MODES:
        p = sub.add_parser(mode)
        p.add_argument("--config", required=True, help="run configuration file")
        p.add_argument("--out", default=None, help="output directory (overrides [output] dir)")
        p.add_argument("--seed-from", default=None, help="spectrum table of an earlier run used as Newton guesses")
        p.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        text = Path(args.config).read_text(encoding="utf-8")
    except OSError as exc:
        print(f"error: cannot read config {args.config}: {exc.strerror or exc}", file=sys.stderr)
        return 3
    try:
        cfg = parse_config(text, mode=args.mode)
    except (ConfigParseError, ConfigValidationError) as exc:
        print(f"error: {args.config}: {exc}", file=sys.stderr)
        return 2
    try:
        failures = run(cfg, args.out, args.seed_from)
    except ConfigValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    if failures:
        print(f"{failures} point(s) failed; see tables", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
