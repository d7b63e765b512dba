"""Map bare optical parameters onto the dimensionless lattice model.

Frequencies are expressed in units of the total spontaneous emission rate
``Gamma`` (so ``Gamma = 1`` in the usual setup), densities and wave numbers in
inverse metres.  Lengths in the solver are measured in units of ``1/k0``.
The effective mass, group velocity and recoil energy never enter the solvers
directly; they reduce to the complex mass ratio ``m/m_R = 1 - i Gamma/(2 Delta0)``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, fields, replace

import numpy as np

from .errors import InvalidOperatingPoint, ParameterError

POLE_TOL = 1e-12

SWEEPABLE = ("Gamma", "Gamma1D", "Delta0", "DeltaP", "delta", "Omega", "n0", "n1", "k0")


@dataclass(frozen=True)
class OpticalParams:
    Gamma1D: float
    Delta0: float
    DeltaP: float
    delta: float
    Omega: float
    n0: float
    n1: float
    k0: float
    Gamma: float = 1.0

    def __post_init__(self):
        self.validate()

    def validate(self):
        for name in ("Gamma", "Gamma1D", "n0", "k0"):
            if not getattr(self, name) > 0:
                raise ParameterError(f"{name} must be > 0, got {getattr(self, name)!r}")
        if self.n1 < 0:
            raise ParameterError(f"n1 must be >= 0, got {self.n1!r}")
        ratio = self.n1 / self.n0
        if ratio > 0.5:
            raise ParameterError(f"n1/n0 = {ratio:.3g} exceeds 0.5; the weak-modulation model does not apply")
        if ratio > 0.1:
            warnings.warn(f"n1/n0 = {ratio:.3g} is not small compared with 1", stacklevel=3)
        for name in ("Delta0", "Omega", "DeltaP"):
            if getattr(self, name) == 0:
                raise InvalidOperatingPoint(f"{name} must be nonzero")

    @classmethod
    def standard(cls, Omega=1.0, DeltaP=10.0):
        """Operating point used for the parameter-range maps (Omega, DeltaP free)."""
        return cls(Gamma1D=0.2, Delta0=-50.0, DeltaP=DeltaP, delta=-0.01, Omega=Omega,
                   n0=1e7, n1=1e6, k0=1e4, Gamma=1.0)


@dataclass(frozen=True)
class EffectiveParams:
    """Dimensionless inputs of the coupled-mode and stability solvers.

    ``Vbar`` is kept signed: the closed-form depth changes sign across the
    pole of ``Lambda`` and the solvers accept either sign.
    """

    Vbar: float
    chibar: complex
    lcoh: float
    massRatio: complex
    d: float
    beta: float = float("nan")
    Lambda: float = float("nan")

    def __post_init__(self):
        if not self.lcoh > 0:
            raise ParameterError(f"lcoh must be > 0, got {self.lcoh!r}")
        if not self.d > 0:
            raise ParameterError(f"d must be > 0, got {self.d!r}")
        if not math.isfinite(self.Vbar):
            raise ParameterError("Vbar must be finite")
        object.__setattr__(self, "chibar", complex(self.chibar))
        object.__setattr__(self, "massRatio", complex(self.massRatio))
        if self.massRatio == 0:
            raise ParameterError("massRatio must be nonzero")
        if math.isnan(self.beta):
            # loss parameter implied by the mass ratio: Im(m/m_R) = Gamma/(2|Delta0|) for Delta0 < 0
            object.__setattr__(self, "beta", (self.d / self.lcoh) * 2.0 * abs(self.massRatio.imag))

    @classmethod
    def from_loss(cls, Vbar, chibar, lcoh, d, gamma_over_abs_delta0, delta0_sign=-1):
        """Build directly from the loss ratio Gamma/|Delta0| (Delta0 < 0 by default)."""
        if gamma_over_abs_delta0 < 0:
            raise ParameterError("gamma_over_abs_delta0 must be >= 0")
        mass_ratio = 1.0 - 0.5j * gamma_over_abs_delta0 * (1.0 / delta0_sign)
        return cls(Vbar=Vbar, chibar=chibar, lcoh=lcoh, massRatio=mass_ratio, d=d,
                   beta=(d / lcoh) * gamma_over_abs_delta0)

    def with_(self, **changes):
        return replace(self, **changes)

    @property
    def lossless(self):
        return self.massRatio.imag == 0 and self.chibar.imag == 0


def lambda_factor(p: OpticalParams) -> float:
    denom = p.Omega**2 - p.delta * p.Delta0 / 2.0
    if abs(denom) < POLE_TOL * p.Gamma**2:
        raise InvalidOperatingPoint(
            f"Omega^2 = delta*Delta0/2 (|denominator| = {abs(denom):.3g}); Lambda diverges")
    return p.Omega**2 / denom


def coherence_length(p: OpticalParams) -> float:
    """Coherence length L_coh in metres."""
    return (p.Delta0**2 + (p.Gamma / 2.0) ** 2) / (p.Gamma1D * p.n0 * abs(p.Delta0))


def derive_effective(p: OpticalParams, d: float) -> EffectiveParams:
    if not d > 0:
        raise ParameterError(f"d must be > 0, got {d!r}")
    p.validate()
    G = p.Gamma
    lam = lambda_factor(p)
    lcoh = p.k0 * coherence_length(p)
    # rates in units of Gamma and densities/wave numbers in 1/m; both groups cancel separately
    vbar = (lam * p.Gamma1D**2 * p.delta * p.n0 * p.n1 * abs(p.Delta0)
            / (8.0 * p.Omega**2 * p.k0**2 * (p.Delta0**2 + G**2 / 4.0)))
    chi_re = lam**2 * p.Gamma1D * p.DeltaP / (4.0 * lcoh * (p.DeltaP**2 + G**2 / 4.0))
    chibar = chi_re * complex(1.0, -G / (2.0 * p.DeltaP))
    mass_ratio = complex(1.0, -G / (2.0 * p.Delta0))
    beta = (d / lcoh) * (G / abs(p.Delta0))
    return EffectiveParams(Vbar=vbar, chibar=chibar, lcoh=lcoh, massRatio=mass_ratio,
                           d=d, beta=beta, Lambda=lam)


@dataclass
class SweepResult:
    axis1: tuple[str, np.ndarray]
    axis2: tuple[str, np.ndarray] | None
    values: list  # nested [i][j] -> EffectiveParams or None
    errors: dict  # (i, j) -> message for poisoned points

    @property
    def shape(self):
        return (len(self.axis1[1]), 1 if self.axis2 is None else len(self.axis2[1]))

    def field(self, name, transform=None):
        """Array of one derived quantity; poisoned points become NaN."""
        out = np.full(self.shape, np.nan, dtype=complex if name == "chibar" else float)
        for i, row in enumerate(self.values):
            for j, ep in enumerate(row):
                if ep is not None:
                    v = getattr(ep, name)
                    out[i, j] = transform(v) if transform else v
        return out

    def rows(self):
        n1, n2 = self.shape
        for i in range(n1):
            for j in range(n2):
                yield i, j, self.values[i][j]


def sweep_effective(p: OpticalParams, axis1, axis2=None, d=3 * math.pi) -> SweepResult:
    """Evaluate ``derive_effective`` on a one- or two-axis grid.

    Each axis is ``(name, values)`` with ``name`` an ``OpticalParams`` field.
    Points that hit a pole or violate an invariant are stored as ``None`` with
    the reason in ``errors``; the sweep itself never aborts.
    """
    names = {f.name for f in fields(OpticalParams)}
    axes = [axis1] + ([axis2] if axis2 is not None else [])
    norm_axes = []
    for name, vals in axes:
        if name not in names:
            raise ParameterError(f"unknown sweep parameter {name!r}")
        norm_axes.append((name, np.atleast_1d(np.asarray(vals, dtype=float))))
    a1 = norm_axes[0]
    a2 = norm_axes[1] if axis2 is not None else None
    values, errors = [], {}
    for i, v1 in enumerate(a1[1]):
        row = []
        for j, v2 in enumerate(a2[1] if a2 else [None]):
            changes = {a1[0]: float(v1)}
            if a2:
                changes[a2[0]] = float(v2)
            try:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore")
                    q = replace(p, **changes)
                row.append(derive_effective(q, d))
            except (ParameterError, InvalidOperatingPoint) as exc:
                row.append(None)
                errors[(i, j)] = str(exc)
        values.append(row)
    return SweepResult(axis1=a1, axis2=a2, values=values, errors=errors)
