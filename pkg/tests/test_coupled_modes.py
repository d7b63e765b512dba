import cmath
import math

import numpy as np
import pytest
import sympy
from hypothesis import given, settings, strategies as st
from scipy.integrate import solve_ivp
from scipy.optimize import curve_fit

from polariton_lattice.coupled_modes import (Grid, SolverSettings, integrate_ivp, output_roots, rhs,
                                             solve_linear, solve_nonlinear)
from polariton_lattice.errors import DivergedGuess, FieldOverflow, ParameterError
from polariton_lattice.params import EffectiveParams

D = 3 * math.pi


def lossless(vbar=0.0, chibar=0.0, lcoh=0.25, d=D):
    return EffectiveParams.from_loss(vbar, chibar, lcoh, d, 0.0)


def plane_wave(z, pp0, pm0, eps, ep):
    """Closed-form IVP solution for V = chi = 0: S'' = -mu eps S, D' = i l eps S."""
    mu, l = ep.massRatio, ep.lcoh
    k = cmath.sqrt(mu * eps)
    S0, D0 = pp0 + pm0, pp0 - pm0
    S = S0 * np.cos(k * z) + 1j * mu * D0 / (l * k) * np.sin(k * z)
    Dz = D0 * np.cos(k * z) + 1j * l * eps * S0 / k * np.sin(k * z)
    return (S + Dz) / 2, (S - Dz) / 2


def reference_linear(eps, ep, d):
    """Transmission from an independent adaptive integrator (DOP853) and superposition."""
    mu, l, V = ep.massRatio, ep.lcoh, ep.Vbar

    def f(z, y):
        pp, pm = y[0] + 1j * y[1], y[2] + 1j * y[3]
        S, Dd = pp + pm, pp - pm
        G = eps - V - V * np.cos(2 * z)
        a, b = 0.5j * mu / l * Dd, 0.5j * l * G * S
        return [(a + b).real, (a + b).imag, (a - b).real, (a - b).imag]

    ends = []
    for y0 in ([1, 0, 0, 0], [0, 0, 1, 0]):
        y = solve_ivp(f, (0, d), y0, method="DOP853", rtol=1e-12, atol=1e-14).y[:, -1]
        ends.append((y[0] + 1j * y[1], y[2] + 1j * y[3]))
    (up, um), (vp, vm) = ends
    s = -um / vm
    return abs(up + s * vp) ** 2, abs(s) ** 2


def test_rhs_examples():
    ep = lossless(lcoh=0.25)
    assert rhs(0.3, 0j, 0j, 1.7, ep) == (0, 0)
    c, eps = 0.3 - 0.2j, 1.7
    dp, dm = rhs(0.3, c, c, eps, ep)
    assert dp == pytest.approx(1j * ep.lcoh * eps * c, abs=1e-15)
    assert dm == pytest.approx(-1j * ep.lcoh * eps * c, abs=1e-15)


def test_elimination_gives_plane_waves():
    z, eps, l, mu, V, chi = sympy.symbols("z epsilon l mu V chi")
    pp, pm = sympy.Function("p")(z), sympy.Function("m")(z)
    S, Dd = pp + pm, pp - pm
    G = eps - V - V * sympy.cos(2 * z)
    dpp = sympy.I / 2 * mu / l * Dd + sympy.I * l / 2 * G * S
    dpm = sympy.I / 2 * mu / l * Dd - sympy.I * l / 2 * G * S
    # S'' = i(mu/l) D' = i(mu/l)(dpp - dpm)
    S2 = sympy.I * mu / l * (dpp - dpm)
    assert sympy.simplify(S2 + mu * G * S) == 0


def test_integrator_matches_plane_wave():
    ep = lossless()
    grid = Grid(D, 4096)
    for eps in (0.37, 1.0, 4.2):
        sol = integrate_ivp(1.0, 0.3 - 0.1j, eps, ep, grid)
        pp, pm = plane_wave(grid.z, 1.0, 0.3 - 0.1j, eps, ep)
        scale = np.max(np.abs(pp)) + np.max(np.abs(pm))
        assert np.max(np.abs(sol.psi_plus - pp)) / scale < 1e-8
        assert np.max(np.abs(sol.psi_minus - pm)) / scale < 1e-8


def test_plane_wave_wavenumber_fit():
    ep = lossless()
    grid = Grid(D, 2048)
    eps = 2.3
    sol = integrate_ivp(1.0, 0.0, eps, ep, grid)
    S = sol.psi_plus + sol.psi_minus

    def model(z, k, a, b, c, e):
        return np.concatenate([a * np.cos(k * z) + b * np.sin(k * z), c * np.cos(k * z) + e * np.sin(k * z)])

    popt, _ = curve_fit(model, grid.z, np.concatenate([S.real, S.imag]), p0=[1.4, 1, 0, 0, 1])
    assert popt[0] == pytest.approx(math.sqrt(eps), rel=1e-8)


def test_zero_initial_data_stays_zero():
    sol = integrate_ivp(0j, 0j, 1.3, lossless(1.0, 0.1), Grid(D, 256))
    assert not np.any(sol.psi_plus) and not np.any(sol.psi_minus)


def test_rk4_order():
    ep = EffectiveParams.from_loss(1.0, 0.05, 0.25, math.pi, 0.02)
    ends = []
    for n in (64, 128, 256, 512):
        sol = integrate_ivp(0.8, 0.2 + 0.1j, 1.1, ep, Grid(math.pi, n))
        ends.append(np.array([sol.psi_plus[-1], sol.psi_minus[-1]]))
    e1 = np.linalg.norm(ends[0] - ends[1])
    e2 = np.linalg.norm(ends[1] - ends[2])
    e3 = np.linalg.norm(ends[2] - ends[3])
    assert math.log2(e1 / e2) >= 3.7
    assert math.log2(e2 / e3) >= 3.7


def test_grid_resolution_rule():
    with pytest.raises(ParameterError):
        Grid(D, 100)
    assert Grid(D, 192).n_steps == 192


def test_overflow_raised():
    ep = EffectiveParams.from_loss(0.0, 50.0, 0.25, D, 0.0)
    with pytest.raises(FieldOverflow):
        integrate_ivp(1.0, 1.0, 0.5, ep, Grid(D, 512), alpha=1.0)


@pytest.mark.parametrize("vbar", [0.0, 1.0])
@pytest.mark.parametrize("eps", [0.2, 0.875, 1.6, 3.1])
def test_solve_linear_against_adaptive_oracle(vbar, eps):
    ep = EffectiveParams.from_loss(vbar, 0.0, 0.25, D, 0.02)
    sol = solve_linear(eps, 1.0, ep, Grid(D, 2048))
    T, R = reference_linear(eps, ep, D)
    assert sol.T == pytest.approx(T, rel=1e-8, abs=1e-12)
    assert sol.R == pytest.approx(R, rel=1e-8, abs=1e-12)


@pytest.mark.parametrize("n", range(1, 7))
def test_free_resonances_are_perfect(n):
    eps = (n * math.pi / D) ** 2
    sol = solve_linear(eps, 1.0, lossless(), Grid(D, 2048))
    assert sol.T == pytest.approx(1.0, abs=1e-8)
    assert sol.R == pytest.approx(0.0, abs=1e-8)


def test_linear_boundary_conditions_and_scaling():
    ep = EffectiveParams.from_loss(1.0, 0.0, 0.25, D, 0.02)
    grid = Grid(D, 1024)
    a = solve_linear(1.3, 0.4 + 0.3j, ep, grid)
    b = solve_linear(1.3, 0.8 + 0.6j, ep, grid)
    assert a.psi_plus[0] == 0.4 + 0.3j
    assert abs(a.psi_minus[-1]) < 1e-12
    assert (a.T, a.R) == pytest.approx((b.T, b.R), rel=1e-12)
    np.testing.assert_allclose(b.psi_plus, 2 * a.psi_plus, rtol=1e-12, atol=1e-15)


@settings(max_examples=40, deadline=None)
@given(eps=st.floats(0.05, 12.0), vbar=st.floats(0.0, 2.0), lcoh=st.floats(0.1, 1.0))
def test_lossless_linear_unitarity(eps, vbar, lcoh):
    sol = solve_linear(eps, 1.0, lossless(vbar, 0.0, lcoh), Grid(D, 1024))
    assert sol.T + sol.R == pytest.approx(1.0, abs=1e-6)


@settings(max_examples=25, deadline=None)
@given(eps=st.floats(0.05, 6.0), vbar=st.floats(0.0, 2.0), loss=st.floats(0.005, 0.1))
def test_loss_removes_flux(eps, vbar, loss):
    sol = solve_linear(eps, 1.0, EffectiveParams.from_loss(vbar, 0.0, 0.25, D, loss), Grid(D, 1024))
    assert sol.T + sol.R < 1.0


@settings(max_examples=20, deadline=None)
@given(eps=st.floats(0.3, 3.0), phi=st.floats(-math.pi, math.pi))
def test_nonlinear_phase_covariance(eps, phi):
    ep = EffectiveParams.from_loss(0.5, 0.02, 0.25, D, 0.02)
    grid = Grid(D, 512)
    base = solve_nonlinear(eps, 0.5, ep, grid)
    rot = cmath.exp(1j * phi)
    turned = solve_nonlinear(eps, 0.5 * rot, ep, grid, guess=base.shooting_value * rot)
    tol = 1e-8
    assert turned.T == pytest.approx(base.T, abs=tol)
    assert turned.R == pytest.approx(base.R, abs=tol)
    np.testing.assert_allclose(turned.psi_plus, rot * base.psi_plus, atol=tol)


@settings(max_examples=20, deadline=None)
@given(eps=st.floats(0.3, 3.0), chi=st.floats(-0.05, 0.05))
def test_nonlinear_lossless_flux(eps, chi):
    sol = solve_nonlinear(eps, 0.5, lossless(0.5, chi), Grid(D, 512))
    assert sol.T + sol.R == pytest.approx(1.0, abs=1e-6)
    assert sol.residual <= SolverSettings().tol_for(0.5)


def test_zero_drive():
    sol = solve_nonlinear(1.0, 0.0, lossless(1.0, 0.1), Grid(D, 256))
    assert sol.shooting_value == 0
    assert math.isnan(sol.T) and sol.R == 0.0
    assert not np.any(sol.psi_plus)


def test_small_drive_linear_limit():
    ep = EffectiveParams.from_loss(0.5, 0.02, 0.25, D, 0.02)
    grid = Grid(D, 1024)
    for eps in (0.4, 0.58, 1.2):
        lin = solve_linear(eps, 1e-4, ep, grid)
        nl = solve_nonlinear(eps, 1e-4, ep, grid)
        err = np.max(np.abs(nl.psi_plus - lin.psi_plus)) / np.max(np.abs(lin.psi_plus))
        assert err <= 1e-4


def test_zero_nonlinearity_matches_linear():
    ep = EffectiveParams.from_loss(1.0, 0.0, 0.25, D, 0.02)
    grid = Grid(D, 1024)
    settings = SolverSettings()
    for eps in (0.5, 0.97, 2.2):
        lin = solve_linear(eps, 0.3, ep, grid)
        nl = solve_nonlinear(eps, 0.3, ep, grid)
        diff = max(np.max(np.abs(nl.psi_plus - lin.psi_plus)), np.max(np.abs(nl.psi_minus - lin.psi_minus)))
        assert diff <= 10 * settings.tol_for(0.3)
        assert nl.residual <= settings.tol_for(0.3)


def test_bad_guess_is_reported():
    ep = EffectiveParams.from_loss(0.0, 50.0, 0.25, D, 0.0)
    with pytest.raises(DivergedGuess):
        solve_nonlinear(0.5, 1.0, ep, Grid(D, 512), guess=1.0)


def test_output_roots_agree_with_newton():
    # three coexisting solutions on the first band resonance at strong drive
    ep = EffectiveParams.from_loss(1.0, 0.1, 0.1, D, 0.01)
    grid = Grid(D, 512)
    roots = output_roots(1.06, 0.1, ep, grid)
    assert len(roots) == 3
    Ts = []
    for r in roots:
        sol = solve_nonlinear(1.06, 0.1, ep, grid, guess=r)
        assert abs(sol.shooting_value - r) < 1e-9
        Ts.append(sol.T)
    assert len(set(np.round(Ts, 8))) == 3
    assert len(output_roots(0.9, 0.1, ep, grid)) == 1
