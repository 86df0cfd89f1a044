"""Tests for the 2.5D primitive magneto-fluid solver."""

import numpy as np
import pytest

from obmlab import thermo
from obmlab.fields import (
    FieldError,
    Geometry,
    Grid,
    ddx1_arr,
    ddx3_arr,
    mean_arr,
    read_snapshot,
)
from obmlab.mhd import (
    PositivityError,
    PrimConfig,
    PrimitiveState,
    a_from_b3_profile,
    ballistic_energy,
    cfl_limits,
    entropy_production_terms,
    fix_flux_walls,
    prim_rhs,
    psi_extension,
    run_prim,
    step_prim,
    total_energy,
    velocity_gradient,
    viscous_stress,
)
from obmlab.obm import CflError

GAS = thermo.GasParams(p_inf=1.0, a=0.0)
REF = thermo.ReferenceState(rho_bar=1.0, theta_bar=1.0, b_bar=0.5)


def make_cfg(n1=16, n3=9, G=None, theta_B=(0.0, 0.0), ref=REF, gas=GAS):
    grid = Grid(Geometry.STRIP2, n1, n3=n3)
    if G is None:
        G = np.zeros(grid.shape)
    elif G == "gravity":
        G = np.broadcast_to(0.5 - grid.x3[:, None], grid.shape).copy()
    return PrimConfig(grid, gas, ref, G, theta_B)


def uniform_state(cfg, eps=0.5, u1=0.0):
    g = cfg.grid
    u = np.zeros((3,) + g.shape)
    u[0] = u1
    return PrimitiveState(
        g, np.full(g.shape, REF.rho_bar), u, np.full(g.shape, REF.theta_bar),
        np.zeros(g.shape), REF.b_bar, np.zeros(g.shape), eps, 0.0)


def wavy_state(cfg, eps=0.5, amp=0.05, with_u2=False):
    """Smooth wall-compatible data with full in-plane structure."""
    g = cfg.grid
    x1 = g.x1[None, :]
    x3 = g.x3[:, None]
    rho = REF.rho_bar + amp * np.sin(np.pi * x3) * np.cos(np.pi * x1)
    theta = REF.theta_bar + amp * np.sin(np.pi * x3) * (1 + 0.5 * np.cos(np.pi * x1))
    u = np.zeros((3,) + g.shape)
    u[0] = 0.1 * np.cos(np.pi * x1) * np.cos(np.pi * x3)
    u[2] = 0.1 * np.sin(np.pi * x1) * np.sin(np.pi * x3)
    if with_u2:
        u[1] = 0.1 * np.sin(np.pi * x1) * np.sin(np.pi * x3)
    a = fix_flux_walls(0.02 * np.cos(np.pi * x1) * np.cos(np.pi * x3))
    return PrimitiveState(g, rho, u, theta, a, REF.b_bar,
                          np.zeros(g.shape), eps, 0.0)


# -- viscous stress --------------------------------------------------------


def test_stress_zero_gradient():
    S = viscous_stress(np.array(1.3), np.zeros((3, 3)), GAS)
    assert np.all(S == 0.0)


def test_stress_simple_shear():
    # u = (x3, 0, 0): only d3 u1 = 1 is nonzero
    grad_u = np.zeros((3, 3))
    grad_u[2, 0] = 1.0
    theta = np.array(1.3)
    S = viscous_stress(theta, grad_u, GAS)
    mu = thermo.mu(1.3, GAS)
    assert S[0, 2] == pytest.approx(mu, rel=1e-14)
    assert S[2, 0] == pytest.approx(mu, rel=1e-14)
    off = [(i, j) for i in range(3) for j in range(3) if (i, j) not in ((0, 2), (2, 0))]
    for i, j in off:
        assert abs(S[i, j]) < 1e-15


def test_stress_trace_is_pure_bulk():
    rng = np.random.default_rng(7)
    grad_u = rng.normal(size=(3, 3))
    theta = np.array(0.9)
    S0 = viscous_stress(theta, grad_u, GAS)
    assert abs(S0[0, 0] + S0[1, 1] + S0[2, 2]) < 1e-12
    gas_bulk = thermo.GasParams(p_inf=1.0, a=0.0, eta_high=0.3)
    S1 = viscous_stress(theta, grad_u, gas_bulk)
    divu = np.trace(grad_u)
    expected = 3.0 * thermo.eta(0.9, gas_bulk) * divu
    assert S1[0, 0] + S1[1, 1] + S1[2, 2] == pytest.approx(expected, rel=1e-12)


def test_velocity_gradient_slip_rows():
    cfg = make_cfg()
    st = wavy_state(cfg, with_u2=True)
    gu = velocity_gradient(st.u, cfg.grid)
    assert np.all(gu[2, 0, 0] == 0.0) and np.all(gu[2, 0, -1] == 0.0)
    assert np.all(gu[2, 1, 0] == 0.0) and np.all(gu[2, 1, -1] == 0.0)
    assert np.all(gu[1] == 0.0)
    # d3 u3 at the walls is untouched
    free = velocity_gradient(st.u, cfg.grid, slip_walls=False)
    assert np.array_equal(gu[2, 2], free[2, 2])


# -- equilibria and decoupling ----------------------------------------------


def test_rest_state_rhs_vanishes():
    cfg = make_cfg()
    st = uniform_state(cfg)
    rhs = prim_rhs(st, cfg)
    for key in ("rho", "u", "theta", "B"):
        assert np.max(np.abs(rhs[key])) < 1e-13


def test_rest_state_is_fixed_point():
    cfg = make_cfg()
    st = uniform_state(cfg, eps=0.5)
    dt = 0.5 * cfl_limits(st, cfg)
    for _ in range(100):
        st = step_prim(st, cfg, dt)
    assert np.max(np.abs(st.rho - REF.rho_bar)) < 1e-13
    assert np.max(np.abs(st.theta - REF.theta_bar)) < 1e-13
    assert np.max(np.abs(st.u)) < 1e-13
    B = st.B
    assert np.max(np.abs(B[0])) < 1e-13
    assert np.max(np.abs(B[1])) < 1e-13
    assert np.max(np.abs(B[2] - REF.b_bar)) < 1e-13


def test_uniform_drift_keeps_out_of_plane_sector_silent():
    # constant u1 with uniform thermodynamics: an exact traveling
    # equilibrium, so u2, B1, B2 stay at rounding level
    cfg = make_cfg()
    st = uniform_state(cfg, u1=0.3)
    dt = 0.5 * cfl_limits(st, cfg)
    for _ in range(100):
        st = step_prim(st, cfg, dt)
    B = st.B
    assert np.max(np.abs(st.u[1])) < 1e-12
    assert np.max(np.abs(B[0])) < 1e-12
    assert np.max(np.abs(B[1])) < 1e-12
    assert np.max(np.abs(st.u[0] - 0.3)) < 1e-13
    assert np.max(np.abs(st.theta - REF.theta_bar)) < 1e-13
    assert np.max(np.abs(B[2] - REF.b_bar)) < 1e-12


def test_out_of_plane_sector_decouples_in_active_flow():
    # full in-plane dynamics with u2 = B2 = 0 keeps them exactly zero
    cfg = make_cfg(G="gravity")
    st = wavy_state(cfg, eps=0.5)
    dt = 0.6 * cfl_limits(st, cfg)
    for _ in range(50):
        st = step_prim(st, cfg, dt)
    assert np.max(np.abs(st.u[1])) < 1e-12
    assert np.max(np.abs(st.B2)) < 1e-12
    # the in-plane part did move
    assert np.max(np.abs(st.u[2])) > 1e-6


def test_out_of_plane_velocity_generates_B2():
    cfg = make_cfg()
    st = wavy_state(cfg, eps=0.5, with_u2=True)
    dt = 0.6 * cfl_limits(st, cfg)
    for _ in range(10):
        st = step_prim(st, cfg, dt)
    assert np.max(np.abs(st.B2)) > 1e-8


# -- conservation -----------------------------------------------------------


def test_mass_conserved_to_rounding():
    cfg = make_cfg(G="gravity")
    st = wavy_state(cfg, eps=0.2)
    mass0 = cfg.grid.volume * mean_arr(st.rho, cfg.grid)
    st, rows = run_prim(st, cfg, t_end=100 * 0.6 * cfl_limits(st, cfg))
    masses = np.array([r[1] for r in rows])
    assert len(rows) >= 100
    assert np.max(np.abs(masses - mass0)) < 1e-12


def test_divB_and_mean_B3_exact():
    cfg = make_cfg(G="gravity")
    st = wavy_state(cfg, eps=0.2)
    g = cfg.grid
    c3 = st.c3
    st, rows = run_prim(st, cfg, t_end=50 * 0.6 * cfl_limits(st, cfg))
    divb = np.array([r[5] for r in rows])
    assert np.max(divb) < 1e-10
    assert mean_arr(st.B[2], g) == pytest.approx(c3, abs=1e-13)


def test_theta_walls_pinned_exactly():
    profile = 0.2 + 0.1 * np.cos(np.pi * Grid(Geometry.STRIP2, 16, n3=9).x1)
    cfg = make_cfg(theta_B=(profile, -profile))
    st = wavy_state(cfg, eps=0.3)
    st = step_prim(st, cfg, 0.5 * cfl_limits(st, cfg))
    assert np.array_equal(st.theta[0], REF.theta_bar + 0.3 * profile)
    assert np.array_equal(st.theta[-1], REF.theta_bar - 0.3 * profile)
    assert np.all(st.u[2, 0] == 0.0) and np.all(st.u[2, -1] == 0.0)
    # the one-sided d3 a = 0 wall stencil propagates as a linear invariant
    assert np.max(np.abs(st.a[0] - (4 * st.a[1] - st.a[2]) / 3)) < 1e-14


# -- entropy production -----------------------------------------------------


def test_entropy_production_nonnegative_pointwise():
    rng = np.random.default_rng(21)
    cfg = make_cfg(n1=16, n3=17)
    g = cfg.grid
    for _ in range(5):
        rho = 1.0 + 0.4 * rng.uniform(-1, 1, g.shape)
        theta = 1.0 + 0.4 * rng.uniform(-1, 1, g.shape)
        u = 0.3 * rng.normal(size=(3,) + g.shape)
        a = 0.05 * rng.normal(size=g.shape)
        B2 = 0.1 * rng.normal(size=g.shape)
        st = PrimitiveState(g, rho, u, theta, a, REF.b_bar, B2, 0.3, 0.0)
        phi, joule, cond = entropy_production_terms(st, cfg)
        for term in (phi, joule, cond):
            assert np.min(term) >= -1e-14
        assert mean_arr(phi + joule + cond, g) > 0.0


def test_entropy_fault_flag_breaks_sign():
    cfg = make_cfg()
    st = wavy_state(cfg)
    phi, _, _ = entropy_production_terms(st, cfg, fault=True)
    assert np.min(phi) < -1e-14


def test_run_rows_report_nonnegative_production():
    cfg = make_cfg(G="gravity")
    st = wavy_state(cfg, eps=0.3)
    st, rows = run_prim(st, cfg, t_end=20 * 0.6 * cfl_limits(st, cfg))
    for r in rows:
        assert r[8] >= -1e-14
        assert r[6] > 0.0 and r[7] > 0.0


# -- acoustics --------------------------------------------------------------


def test_acoustic_mode_frequency():
    # strong heat conduction relaxes temperature fluctuations, so the
    # horizontal sound speed is the isothermal sqrt(dp_drho) and the k-th
    # standing mode oscillates at sqrt(dp_drho) pi k / eps
    gas = thermo.GasParams(p_inf=1.0, a=0.0, mu_low=5e-3, mu_high=5e-3,
                           kappa_low=4.6, kappa_high=4.6,
                           zeta_low=5e-3, zeta_high=5e-3)
    ref = thermo.ReferenceState(rho_bar=1.0, theta_bar=1.0, b_bar=0.05)
    eps, k = 0.2, 3
    grid = Grid(Geometry.STRIP2, 32, n3=9)
    cfg = PrimConfig(grid, gas, ref, np.zeros(grid.shape), (0.0, 0.0))
    x1 = grid.x1[None, :]
    rho = 1.0 + 1e-3 * np.cos(np.pi * k * x1) * np.ones(grid.shape)
    st = PrimitiveState(grid, rho, np.zeros((3,) + grid.shape),
                        np.ones(grid.shape), np.zeros(grid.shape), ref.b_bar,
                        np.zeros(grid.shape), eps, 0.0)
    trace = []

    def record(s):
        bar = grid.w3 @ (s.rho - 1.0)
        trace.append((s.t, np.fft.rfft(bar)[k].real))

    omega = np.sqrt(thermo.dp_drho(1.0, 1.0, gas)) * np.pi * k / eps
    run_prim(st, cfg, t_end=2.2 * 2 * np.pi / omega, on_step=record)
    ts = np.array([p[0] for p in trace])
    cs = np.array([p[1] for p in trace])
    sign_flips = np.nonzero(np.diff(np.sign(cs)))[0]
    crossings = []
    for i in sign_flips:
        t0, t1, c0, c1 = ts[i], ts[i + 1], cs[i], cs[i + 1]
        crossings.append(t0 - c0 * (t1 - t0) / (c1 - c0))
    assert len(crossings) >= 4
    half_periods = np.diff(crossings)
    omega_hat = np.pi / np.mean(half_periods)
    assert abs(omega_hat - omega) / omega < 0.01


# -- step validation --------------------------------------------------------


def test_cfl_rejection():
    cfg = make_cfg()
    st = wavy_state(cfg)
    with pytest.raises(CflError):
        step_prim(st, cfg, 10.0 * cfl_limits(st, cfg))


def test_positivity_rejection_dumps_last_valid(tmp_path):
    cfg = make_cfg()
    st = uniform_state(cfg)
    snap = tmp_path / "fail.snap"

    def chill(_t):
        return {"theta": -1e4 * np.ones(cfg.grid.shape)}

    with pytest.raises(PositivityError) as err:
        run_prim(st, cfg, t_end=1.0, src=chill, fail_snapshot=str(snap))
    assert err.value.last_valid is st
    saved_grid, fields = read_snapshot(str(snap))
    assert saved_grid == cfg.grid
    assert np.array_equal(fields["rho"], st.rho)
    assert np.array_equal(fields["theta"], st.theta)


def test_invalid_state_construction():
    cfg = make_cfg()
    g = cfg.grid
    good = dict(u=np.zeros((3,) + g.shape), theta=np.ones(g.shape),
                a=np.zeros(g.shape), B2=np.zeros(g.shape))
    with pytest.raises(FieldError):
        PrimitiveState(g, -np.ones(g.shape), good["u"], good["theta"],
                       good["a"], 0.5, good["B2"], 0.5, 0.0)
    with pytest.raises(FieldError):
        PrimitiveState(g, np.ones(g.shape), good["u"], 0.0 * good["theta"],
                       good["a"], 0.5, good["B2"], 0.5, 0.0)
    with pytest.raises(FieldError):
        PrimitiveState(g, np.ones(g.shape), good["u"][:2], good["theta"],
                       good["a"], 0.5, good["B2"], 0.5, 0.0)


# -- energies ---------------------------------------------------------------


def test_ballistic_rest_state_closed_form():
    cfg = make_cfg()
    st = uniform_state(cfg, eps=0.25)
    psi = np.full(cfg.grid.shape, REF.theta_bar)
    got = ballistic_energy(st, psi, GAS)
    per_volume = (thermo.rho_e_total(1.0, 1.0, GAS) + 0.5 * REF.b_bar ** 2
                  - REF.theta_bar * 1.0 * thermo.entropy(1.0, 1.0, GAS)) / 0.25 ** 2
    assert got == pytest.approx(cfg.grid.volume * per_volume, rel=1e-12)


def test_ballistic_kinetic_term_and_total_energy():
    cfg = make_cfg()
    st0 = uniform_state(cfg, eps=0.25)
    st1 = uniform_state(cfg, eps=0.25, u1=0.2)
    psi = np.full(cfg.grid.shape, REF.theta_bar)
    dk = ballistic_energy(st1, psi, GAS) - ballistic_energy(st0, psi, GAS)
    assert dk == pytest.approx(cfg.grid.volume * 0.5 * 1.0 * 0.2 ** 2, rel=1e-12)
    de = total_energy(st1, GAS) - total_energy(st0, GAS)
    assert de == pytest.approx(dk, rel=1e-12)


def test_ballistic_rejects_nonpositive_psi():
    cfg = make_cfg()
    st = uniform_state(cfg)
    with pytest.raises(thermo.ThermoDomainError):
        ballistic_energy(st, np.zeros(cfg.grid.shape), GAS)


def test_psi_extension_matches_walls():
    profile = 0.3 * np.ones(16)
    cfg = make_cfg(theta_B=(profile, -0.1))
    psi = psi_extension(cfg, 0.2)
    assert np.allclose(psi[0], 1.0 + 0.2 * 0.3, atol=1e-15)
    assert np.allclose(psi[-1], 1.0 - 0.2 * 0.1, atol=1e-15)


# -- magnetic bookkeeping ---------------------------------------------------


def test_a_from_b3_profile_roundtrip():
    grid = Grid(Geometry.STRIP2, 32, n3=9)
    b3 = 0.5 + 0.2 * np.cos(np.pi * grid.x1) + 0.1 * np.sin(2 * np.pi * grid.x1)
    a, c3 = a_from_b3_profile(b3, grid)
    assert c3 == pytest.approx(0.5, abs=1e-14)
    st = PrimitiveState(grid, np.ones(grid.shape), np.zeros((3,) + grid.shape),
                        np.ones(grid.shape), a, c3, np.zeros(grid.shape), 0.5, 0.0)
    B = st.B
    assert np.max(np.abs(B[2] - b3[None, :])) < 1e-12
    assert np.max(np.abs(B[0])) < 1e-15
    divb = ddx1_arr(B[0], grid) + ddx3_arr(B[2], grid)
    assert np.max(np.abs(divb)) < 1e-12


# -- time accuracy ----------------------------------------------------------


def test_step_is_second_order_in_dt():
    cfg = make_cfg(G="gravity")
    base = wavy_state(cfg, eps=0.5, amp=0.03)
    t_end = 0.008

    def advance(dt):
        st = base
        for _ in range(int(round(t_end / dt))):
            st = step_prim(st, cfg, dt)
        return st

    dts = [1e-3, 5e-4, 2.5e-4]
    ref_state = advance(1.25e-4)
    errs = []
    for dt in dts:
        st = advance(dt)
        errs.append(np.max(np.abs(st.rho - ref_state.rho))
                    + np.max(np.abs(st.theta - ref_state.theta))
                    + np.max(np.abs(st.u - ref_state.u)))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders > 1.6) and np.all(orders < 2.6)
