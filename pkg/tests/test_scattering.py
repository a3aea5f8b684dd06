import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bosegp.errors import DomainError, ValidationError
from bosegp.scattering import (
    RadialPotential,
    ScatteringSolution,
    fourier_profile,
    read_tabulated_potential,
    scale,
    solve_scattering,
    square_well_scattering_length,
)

# closed form R0 - tanh(kappa R0)/kappa for V0 = 10, R0 = 1 (kappa = sqrt 5)
SQUARE_WELL_10_A = 0.5628879598389264


def test_square_well_closed_form_frozen():
    assert square_well_scattering_length(10.0, 1.0) == pytest.approx(SQUARE_WELL_10_A, abs=1e-15)


def test_square_well_matches_closed_form(square_well):
    assert abs(square_well.a - SQUARE_WELL_10_A) <= 1e-8
    assert abs(square_well.a - square_well.a_quadrature) <= 1e-7


def test_hard_sphere():
    sol = solve_scattering(RadialPotential.hard_sphere(1.0))
    assert abs(sol.a - 1.0) <= 1e-8
    assert abs(sol.a_quadrature - 1.0) <= 1e-7
    r = np.linspace(1.0, 4.0, 31)
    np.testing.assert_allclose(sol.f(r), 1.0 - 1.0 / r, atol=1e-10)
    assert np.all(sol.f(np.linspace(0, 0.99, 10)) == 0.0)


def test_zero_potential_has_zero_length():
    sol = solve_scattering(RadialPotential.square_well(0.0, 1.0))
    assert abs(sol.a) <= 1e-12
    np.testing.assert_allclose(sol.f(np.linspace(0, 3, 20)), 1.0, atol=1e-12)


@pytest.mark.parametrize("V0,R0", [(0.5, 1.0), (2.0, 1.0), (10.0, 2.0), (50.0, 0.5)])
def test_square_well_sweep(V0, R0):
    sol = solve_scattering(RadialPotential.square_well(V0, R0))
    assert sol.a == pytest.approx(square_well_scattering_length(V0, R0), abs=1e-8)
    assert sol.a == pytest.approx(sol.a_quadrature, abs=1e-7)


def test_weak_coupling_born_limit():
    base = RadialPotential.square_well(1.0, 1.0)
    ratios = []
    for lam in (1e-1, 1e-2, 1e-3):
        sol = solve_scattering(base.with_strength(lam))
        ratios.append(8 * math.pi * sol.a / sol.integral_v())
    errors = np.abs(1.0 - np.array(ratios))
    assert errors[-1] < 1e-3
    assert np.all(np.diff(errors) < 0)


def test_scattering_length_below_range(square_well):
    assert 0 < square_well.a < square_well.potential.R0


def test_gaussian_and_tabulated_agree():
    g = RadialPotential.gaussian_truncated(5.0, 1.0)
    r = np.linspace(0.0, 1.0, 2001)
    tab = RadialPotential.tabulated(r, g(r))
    a_g = solve_scattering(g).a
    a_t = solve_scattering(tab).a
    assert a_g == pytest.approx(a_t, abs=1e-6)
    assert g.width == pytest.approx(1.0 / 3.0)


def test_tabulated_file_roundtrip(tmp_path):
    path = tmp_path / "pot.txt"
    r = np.linspace(0, 1, 11)
    np.savetxt(path, np.column_stack([r, 3.0 * np.ones_like(r)]))
    pot = read_tabulated_potential(path)
    assert pot.R0 == 1.0
    assert solve_scattering(pot).a == pytest.approx(square_well_scattering_length(3.0, 1.0), abs=1e-6)


@pytest.mark.parametrize(
    "kwargs",
    [dict(kind="square_well", V0=-1.0), dict(kind="square_well", V0=1.0, R0=0.0), dict(kind="nope")],
)
def test_invalid_potentials(kwargs):
    with pytest.raises(ValidationError):
        RadialPotential(**kwargs)


def test_invalid_tables():
    with pytest.raises(ValidationError):
        RadialPotential.tabulated([0.1, 1.0], [1.0, 1.0])
    with pytest.raises(ValidationError):
        RadialPotential.tabulated([0.0, 1.0], [1.0, -1.0])
    with pytest.raises(ValidationError):
        RadialPotential.tabulated([0.0, 1.0, 0.5], [1.0, 1.0, 1.0])


def test_r_max_inside_support():
    with pytest.raises(DomainError):
        solve_scattering(RadialPotential.square_well(1.0, 1.0), r_max=0.5)


def test_json_roundtrip(square_well):
    back = ScatteringSolution.from_json(square_well.to_json())
    assert back.a == square_well.a
    np.testing.assert_array_equal(back.u, square_well.u)
    assert back.potential.to_dict() == square_well.potential.to_dict()


# -- scaling -----------------------------------------------------------------------------


@pytest.mark.parametrize("N", [1, 10, 100])
def test_scaling_identity(square_well, N):
    sc = scale(square_well, N)
    assert N * sc.integral_vf() == pytest.approx(8 * math.pi * square_well.a, rel=1e-7)
    assert sc.a == square_well.a  # the unscaled length that enters 8 pi a


def test_unit_scale_is_identity(square_well):
    sc = scale(square_well, 1)
    r = np.linspace(0, 3, 50)
    np.testing.assert_array_equal(sc.f(r), square_well.f(r))
    assert sc.integral_vf() == pytest.approx(8 * math.pi * square_well.a, rel=1e-7)


def test_vf_omega_integral_scales_inverse_N(square_well):
    base = scale(square_well, 1).integral_vf_omega()
    for N in (2, 10, 100):
        assert scale(square_well, N).integral_vf_omega() == pytest.approx(base / N, rel=1e-12)


@pytest.mark.parametrize("N", [1, 4, 50])
def test_omega_decay_bound(square_well, N):
    C = square_well.omega_bound_constant()
    sc = scale(square_well, N)
    x = np.linspace(0, 10, 2001)
    assert np.all(sc.omega(x) * (N * x + 1.0) <= C * (1 + 1e-12))
    assert np.all(sc.omega(x) >= 0)


def test_fourier_at_zero(square_well):
    for N in (1, 10, 100):
        sc = scale(square_well, N)
        assert float(sc.fourier(np.array([0.0]))[0]) == pytest.approx(8 * math.pi * square_well.a / N, rel=1e-7)


@pytest.mark.parametrize("p", [1.0, 5.0, 20.0])
def test_fourier_scattering_equation(square_well, p):
    # (V_N f_N)^(p) = 2 p^2 omega_N^(p), checked against a direct radial quadrature of omega
    from scipy.integrate import quad

    N = 10
    sc = scale(square_well, N)
    lhs = float(sc.fourier(np.array([p]))[0])
    rhs = 2 * p * p * float(sc.omega_fourier(np.array([p]))[0])
    assert lhs == pytest.approx(rhs, rel=1e-6, abs=1e-10)
    # independent quadrature of the Fourier transform of V_N f_N
    R = square_well.potential.R0 / N
    direct, _ = quad(lambda r: 4 * math.pi * r * sc.V(r) * sc.f(r) * math.sin(p * r) / p, 0, R, limit=200, points=[R])
    assert lhs == pytest.approx(direct, rel=1e-6, abs=1e-10)


def test_fourier_change_of_variables(square_well):
    p = np.linspace(0, 200, 41)
    for N in (3, 30):
        sc = scale(square_well, N)
        np.testing.assert_allclose(sc.fourier(p), square_well.vf_transform(p / N) / N, rtol=1e-13, atol=1e-15)
    assert np.allclose(fourier_profile(square_well, p), square_well.vf_transform(p))


def test_truncated_omega_transform_limit(square_well):
    q = np.array([1e-9, 0.5, 2.0])
    cut = 5.0
    vals = square_well.omega_transform_truncated(q, cut)
    from scipy.integrate import quad

    R0 = square_well.potential.R0
    # q -> 0: volume integral of omega over the ball of radius cut
    vol, _ = quad(lambda r: 4 * math.pi * r * r * float(square_well.omega(r)), 0, cut, points=[R0], limit=200)
    assert vals[0] == pytest.approx(vol, rel=1e-7)
    shell, _ = quad(lambda r: 4 * math.pi * r * r * float(square_well.omega(r)) * math.sin(2 * r) / (2 * r), 0, cut, points=[R0], limit=200)
    assert vals[2] == pytest.approx(shell, rel=1e-6, abs=1e-9)
    with pytest.raises(DomainError):
        square_well.omega_transform_truncated(q, 0.5 * R0)


@given(st.floats(0.1, 40.0), st.floats(0.3, 3.0))
def test_square_well_property(V0, R0):
    sol = solve_scattering(RadialPotential.square_well(V0, R0), n_points=2001)
    exact = square_well_scattering_length(V0, R0)
    assert sol.a == pytest.approx(exact, abs=1e-6 * R0)
    assert 0 <= sol.a <= R0


@given(st.floats(0.5, 20.0), st.floats(1.0, 200.0))
def test_scaling_property(V0, N):
    sol = solve_scattering(RadialPotential.square_well(V0, 1.0), n_points=2001)
    assert N * scale(sol, N).integral_vf() == pytest.approx(8 * math.pi * sol.a, rel=1e-6)
