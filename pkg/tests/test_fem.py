import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gawbs.cylinder import radial_dispersion_roots, tr_dispersion_roots
from gawbs.errors import ValidationError
from gawbs.fem import (INTERIOR, TORSIONAL, assemble, classify_angular_order, core_energy_fraction,
                       element_stiffness, inertia_count, rigid_body_vectors, solve_eigen, solve_modes)
from gawbs.geometry import Material
from gawbs.mesh import TriMesh, mesh_cross_section, refine_uniform

# Hand computation (sympy, exact rationals) for the triangle (0,0), (1,0), (0,1)
# with lambda = 2, mu = 1: K = A B^T D B, DOF order (u1, v1, u2, v2, u3, v3).
K_REFERENCE = np.array([
    [5 / 2, 3 / 2, -2, -1 / 2, -1 / 2, -1],
    [3 / 2, 5 / 2, -1, -1 / 2, -1 / 2, -2],
    [-2, -1, 2, 0, 0, 1],
    [-1 / 2, -1 / 2, 0, 1 / 2, 1 / 2, 0],
    [-1 / 2, -1 / 2, 0, 1 / 2, 1 / 2, 0],
    [-1, -2, 1, 0, 0, 2],
])


@pytest.fixture(scope="module")
def disk_ops(disk40, disk40_mesh):
    return assemble(disk40_mesh, disk40[0].material)


@pytest.fixture(scope="module")
def disk_eig(disk_ops):
    return solve_eigen(disk_ops, 200e6)


@pytest.fixture(scope="module")
def disk_modes(disk_ops):
    return solve_modes(disk_ops, f_max=200e6, temperature=300.0, fiber_length=8.0)


def test_element_stiffness_hand_oracle():
    unit = Material(density=1.0, v_longitudinal=2.0, v_shear=1.0, refractive_index=1.5, p11=0.1, p12=0.2)
    assert unit.lame_lambda == 2.0 and unit.lame_mu == 1.0
    k = element_stiffness(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), unit)
    np.testing.assert_allclose(k, K_REFERENCE, rtol=0, atol=1e-14)


def test_operator_symmetry_and_rigid_modes(disk_ops):
    K, M = disk_ops.stiffness, disk_ops.mass
    assert abs(K - K.T).max() <= 1e-12 * abs(K).max()
    assert abs(M - M.T).max() <= 1e-12 * abs(M).max()
    knorm = abs(K).max()
    for v in rigid_body_vectors(disk_ops.mesh):
        assert np.abs(K @ v).max() <= 1e-9 * knorm * np.abs(v).max()


def test_total_mass(disk_ops):
    tx = rigid_body_vectors(disk_ops.mesh)[0]
    area = disk_ops.mesh.signed_areas().sum()
    assert tx @ (disk_ops.mass @ tx) == pytest.approx(disk_ops.material.density * area, rel=1e-10)


def test_degenerate_triangle_rejected(silica):
    mesh = TriMesh(np.array([[0, 0], [1e-6, 0], [2e-6, 0], [0, 1e-6]]), np.array([[0, 1, 3], [0, 1, 2]]),
                   np.zeros((0, 2)), np.zeros(0))
    with pytest.raises(ValidationError, match="triangle 1"):
        assemble(mesh, silica)


def test_exactly_three_rigid_modes_and_inertia(disk_eig, disk_modes):
    lam = disk_eig.eigenvalues
    assert np.count_nonzero(np.abs(lam) < 1e-6 * lam.max()) == 3
    assert disk_eig.inertia == len(disk_modes) + 3
    assert disk_eig.inertia == len(lam)


def test_m_orthonormality(disk_eig, disk_ops):
    V = disk_eig.vectors
    G = V.T @ (disk_ops.mass @ V)
    assert np.abs(G - np.eye(len(G))).max() < 1e-8


def test_rayleigh_and_energy_identity(disk_modes, disk_ops):
    for md in disk_modes:
        u = md.displacement.ravel()
        uku = u @ (disk_ops.stiffness @ u)
        umu = u @ (disk_ops.mass @ u)
        assert abs(uku - md.omega**2 * umu) / uku < 1e-9
        assert np.all(md.energy_density >= 0)
        assert np.sum(md.energy_density * disk_ops.areas) == pytest.approx(0.5 * uku, rel=1e-9)


def test_inertia_count_monotone(disk_ops):
    counts = [inertia_count(disk_ops, f) for f in (1e5, 50e6, 100e6, 200e6)]
    assert counts[0] == 3
    assert counts == sorted(counts)


def test_fem_matches_cylinder_within_half_percent(disk40, disk40_mesh):
    """Every analytic root below 200 MHz against the FEM on the refined reference mesh."""
    cs = disk40[0]
    mesh = refine_uniform(disk40_mesh, cs)
    modes = solve_modes(assemble(mesh, cs.material), f_max=205e6)
    r = [m.frequency for m in modes if m.angular_order == 0]
    t = [m.frequency for m in modes if m.angular_order == 2]
    for k, md in enumerate(radial_dispersion_roots(cs.material, cs.outer_radius, 200e6)):
        assert r[k] == pytest.approx(md.frequency, rel=5e-3)
    for k, md in enumerate(tr_dispersion_roots(cs.material, cs.outer_radius, 200e6)):
        assert t[2 * k] == pytest.approx(md.frequency, rel=5e-3)
        assert t[2 * k + 1] == pytest.approx(md.frequency, rel=5e-3)


def test_convergence_order(disk40):
    cs = disk40[0]
    ref = [radial_dispersion_roots(cs.material, cs.outer_radius, 60e6)[0].frequency,
           tr_dispersion_roots(cs.material, cs.outer_radius, 40e6)[0].frequency]
    mesh = mesh_cross_section(cs, 8e-6)
    errs = []
    for _ in range(4):
        modes = solve_modes(assemble(mesh, cs.material), f_max=60e6)
        f0 = [m.frequency for m in modes if m.angular_order == 0][0]
        f2 = [m.frequency for m in modes if m.angular_order == 2][0]
        errs.append([abs(f0 / ref[0] - 1), abs(f2 / ref[1] - 1)])
        mesh = refine_uniform(mesh, cs)
    errs = np.array(errs)
    order = np.log2(errs[:-1] / errs[1:])
    assert np.all((order >= 1.5) & (order <= 2.5)), order


@settings(max_examples=5, deadline=None)
@given(st.floats(0.1, 10.0))
def test_scale_invariance(s):
    from gawbs.geometry import build_standard_fiber

    cs, _ = build_standard_fiber(80e-6, 4.5e-6)
    mesh = mesh_cross_section(cs, 8e-6)
    base = solve_modes(assemble(mesh, cs.material), n_max=20, classify=False)
    scaled = solve_modes(assemble(mesh.scaled(s), cs.material), n_max=20, classify=False)
    np.testing.assert_allclose([m.frequency * s for m in scaled], [m.frequency for m in base], rtol=1e-6)


def test_classify_analytic_fields(disk40_mesh, disk40):
    cs = disk40[0]
    x, y = disk40_mesh.nodes.T
    r, th = np.hypot(x, y), np.arctan2(y, x)
    for md, expected in ((radial_dispersion_roots(cs.material, cs.outer_radius, 60e6)[0], 0),
                         (tr_dispersion_roots(cs.material, cs.outer_radius, 40e6)[0], 2)):
        ur, ut = md.displacement(r, th)
        u = np.stack([ur * np.cos(th) - ut * np.sin(th), ur * np.sin(th) + ut * np.cos(th)], axis=1)
        assert classify_angular_order(u, disk40_mesh) == expected
    assert classify_angular_order(np.zeros((disk40_mesh.n_nodes, 2)), disk40_mesh) == INTERIOR


def test_classify_fem_modes(disk_modes):
    orders = [m.angular_order for m in disk_modes]
    r0 = radial_dispersion_roots(disk_modes[0].ops.material, 40e-6, 60e6)[0].frequency
    fundamental = min((m for m in disk_modes if m.angular_order == 0), key=lambda m: m.frequency)
    assert fundamental.frequency == pytest.approx(r0, rel=1e-2)
    assert TORSIONAL in orders


def test_thermal_amplitude_filled(disk_modes):
    md = disk_modes[0]
    kB = 1.380649e-23
    assert md.thermal_amplitude_sq == pytest.approx(kB * 300 / (md.omega**2 * 8.0), rel=1e-12)


def test_core_energy_fraction_uniform(disk40_mesh):
    frac = core_energy_fraction(np.ones(disk40_mesh.n_triangles), disk40_mesh, 10e-6)
    assert frac == pytest.approx((10 / 40) ** 2, abs=1e-2)
    c = np.hypot(*disk40_mesh.centroids().T)
    area = np.abs(disk40_mesh.signed_areas())
    assert frac == pytest.approx(area[c < 10e-6].sum() / area.sum(), abs=1e-3)
    with pytest.raises(ValidationError):
        core_energy_fraction(np.ones(disk40_mesh.n_triangles), disk40_mesh, 50e-6)


def test_truncation_warning(disk40):
    mesh = mesh_cross_section(disk40[0], 20e-6)
    ops = assemble(mesh, disk40[0].material)
    with pytest.warns(UserWarning, match="truncating"):
        modes = solve_modes(ops, n_max=10 * ops.n_dof, classify=False)
    assert len(modes) == ops.n_dof - 5


def test_needs_range():
    with pytest.raises(ValidationError):
        solve_modes(None, f_max=None, n_max=None)


def test_fundamental_period_sane(disk_modes):
    assert all(m.frequency > 1e6 for m in disk_modes)
    assert all(math.isfinite(m.frequency) for m in disk_modes)
