import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gawbs.errors import MeshError, MeshParseError
from gawbs.geometry import build_pcf, build_standard_fiber
from gawbs.mesh import mesh_cross_section, read_mesh, refine_uniform, write_mesh

PCF_ARGS = (127e-6, 1.6e-6, 1.28e-6, 10e-6, (2.4e-6, 1.5e-6))


@pytest.fixture(scope="module")
def pcf():
    cs, _ = build_pcf(*PCF_ARGS)
    return cs, mesh_cross_section(cs, 2e-6)


def check_invariants(mesh, quality=25.0):
    assert np.all(mesh.signed_areas() > 0)
    assert mesh.triangles.min() >= 0 and mesh.triangles.max() < mesh.n_nodes
    assert mesh.min_angles().min() >= quality - 1e-9
    t = mesh.triangles
    e = np.sort(np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]]), axis=1)
    uniq, counts = np.unique(e, axis=0, return_counts=True)
    assert counts.max() <= 2
    bset = {tuple(x) for x in np.sort(mesh.boundary_edges, axis=1).tolist()}
    assert bset == {tuple(x) for x in uniq[counts == 1].tolist()}
    # edge connectivity: flood fill over shared edges
    owner = {}
    adj = [[] for _ in range(mesh.n_triangles)]
    for k, tri in enumerate(t.tolist()):
        for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
            key = (min(a, b), max(a, b))
            if key in owner:
                adj[k].append(owner[key])
                adj[owner[key]].append(k)
            else:
                owner[key] = k
    seen, stack = {0}, [0]
    while stack:
        for j in adj[stack.pop()]:
            if j not in seen:
                seen.add(j)
                stack.append(j)
    assert len(seen) == mesh.n_triangles


def euler(mesh):
    return mesh.n_nodes - len(mesh.edges()) + mesh.n_triangles


def test_disk_mesh_invariants(disk40):
    cs, _ = disk40
    h = cs.outer_radius / 10
    mesh = mesh_cross_section(cs, h)
    check_invariants(mesh)
    ideal = math.pi * cs.outer_radius**2 / (math.sqrt(3) / 4 * h * h)
    assert 0.5 * ideal < mesh.n_triangles < 3 * ideal
    assert euler(mesh) == 1


def test_pcf_topology(pcf):
    cs, mesh = pcf
    check_invariants(mesh)
    loops = mesh.hole_loops()
    assert sorted(loops) == list(range(len(cs.holes)))
    assert all(len(v) == 1 for v in loops.values())
    assert euler(mesh) == 1 - len(cs.holes)


def test_pcf_area_matches_circle_set_oracle(pcf):
    cs, mesh = pcf
    exact = math.pi * cs.outer_radius**2 - sum(math.pi * h.radius**2 for h in cs.holes)
    assert np.abs(mesh.signed_areas()).sum() == pytest.approx(exact, rel=1e-3)


def test_chord_error_bound(pcf):
    cs, mesh = pcf
    target_h = 2e-6
    radii = np.array([cs.outer_radius] + [h.radius for h in cs.holes])
    p = mesh.nodes[mesh.boundary_edges]
    chord = np.linalg.norm(p[:, 1] - p[:, 0], axis=1)
    r = radii[mesh.boundary_tags + 1]
    sagitta = r * (1 - np.cos(np.arcsin(np.minimum(chord / (2 * r), 1.0))))
    assert np.all(sagitta <= target_h**2 / (8 * r) * (1 + 1e-9))


def test_determinism(tmp_path, disk40):
    cs, _ = build_pcf(*PCF_ARGS)
    write_mesh(mesh_cross_section(cs, 4e-6), tmp_path / "a.mesh")
    write_mesh(mesh_cross_section(cs, 4e-6), tmp_path / "b.mesh")
    assert (tmp_path / "a.mesh").read_bytes() == (tmp_path / "b.mesh").read_bytes()


def test_round_trip(tmp_path, disk40_mesh, pcf):
    for mesh in (disk40_mesh, pcf[1]):
        write_mesh(mesh, tmp_path / "m.mesh")
        assert read_mesh(tmp_path / "m.mesh") == mesh


def test_refinement_quadruples(disk40):
    cs, _ = disk40
    counts = [mesh_cross_section(cs, h).n_triangles for h in (8e-6, 4e-6, 2e-6, 1e-6)]
    assert all(b >= 4 * a for a, b in zip(counts, counts[1:]))


def test_refine_uniform(disk40, disk40_mesh):
    cs, _ = disk40
    fine = refine_uniform(disk40_mesh, cs)
    assert fine.n_triangles == 4 * disk40_mesh.n_triangles
    check_invariants(fine, quality=20.0)
    exact = math.pi * cs.outer_radius**2
    assert abs(fine.signed_areas().sum() - exact) < abs(disk40_mesh.signed_areas().sum() - exact)
    assert euler(fine) == 1


def test_thin_web_rejected():
    cs, _ = build_pcf(127e-6, 1.6e-6, 1.55e-6, 10e-6, (2.4e-6, 1.5e-6))
    with pytest.raises(MeshError, match="target_h"):
        mesh_cross_section(cs, 2e-6)


@pytest.mark.parametrize("kw", [dict(target_h=0.0), dict(target_h=2e-6, quality_angle=35.0)])
def test_bad_parameters(disk40, kw):
    with pytest.raises(MeshError):
        mesh_cross_section(disk40[0], **kw)


@settings(max_examples=8, deadline=None)
@given(st.floats(0.3, 3.0))
def test_quality_holds_for_random_sizes(frac):
    cs, _ = build_standard_fiber(20e-6, 3e-6)
    mesh = mesh_cross_section(cs, frac * 1e-6 * 2)
    check_invariants(mesh)


# -- parser errors ---------------------------------------------------------------------------

def _text(mesh):
    lines = ["gawbsmesh 1", f"{mesh.n_nodes} {mesh.n_triangles} {len(mesh.boundary_edges)}"]
    lines += [f"{x!r} {y!r}" for x, y in mesh.nodes.tolist()]
    lines += [f"{i} {j} {k} glass" for i, j, k in mesh.triangles.tolist()]
    lines += [f"{i} {j} {'outer' if t < 0 else f'hole{t}'}"
              for (i, j), t in zip(mesh.boundary_edges.tolist(), mesh.boundary_tags.tolist())]
    return lines


@pytest.fixture()
def small(disk40):
    return mesh_cross_section(disk40[0], 10e-6)


def test_parse_clockwise_triangle(tmp_path, small):
    lines = _text(small)
    k = 2 + small.n_nodes + 3
    i, j, m, tag = lines[k].split()
    lines[k] = f"{j} {i} {m} {tag}"
    (tmp_path / "m").write_text("\n".join(lines) + "\n")
    with pytest.raises(MeshParseError, match=r"line %d: triangle 3 " % (k + 1)):
        read_mesh(tmp_path / "m")


def test_parse_truncated(tmp_path, small):
    lines = _text(small)[:-2]
    (tmp_path / "m").write_text("\n".join(lines) + "\n")
    with pytest.raises(MeshParseError, match=f"unexpected end of file at line {len(lines) + 1}"):
        read_mesh(tmp_path / "m")


def test_parse_index_out_of_range(tmp_path, small):
    lines = _text(small)
    k = 2 + small.n_nodes
    lines[k] = f"0 1 {small.n_nodes} glass"
    (tmp_path / "m").write_text("\n".join(lines) + "\n")
    with pytest.raises(MeshParseError, match="out of range"):
        read_mesh(tmp_path / "m")


def test_parse_bad_counts(tmp_path, small):
    lines = _text(small)
    lines[1] = "3 x 1"
    (tmp_path / "m").write_text("\n".join(lines) + "\n")
    with pytest.raises(MeshParseError, match="line 2"):
        read_mesh(tmp_path / "m")
