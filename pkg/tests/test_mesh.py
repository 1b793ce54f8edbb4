import json
import math

import numpy as np
import pytest

from quasifrac.mesh import (
    AdaptationFailed,
    DisplacementField,
    Domain,
    InadmissibleParams,
    MeshParams,
    StrainHint,
    Triangulation,
    adapt_mesh,
    build_background_mesh,
    check_admissible,
    interpolate,
)
from conftest import STD_DOMAIN, AffineLoad, make_mesh


def test_params_validation():
    with pytest.raises(InadmissibleParams):
        MeshParams(theta0=0.0, eps=0.1)
    with pytest.raises(InadmissibleParams):
        MeshParams(theta0=1.2, eps=0.1)  # > pi/3
    with pytest.raises(InadmissibleParams):
        MeshParams(theta0=0.5, eps=-1.0)
    with pytest.raises(InadmissibleParams):
        MeshParams(theta0=0.5, eps=0.1, omega_factor=2.0)


def test_domain_validation():
    with pytest.raises(ValueError):
        Domain((0, 0, 1, 1), (0, 0, 1, 1))  # no collar
    with pytest.raises(ValueError):
        Domain((0, 0, 1, 1), (0.5, 0, 2, 2))  # omega sticks out


def test_background_grid_geometry():
    # spacing is 2 eps cos(theta0); half-squares carry 45/45/90 angles
    theta0 = math.radians(20.0)
    params = MeshParams(theta0=theta0, eps=0.25)
    assert params.grid_spacing == pytest.approx(2 * 0.25 * math.cos(theta0),
                                                abs=1e-15)
    dom = Domain((0.1, 0.1, 0.9, 0.9), (0.0, 0.0, 1.0, 1.0))
    mesh = build_background_mesh(dom, params)
    # lattice spacing reproduced to 1e-12
    xs = np.unique(mesh.nodes[:, 0])
    assert np.allclose(np.diff(xs), params.grid_spacing, atol=1e-12)
    assert check_admissible(mesh).ok
    assert mesh.is_background.all()


def test_background_triangle_count_exact():
    # sides multiples of the grid spacing: exactly 2 * nx * ny triangles
    params = MeshParams(theta0=math.pi / 4, eps=1 / math.sqrt(2.0))
    h = params.grid_spacing
    assert h == pytest.approx(1.0, abs=1e-14)
    dom = Domain((1.0, 1.0, 5.0, 3.0), (0.0, 0.0, 6.0, 4.0))
    mesh = build_background_mesh(dom, params)
    assert mesh.n_triangles == 2 * 6 * 4
    assert mesh.n_nodes == 7 * 5


def test_background_rejects_steep_angle():
    params = MeshParams(theta0=math.radians(50.0), eps=0.1)
    with pytest.raises(InadmissibleParams):
        build_background_mesh(STD_DOMAIN, params)


def test_check_admissible_reports_short_edge():
    params = MeshParams(theta0=math.radians(10.0), eps=0.5)
    nodes = [(0, 0), (1, 0), (0.5, 0.9), (0.5, 1.15)]
    tris = [(0, 1, 2), (2, 1, 3)]  # edge (2,3) has length 0.25 = eps/2
    dom = Domain((0.3, 0.2, 0.6, 0.4), (0.0, 0.0, 1.0, 1.15))
    mesh = Triangulation(nodes, tris, dom, params)
    rep = check_admissible(mesh)
    kinds = rep.kinds()
    assert "edge_short" in kinds
    short = [ids for k, ids, _ in rep.violations if k == "edge_short"]
    lens = mesh.edge_lengths[[i[0] for i in short]]
    assert np.min(lens) == pytest.approx(0.25, abs=1e-12)


def test_check_admissible_reports_overlap():
    params = MeshParams(theta0=math.radians(10.0), eps=0.5)
    # second triangle shares only part of the first one's bottom edge
    nodes = [(0, 0), (2, 0), (1, 1), (0.5, 0), (1.5, 0), (1, -1)]
    tris = [(0, 1, 2), (3, 4, 5)]
    dom = Domain((0.8, 0.2, 1.2, 0.5), (0.0, -1.0, 2.0, 1.0))
    mesh = Triangulation(nodes, tris, dom, params)
    rep = check_admissible(mesh)
    assert "overlap" in rep.kinds()


def test_check_admissible_coverage():
    params = MeshParams(theta0=math.radians(15.0), eps=0.5)
    nodes = [(0, 0), (2, 0), (1, 1.2)]
    tris = [(0, 1, 2)]
    dom = Domain((0.0, 0.0, 2.0, 1.0), (-0.5, -0.5, 2.5, 1.5))
    mesh = Triangulation(nodes, tris, dom, params)
    rep = check_admissible(mesh)
    assert "coverage" in rep.kinds()


def test_area_edge_inequality_on_background(mesh16):
    params = mesh16.params
    max_edge = mesh16.edge_lengths[mesh16.tri_edges].max(axis=1)
    bound = 0.5 * params.eps * math.sin(params.theta0) * max_edge
    assert np.all(mesh16.areas >= bound * (1 - 1e-12))


def test_interpolate_affine_exact(mesh16):
    g = AffineLoad(0.4, -0.3, 0.2, 0.1)
    u = interpolate(mesh16, g, 0.7)
    # exact at nodes and at random interior points
    assert np.allclose(u.values, g.eval(0.7, mesh16.nodes), atol=0.0)
    rng = np.random.default_rng(0)
    pts = rng.uniform(0.05, 0.95, size=(50, 2))
    norm_a = np.linalg.norm(g.A)
    diam = math.hypot(1.5, 1.5)
    for p in pts:
        err = np.abs(u.evaluate(p) - g.eval(0.7, p[None])[0]).max()
        assert err < 1e-12 * norm_a * diam


def test_interpolate_shear_strain(mesh16):
    # g(t,x) = (t x2, 0) at t = 0.5: every triangle has e12 = 0.25
    g = AffineLoad(0.0, 1.0, 0.0, 0.0)
    u = interpolate(mesh16, g, 0.5)
    s = u.strains()
    assert np.allclose(s[:, 2] / math.sqrt(2.0), 0.25, atol=1e-14)
    assert np.allclose(s[:, 0], 0.0, atol=1e-14)


def test_interpolate_zero(mesh16):
    u = interpolate(mesh16, AffineLoad(), 1.0)
    assert not u.values.any()


def test_adapt_mesh_identity(mesh16):
    out = adapt_mesh(mesh16, [], None)
    assert np.array_equal(out.triangles, mesh16.triangles)
    assert np.allclose(out.nodes, mesh16.nodes, atol=0.0)


def test_adapt_mesh_preserves_locked(mesh16):
    locked = [200, 201, 300]
    out = adapt_mesh(mesh16, locked, None)
    for t in locked:
        assert np.array_equal(out.triangles[t], mesh16.triangles[t])
        assert np.array_equal(out.nodes[out.triangles[t]],
                              mesh16.nodes[mesh16.triangles[t]])
    assert check_admissible(out).ok


def test_adapt_mesh_band_snapping():
    mesh = make_mesh(1 / 16, theta0=math.radians(15.0))
    ang = math.radians(30.0)
    hint = StrainHint(point=(0.5, 0.5),
                      direction=(math.cos(ang), math.sin(ang)),
                      width=0.6 * mesh.params.grid_spacing, length=0.45)
    out = adapt_mesh(mesh, [], hint)
    assert check_admissible(out).ok
    moved = np.where(np.any(out.nodes != mesh.nodes, axis=1))[0]
    assert len(moved) >= 2
    # at least one edge inside the band aligns with it within 5 degrees
    d = np.array([math.cos(ang), math.sin(ang)])
    best = 180.0
    for e in range(len(out.edges)):
        a, b = out.edges[e]
        if a not in moved and b not in moved:
            continue
        v = out.nodes[b] - out.nodes[a]
        v = v / np.linalg.norm(v)
        dev = math.degrees(math.acos(min(1.0, abs(float(v @ d)))))
        best = min(best, dev)
    assert best <= 5.0


def test_adapt_mesh_rejects_foreign_locked(mesh16, mesh32):
    with pytest.raises(AdaptationFailed):
        adapt_mesh(mesh16, [mesh16.n_triangles + 5], None)


def test_mesh_json_roundtrip(tmp_path, mesh16):
    path = tmp_path / "m.json"
    mesh16.save(path)
    with open(path) as f:
        data = json.load(f)
    assert set(data) >= {"nodes", "triangles", "params"}
    assert set(data["params"]) >= {"theta0", "eps", "omega_factor"}
    back = Triangulation.load(path)
    assert np.allclose(back.nodes, mesh16.nodes)
    assert np.array_equal(back.triangles, mesh16.triangles)
    assert back.params.eps == mesh16.params.eps
    assert check_admissible(back).ok


def test_field_shape_mismatch(mesh16):
    with pytest.raises(Exception):
        DisplacementField(mesh16, np.zeros((3, 2)))
