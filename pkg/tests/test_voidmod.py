import math

import numpy as np
import pytest

from quasifrac.mesh import DisplacementField, interpolate
from quasifrac.trisets import TriangleSet, local_saturation
from quasifrac.voidmod import (
    PreconditionViolated,
    VoidModParams,
    build_boundary_graph,
    fill_holes,
    heal_component,
    heal_triangles,
    modify_voids,
    remove_separating_small,
)
from conftest import AffineLoad, block_ids, cell_tris, make_mesh

VM = VoidModParams(eta=0.2)


def zero_field(mesh):
    return DisplacementField(mesh, np.zeros((mesh.n_nodes, 2)))


def smooth_field(mesh, seed=0, scale=0.05):
    rng = np.random.default_rng(seed)
    a = rng.uniform(-1, 1, size=6)
    x, y = mesh.nodes[:, 0], mesh.nodes[:, 1]
    vals = np.column_stack([
        a[0] * np.sin(math.pi * x) * np.cos(math.pi * y) + a[1] * x + a[2] * y,
        a[3] * np.cos(math.pi * x) * np.sin(math.pi * y) + a[4] * x + a[5] * y,
    ]) * scale
    return DisplacementField(mesh, vals)


# ---------------------------------------------------------------------------
# boundary graph


def test_graph_single_triangle(mesh16):
    g = build_boundary_graph(TriangleSet(mesh16, [100]))
    assert g.n_vertices == 3
    assert g.n_edges == 3
    assert g.n_faces == 1
    assert all(d == 2 for d in g.degree.values())
    assert g.d_of_component == [0]
    assert g.euler_identity()[0] == g.euler_identity()[1]


def test_graph_vertex_touching_pair(mesh16):
    # two lower-half cells meeting only at one lattice node: the shared
    # vertex has degree 4 and both components count one high-degree visit
    a, _ = cell_tris(mesh16, 5, 5)
    b, _ = cell_tris(mesh16, 6, 6)
    g = build_boundary_graph(TriangleSet(mesh16, [a, b]))
    assert g.n_components == 2
    deg4 = [v for v, d in g.degree.items() if d == 4]
    assert len(deg4) == 1
    assert sorted(g.d_of_component) == [1, 1]
    assert g.v2l_counts.get(2, 0) == 1
    assert g.euler_identity()[0] == g.euler_identity()[1]
    assert g.edge_count_identity()[0] == g.edge_count_identity()[1]
    assert g.d_sum_identity()[0] == g.d_sum_identity()[1]


def test_graph_disk_with_hole(mesh16):
    ids = block_ids(mesh16, 4, 8, 4, 8)
    center = np.concatenate([cell_tris(mesh16, 5, 5)])
    ring = TriangleSet(mesh16, np.setdiff1d(ids, center))
    g = build_boundary_graph(ring)
    assert g.n_components == 1
    assert g.n_faces == g.n_components + 1  # the hole adds one bounded face
    assert g.euler_identity()[0] == g.euler_identity()[1]


def test_graph_identities_random(mesh32):
    rng = np.random.default_rng(123)
    for _ in range(40):
        density = rng.uniform(0.05, 0.5)
        ids = rng.choice(mesh32.n_triangles,
                         size=int(density * mesh32.n_triangles), replace=False)
        g = build_boundary_graph(TriangleSet(mesh32, ids))
        assert g.euler_identity()[0] == g.euler_identity()[1]
        assert g.edge_count_identity()[0] == g.edge_count_identity()[1]
        assert g.d_sum_identity()[0] == g.d_sum_identity()[1]


def test_lemma_components_bound(mesh32):
    # after hole filling, components touching >= 3 others are controlled by
    # the single-touch count plus eta/eps (fitted constant must stay sane)
    rng = np.random.default_rng(9)
    eps = mesh32.params.eps
    ratios = []
    for _ in range(25):
        ids = rng.choice(mesh32.n_triangles, size=rng.integers(50, 400),
                         replace=False)
        b = fill_holes(TriangleSet(mesh32, ids), VM)
        g = build_boundary_graph(b)
        lhs = sum(l for l in g.d_of_component if l >= 3)
        d1 = sum(1 for l in g.d_of_component if l == 1)
        ratios.append(lhs / max(1.0, d1 + VM.eta / eps))
    assert max(ratios) < 10.0


# ---------------------------------------------------------------------------
# fill holes


def test_fill_holes_no_holes(mesh16):
    a = TriangleSet(mesh16, block_ids(mesh16, 3, 6, 3, 6))
    assert np.array_equal(fill_holes(a, VM).ids, a.ids)


def test_fill_holes_small_hole_absorbed(mesh16):
    ids = block_ids(mesh16, 4, 8, 4, 8)
    center = np.asarray(cell_tris(mesh16, 5, 5))
    ring = TriangleSet(mesh16, np.setdiff1d(ids, center))
    b = fill_holes(ring, VM)
    assert set(center) <= set(b.ids)


def test_fill_holes_large_hole_kept(mesh16):
    # ring around a hole larger than eps^2/eta^2 stays open
    ids = block_ids(mesh16, 2, 14, 2, 14)
    inner = block_ids(mesh16, 3, 13, 3, 13)
    ring = TriangleSet(mesh16, np.setdiff1d(ids, inner))
    hole_area = float(mesh16.areas[inner].sum())
    assert hole_area > VM.hole_threshold(mesh16.params.eps)
    b = fill_holes(ring, VM)
    assert np.array_equal(b.ids, ring.ids)


# ---------------------------------------------------------------------------
# separating vertices


def test_remove_separating_small_pendant(mesh16):
    # a large block with a small block hanging at one vertex: the pendant
    # goes, the block stays
    big = block_ids(mesh16, 2, 10, 2, 10)
    small = block_ids(mesh16, 10, 11, 10, 11)
    b = TriangleSet(mesh16, np.concatenate([big, small]))
    assert len(b.closure_components) == 1
    u = zero_field(mesh16)
    b_sep, _ = remove_separating_small(b, u, VM)
    assert set(small).isdisjoint(set(b_sep.ids))
    assert set(big) <= set(b_sep.ids)


def test_remove_separating_no_candidates(mesh16):
    big = TriangleSet(mesh16, block_ids(mesh16, 2, 12, 2, 12))
    u = zero_field(mesh16)
    b_sep, _ = remove_separating_small(big, u, VM)
    assert np.array_equal(b_sep.ids, big.ids)


def test_remove_separating_isolated_small(mesh16):
    # an isolated small component is a whole closure component and goes
    big = block_ids(mesh16, 2, 10, 2, 10)
    iso = np.asarray(cell_tris(mesh16, 13, 13))
    b = TriangleSet(mesh16, np.concatenate([big, iso]))
    u = zero_field(mesh16)
    b_sep, _ = remove_separating_small(b, u, VM)
    assert set(iso).isdisjoint(set(b_sep.ids))


# ---------------------------------------------------------------------------
# healing


def test_heal_component_affine_reproduction(mesh16):
    z = TriangleSet(mesh16, block_ids(mesh16, 6, 8, 6, 8))
    g = AffineLoad(0.1, 0.05, 0.02, -0.08)
    u = interpolate(mesh16, g, 1.0)
    broken = u.copy()
    inner = np.unique(mesh16.triangles[z.ids].ravel())
    outer = np.unique(mesh16.triangles[np.setdiff1d(
        np.arange(mesh16.n_triangles), z.ids)].ravel())
    strictly_inner = np.setdiff1d(inner, outer)
    broken.values[strictly_inner] = 7.0  # garbage inside the void
    healed = heal_component(z, broken, TriangleSet(mesh16), VM)
    assert np.allclose(healed.values[strictly_inner],
                       u.values[strictly_inner], atol=1e-9)
    # the Lipschitz-extension mode is not exact on affine data but must
    # stay within a modest amplification of the surrounding strain
    vm = VoidModParams(eta=0.2, heal_mode="mcshane")
    healed_mc = heal_component(z, broken, TriangleSet(mesh16), vm)
    from quasifrac.voidmod import _neighborhood, healing_ratio
    nz = _neighborhood(mesh16, z.ids)
    ratio = healing_ratio(mesh16, healed_mc, u, z.ids, nz)
    assert ratio < 5.0


def test_heal_component_rigid_motion(mesh16):
    z = TriangleSet(mesh16, block_ids(mesh16, 6, 8, 6, 8))
    w = 0.4
    rigid = np.array([0.3, -0.1]) + mesh16.nodes @ np.array([[0, -w], [w, 0.0]]).T
    u = DisplacementField(mesh16, rigid)
    healed = heal_component(z, u, TriangleSet(mesh16), VM)
    s = healed.strains()
    assert np.abs(s[z.ids]).max() < 1e-10


def test_heal_component_preconditions(mesh16):
    u = zero_field(mesh16)
    # not saturated: ring with hole
    ids = block_ids(mesh16, 4, 8, 4, 8)
    ring = TriangleSet(mesh16, np.setdiff1d(ids, np.asarray(cell_tris(mesh16, 5, 5))))
    with pytest.raises(PreconditionViolated):
        heal_component(ring, u, TriangleSet(mesh16), VM)
    # too large
    big = TriangleSet(mesh16, block_ids(mesh16, 2, 12, 2, 12))
    with pytest.raises(PreconditionViolated):
        heal_component(big, u, TriangleSet(mesh16), VM)
    # Y touching at three points
    z = TriangleSet(mesh16, block_ids(mesh16, 6, 8, 6, 8))
    znodes = np.unique(mesh16.triangles[z.ids].ravel())
    corners = [v for v in znodes
               if sum(1 for t in mesh16.tris_of_node(v) if t in set(z.ids)) == 1]
    y_ids = []
    for v in corners[:3]:
        for t in mesh16.tris_of_node(v):
            if t not in set(z.ids):
                y_ids.append(int(t))
                break
    with pytest.raises(PreconditionViolated):
        heal_component(z, u, TriangleSet(mesh16, y_ids), VM)


def test_heal_component_two_point_pinch_ratio(mesh16):
    # dumbbell-style: Y pinches the healed piece at exactly two points
    # (diagonally opposite corners of the block touched by one triangle each)
    z = TriangleSet(mesh16, block_ids(mesh16, 6, 8, 6, 7))
    y_ids = [cell_tris(mesh16, 5, 5)[0],   # touches only lattice node (6,6)
             cell_tris(mesh16, 8, 7)[1]]   # touches only lattice node (8,7)
    znodes = np.unique(mesh16.triangles[z.ids].ravel())
    ynodes = np.unique(mesh16.triangles[np.asarray(y_ids)].ravel())
    assert len(np.intersect1d(znodes, ynodes)) == 2
    u = smooth_field(mesh16, seed=4)
    before = u.copy()
    from quasifrac.voidmod import healing_ratio, _neighborhood
    ratios = {}
    for mode in ("elastic", "mcshane"):
        vm = VoidModParams(eta=0.2, heal_mode=mode)
        healed = heal_component(z, u, TriangleSet(mesh16, y_ids), vm)
        nz = _neighborhood(mesh16, z.ids)
        data = np.setdiff1d(nz, np.asarray(y_ids))
        ratios[mode] = healing_ratio(mesh16, healed, before, z.ids, data)
        assert np.isfinite(ratios[mode])
    # elastic extension is the energy-minimal one
    assert ratios["elastic"] <= ratios["mcshane"] + 1e-12


def test_heal_triangles_isolated(mesh16):
    t, _ = cell_tris(mesh16, 7, 7)
    h = TriangleSet(mesh16, [t])
    u = zero_field(mesh16)
    out, _ = heal_triangles(h, u, VM)
    assert len(out) == 0


def test_heal_triangles_vertex_touching_pair_healable(mesh16):
    # two triangles meeting only at a vertex are both zero-neighbor members
    # with exclusive vertices: healed away
    a, _ = cell_tris(mesh16, 5, 5)
    b, _ = cell_tris(mesh16, 6, 6)
    out, _ = heal_triangles(TriangleSet(mesh16, [a, b]), zero_field(mesh16), VM)
    assert len(out) == 0


def test_heal_triangles_blocked_by_shared_vertex(mesh16):
    # one-neighbor triangle whose two exposed edges meet at a vertex shared
    # with another member: no exclusive vertex, kept
    lower, upper = cell_tris(mesh16, 5, 5)
    _, toucher = cell_tris(mesh16, 6, 4)  # shares only the junction node
    h = TriangleSet(mesh16, [lower, upper, toucher])
    lower_nodes = set(int(v) for v in mesh16.triangles[lower])
    toucher_nodes = set(int(v) for v in mesh16.triangles[toucher])
    assert len(lower_nodes & toucher_nodes) == 1
    out, _ = heal_triangles(h, zero_field(mesh16), VM)
    assert lower in out
    assert upper not in out and toucher not in out


def test_heal_triangles_full_disk_unchanged(mesh16):
    # a block with its two single-triangle corners trimmed exposes at most
    # one edge per member: nothing qualifies for healing
    ids = block_ids(mesh16, 4, 9, 4, 9)
    trim = [cell_tris(mesh16, 4, 8)[1], cell_tris(mesh16, 8, 4)[0]]
    h = TriangleSet(mesh16, np.setdiff1d(ids, np.asarray(trim)))
    out, _ = heal_triangles(h, zero_field(mesh16), VM)
    assert np.array_equal(out.ids, h.ids)


# ---------------------------------------------------------------------------
# the full pipeline


def test_modify_voids_empty(mesh16):
    res = modify_voids(TriangleSet(mesh16), zero_field(mesh16), VM)
    assert len(res.a_mod) == 0
    assert res.stats["perim_Amod"] == 0.0


def test_modify_voids_band(mesh16):
    # a long band survives with healed end caps; perimeter bound holds
    band = block_ids(mesh16, 1, 15, 7, 8)
    a = TriangleSet(mesh16, band)
    assert a.area > VM.hole_threshold(mesh16.params.eps)
    res = modify_voids(a, smooth_field(mesh16, 1), VM)
    st = res.stats
    assert st["area_Amod"] > 0.5 * st["area_A"]
    eps = mesh16.params.eps
    sin0 = math.sin(mesh16.params.theta0)
    assert st["perim_Amod"] <= 2 * st["area_A"] / (eps * sin0) + 10.0 * VM.eta
    assert st["filled_boundary_length"] == 0.0
    assert res.t_mod.issubset(a)


def test_modify_voids_nested_pairs(mesh32):
    rng = np.random.default_rng(77)
    u = smooth_field(mesh32, 2)
    for _ in range(25):
        n2 = int(rng.integers(40, 250))
        ids2 = rng.choice(mesh32.n_triangles, size=n2, replace=False)
        ids1 = rng.choice(ids2, size=int(rng.integers(10, n2)), replace=False)
        r1 = modify_voids(TriangleSet(mesh32, ids1), u, VM)
        r2 = modify_voids(TriangleSet(mesh32, ids2), u, VM)
        assert r1.a_mod.issubset(r2.a_mod)
        assert r1.t_mod.issubset(r2.t_mod)


def test_modify_voids_filled_interior(mesh32):
    # filled triangles never contribute boundary (remark-style invariant)
    rng = np.random.default_rng(5)
    u = smooth_field(mesh32, 3)
    for _ in range(20):
        ids = rng.choice(mesh32.n_triangles, size=int(rng.integers(60, 400)),
                         replace=False)
        res = modify_voids(TriangleSet(mesh32, ids), u, VM)
        assert res.stats["filled_boundary_length"] == 0.0


def test_modify_voids_change_confined(mesh16):
    # the field changes only around removed pieces, never on the far side
    big = block_ids(mesh16, 2, 8, 2, 8)
    iso = np.asarray(cell_tris(mesh16, 13, 13))
    a = TriangleSet(mesh16, np.concatenate([big, iso]))
    u = smooth_field(mesh16, 8)
    res = modify_voids(a, u, VM)
    changed = np.where(np.any(res.u_mod.values != u.values, axis=1))[0]
    iso_nodes = set(int(v) for v in np.unique(mesh16.triangles[iso].ravel()))
    assert set(int(v) for v in changed) <= iso_nodes


def test_local_saturation_matches_global(mesh16):
    rng = np.random.default_rng(21)
    for _ in range(10):
        ids = rng.choice(mesh16.n_triangles, size=20, replace=False)
        ts = TriangleSet(mesh16, ids)
        assert np.array_equal(local_saturation(mesh16, ts.ids),
                              ts.saturation_ids())
