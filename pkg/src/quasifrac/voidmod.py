"""Void modification: boundary-graph analysis, hole filling, removal of
small separating pieces, healing, and the sharp-perimeter post-processing
of cracked-triangle sets.

The pipeline turns a triangle set A with bounded energy into A_mod whose
boundary length is dominated by 2|A|/(eps sin theta0) up to O(eta):
small holes of the closure are filled; small pieces hanging at separating
vertices (and whole small closure components) are cut off with the field
extended over them; remaining small pieces touching the rest in at most
two points are peeled iteratively; finally exposed triangles with an
exclusive vertex are healed away.  Every stage removes whole saturated
pieces or single triangles, which keeps filled triangles interior and
makes the construction monotone under set inclusion.
"""

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ._kernels import clip_areas_rect
from .mesh import DisplacementField, Triangulation
from .trisets import (
    TriangleSet,
    closure_components_minus_vertex,
    local_saturation,
)


class VoidModError(Exception):
    pass


class PreconditionViolated(VoidModError):
    pass


@dataclass(frozen=True)
class VoidModParams:
    """Smallness parameter eta and healing configuration.

    `boundary_margin` is the extra clearance (absolute length) a piece must
    keep from the boundary of the enclosing rectangle to be healed; pieces
    whose one-ring neighborhood leaves the triangulated region are never
    healed regardless.
    """

    eta: float = 0.2
    heal_mode: str = "elastic"   # or "mcshane"
    boundary_margin: float = 0.0

    def __post_init__(self):
        if not (0.0 < self.eta <= 0.5):
            raise VoidModError(f"eta must lie in (0, 0.5], got {self.eta}")
        if self.heal_mode not in ("elastic", "mcshane"):
            raise VoidModError(f"unknown heal mode {self.heal_mode!r}")

    def hole_threshold(self, eps: float) -> float:
        """Area budget eps^2 / eta^2 for holes and removable pieces."""
        return eps * eps / (self.eta * self.eta)


# ---------------------------------------------------------------------------
# boundary graph


@dataclass
class BoundaryGraph:
    """Planar graph carried by the boundary of a triangle set.

    Vertices are mesh nodes on the set boundary, edges the triangle edges
    contained in it.  `cycles[i]` lists, for edge-component i, the
    concatenated vertex tuples of its boundary curves; `d_of_component[i]`
    counts tuple positions whose vertex has degree >= 4.
    """

    vertices: np.ndarray
    edge_ids: np.ndarray
    degree: dict
    v2l_counts: dict
    n_faces: int
    n_graph_components: int
    n_components: int
    n_bounded_complement: int
    cycles: list
    d_of_component: list

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_edges(self) -> int:
        return len(self.edge_ids)

    def d_counts(self) -> dict:
        out = {}
        for l in self.d_of_component:
            out[l] = out.get(l, 0) + 1
        return out

    def euler_identity(self):
        """(V - E + F, nu): equal by the planar Euler formula."""
        return (self.n_vertices - self.n_edges + self.n_faces,
                self.n_graph_components)

    def edge_count_identity(self):
        """(E, sum_k k * #V_2k): equal since every edge joins two vertices."""
        rhs = sum(k * c for k, c in self.v2l_counts.items())
        return (self.n_edges, rhs)

    def d_sum_identity(self):
        """(sum_l l * #D_l, sum_{k>=2} k * #V_2k): equal by cycle counting."""
        lhs = sum(self.d_of_component)
        rhs = sum(k * c for k, c in self.v2l_counts.items() if k >= 2)
        return (lhs, rhs)


def _boundary_degrees(tset: TriangleSet):
    mesh = tset.mesh
    be = tset.boundary_edges
    pairs = mesh.edges[be]
    deg = np.bincount(pairs.ravel(), minlength=mesh.n_nodes)
    return be, deg


def build_boundary_graph(H: TriangleSet) -> BoundaryGraph:
    """Boundary graph of a nonempty set, with degree partition, faces,
    boundary-cycle tuples per edge-component, and touch counts."""
    if not len(H):
        raise VoidModError("boundary graph of an empty set")
    mesh = H.mesh
    be, deg = _boundary_degrees(H)
    verts = np.where(deg > 0)[0]
    degree = {int(v): int(deg[v]) for v in verts}
    v2l = {}
    for v, d in degree.items():
        v2l[d // 2] = v2l.get(d // 2, 0) + 1

    comps = H.components
    comp_of = np.full(mesh.n_triangles, -1, dtype=np.int64)
    for i, c in enumerate(comps):
        comp_of[c] = i
    _, bounded = H.complement_components
    n_bounded = int(sum(bounded))
    n_faces = len(comps) + n_bounded

    # graph components via union-find over edge endpoints
    idx = {int(v): i for i, v in enumerate(verts)}
    from .trisets import _UnionFind
    uf = _UnionFind(len(verts))
    for e in be:
        a, b = mesh.edges[e]
        uf.union(idx[int(a)], idx[int(b)])
    nu = len({uf.find(i) for i in range(len(verts))})

    cycles, d_of_component = _boundary_cycles(H, be, comp_of, len(comps), degree)
    return BoundaryGraph(vertices=verts, edge_ids=be, degree=degree,
                         v2l_counts=v2l, n_faces=n_faces,
                         n_graph_components=nu, n_components=len(comps),
                         n_bounded_complement=n_bounded,
                         cycles=cycles, d_of_component=d_of_component)


def _boundary_cycles(H: TriangleSet, be, comp_of, n_comps, degree):
    """Traverse boundary curves with the member material kept on the left.

    Starting from each unvisited directed boundary edge, the walk rotates
    around the head vertex through member triangles until it exits across
    the next boundary edge of the same material wedge, so curves never
    cross at pinch vertices.
    """
    mesh = H.mesh
    mask = H.mask
    et = mesh.edge_tris
    edges = mesh.edges
    member_of_edge = {}
    for e in be:
        t0, t1 = et[e]
        member_of_edge[int(e)] = int(t0) if mask[t0] else int(t1)
    is_boundary = set(int(e) for e in be)

    edge_lookup = {}
    for e in be:
        a, b = int(edges[e, 0]), int(edges[e, 1])
        edge_lookup[(a, b)] = int(e)
        edge_lookup[(b, a)] = int(e)

    def directed_of(e):
        """Directed version (a -> b) with the member triangle on the left."""
        t = member_of_edge[e]
        tri = mesh.triangles[t]
        a, b = edges[e]
        for k in range(3):
            if tri[k] == a and tri[(k + 1) % 3] == b:
                return (int(a), int(b), t)
        return (int(b), int(a), t)

    def third(t, a, b):
        tri = mesh.triangles[t]
        for v in tri:
            if v != a and v != b:
                return int(v)
        raise VoidModError("degenerate triangle connectivity")

    def next_edge(a, v, t):
        w = third(t, a, v)
        while True:
            e = edge_lookup.get((v, w))
            if e is not None and e in is_boundary:
                return (v, w, member_of_edge[e])
            # hop to the member triangle across (v, w)
            e_all = _find_mesh_edge(mesh, v, w)
            t0, t1 = et[e_all]
            t_next = int(t1) if int(t0) == t else int(t0)
            if t_next < 0 or not mask[t_next]:
                raise VoidModError("boundary walk left the member set")
            t = t_next
            w = third(t, v, w)

    visited = set()
    comp_cycles = [[] for _ in range(n_comps)]
    for e in sorted(is_boundary):
        a0, b0, t0 = directed_of(e)
        if (a0, b0) in visited:
            continue
        cyc = []
        a, b, t = a0, b0, t0
        while True:
            visited.add((a, b))
            cyc.append(b)
            a2, b2, t2 = next_edge(a, b, t)
            a, b, t = a2, b2, t2
            if (a, b) == (a0, b0):
                break
        comp_cycles[comp_of[t0]].append(cyc)

    d_of_component = []
    cycles = []
    for i in range(n_comps):
        tup = []
        for cyc in comp_cycles[i]:
            tup.extend(cyc)
        cycles.append(comp_cycles[i])
        d_of_component.append(sum(1 for v in tup if degree.get(v, 0) >= 4))
    return cycles, d_of_component


def _find_mesh_edge(mesh: Triangulation, a, b):
    key = (min(a, b), max(a, b))
    lookup = getattr(mesh, "_edge_lookup", None)
    if lookup is None:
        lookup = {(int(e[0]), int(e[1])): i for i, e in enumerate(mesh.edges)}
        mesh._edge_lookup = lookup
    e = lookup.get(key)
    if e is None:
        raise VoidModError(f"no mesh edge between nodes {a} and {b}")
    return e


# ---------------------------------------------------------------------------
# modification 1: filling small holes


def fill_holes(A: TriangleSet, vm: VoidModParams) -> TriangleSet:
    """Absorb bounded complement components of area <= eps^2/eta^2."""
    if not len(A):
        return A
    mesh = A.mesh
    comps, bounded = A.complement_components
    budget = vm.hole_threshold(mesh.params.eps)
    fill = []
    for c, b in zip(comps, bounded):
        if b and len(c) and float(mesh.areas[c].sum()) <= budget:
            fill.append(c)
    if not fill:
        return A
    return TriangleSet(mesh, np.union1d(A.ids, np.concatenate(fill)))


# ---------------------------------------------------------------------------
# healing primitives


def _nodes_of(mesh: Triangulation, ids) -> np.ndarray:
    ids = np.asarray(ids, dtype=np.int64)
    if not len(ids):
        return np.empty(0, dtype=np.int64)
    return np.unique(mesh.triangles[ids].ravel())


def _neighborhood(mesh: Triangulation, z_ids) -> np.ndarray:
    """Triangles outside Z whose closure meets the closure of Z."""
    znodes = _nodes_of(mesh, z_ids)
    indptr, tri_ids = mesh.node_tris
    out = set()
    zset = set(int(t) for t in z_ids)
    for v in znodes:
        for t in tri_ids[indptr[v]:indptr[v + 1]]:
            if int(t) not in zset:
                out.add(int(t))
    return np.asarray(sorted(out), dtype=np.int64)


def _piece_healable(mesh: Triangulation, z_ids, vm: VoidModParams) -> bool:
    """Gate: the one-ring neighborhood must stay inside the triangulated
    region and the piece must keep the configured boundary clearance."""
    z_ids = np.asarray(z_ids, dtype=np.int64)
    if mesh.tri_on_mesh_boundary[z_ids].any():
        return False
    nz = _neighborhood(mesh, z_ids)
    if not len(nz):
        return False
    if vm.boundary_margin > 0.0:
        px0, py0, px1, py1 = mesh.domain.omega_prime
        pts = mesh.nodes[_nodes_of(mesh, z_ids)]
        d = np.minimum.reduce([pts[:, 0] - px0, px1 - pts[:, 0],
                               pts[:, 1] - py0, py1 - pts[:, 1]])
        if d.min() < vm.boundary_margin:
            return False
    return True


def _extend_field(mesh: Triangulation, u: DisplacementField, z_ids, data_ids,
                  mode: str) -> DisplacementField:
    """Extend u over the piece Z from the data triangles.

    elastic: minimize the symmetric-gradient energy over Z with the shared
    nodes pinned (minimum-norm solve fixes any leftover rigid freedom).
    mcshane: subtract the skew part of a reference data gradient, extend
    each component with the Lipschitz-preserving inf-formula, add it back.
    """
    z_ids = np.asarray(z_ids, dtype=np.int64)
    data_ids = np.asarray(data_ids, dtype=np.int64)
    znodes = _nodes_of(mesh, z_ids)
    dnodes = _nodes_of(mesh, data_ids)
    free = np.setdiff1d(znodes, dnodes)
    if not len(free):
        return u
    out = u.copy()
    if mode == "mcshane" and len(data_ids):
        bmats, _ = mesh.strain_setup
        ref = int(data_ids[0])
        grads = _tri_gradients(mesh, u.values, np.concatenate([[ref], data_ids]))
        g_ref = grads[0]
        a_skew = 0.5 * (g_ref - g_ref.T)
        w_vals = u.values - (mesh.nodes @ a_skew.T)
        lip = np.zeros(2)
        for k, t in enumerate(data_ids):
            g = grads[k + 1] - a_skew
            lip[0] = max(lip[0], math.hypot(g[0, 0], g[0, 1]))
            lip[1] = max(lip[1], math.hypot(g[1, 0], g[1, 1]))
        dpts = mesh.nodes[dnodes]
        for v in free:
            d = np.hypot(dpts[:, 0] - mesh.nodes[v, 0],
                         dpts[:, 1] - mesh.nodes[v, 1])
            for i in range(2):
                out.values[v, i] = float(np.min(w_vals[dnodes, i] + lip[i] * d))
        out.values[free] += mesh.nodes[free] @ a_skew.T
        return out

    # elastic extension on the local patch
    local = {int(v): i for i, v in enumerate(znodes)}
    n = 2 * len(znodes)
    k = np.zeros((n, n))
    bmats = mesh.b_matrices
    areas = mesh.areas
    for t in z_ids:
        tri = mesh.triangles[t]
        ke = bmats[t].T @ bmats[t] * areas[t]
        dof = np.empty(6, dtype=np.int64)
        for j in range(3):
            dof[2 * j] = 2 * local[int(tri[j])]
            dof[2 * j + 1] = 2 * local[int(tri[j])] + 1
        k[np.ix_(dof, dof)] += ke
    x = np.zeros(n)
    pinned = np.zeros(n, dtype=bool)
    shared = set(int(w) for w in np.intersect1d(znodes, dnodes))
    for v in znodes:
        i = local[int(v)]
        x[2 * i] = u.values[v, 0]
        x[2 * i + 1] = u.values[v, 1]
        if int(v) in shared:
            pinned[2 * i] = pinned[2 * i + 1] = True
    f_idx = np.where(~pinned)[0]
    p_idx = np.where(pinned)[0]
    if len(f_idx):
        kff = k[np.ix_(f_idx, f_idx)]
        rhs = -k[np.ix_(f_idx, p_idx)] @ x[p_idx] if len(p_idx) else np.zeros(len(f_idx))
        sol, *_ = np.linalg.lstsq(kff, rhs, rcond=None)
        x[f_idx] = sol
    for v in free:
        i = local[int(v)]
        out.values[v, 0] = x[2 * i]
        out.values[v, 1] = x[2 * i + 1]
    return out


def _tri_gradients(mesh: Triangulation, values, ids):
    """Full 2x2 gradients of the affine field on the listed triangles."""
    out = np.empty((len(ids), 2, 2))
    for k, t in enumerate(ids):
        tri = mesh.triangles[t]
        p = mesh.nodes[tri]
        det = ((p[1, 0] - p[0, 0]) * (p[2, 1] - p[0, 1])
               - (p[1, 1] - p[0, 1]) * (p[2, 0] - p[0, 0]))
        g = np.array([
            [p[1, 1] - p[2, 1], p[2, 1] - p[0, 1], p[0, 1] - p[1, 1]],
            [p[2, 0] - p[1, 0], p[0, 0] - p[2, 0], p[1, 0] - p[0, 0]],
        ]) / det
        out[k] = values[tri].T @ g.T
    return out


def _frob_strain_energy(mesh: Triangulation, u: DisplacementField, ids,
                        weights=None) -> float:
    ids = np.asarray(ids, dtype=np.int64)
    if not len(ids):
        return 0.0
    s = u.strains()[ids]
    w = mesh.areas[ids] if weights is None else weights[ids]
    return float((w * (s * s).sum(axis=1)).sum())


def heal_component(Z: TriangleSet, u: DisplacementField, Y: TriangleSet,
                   vm: VoidModParams) -> DisplacementField:
    """Extend u over a connected saturated small piece Z with the data
    taken from its neighborhood minus Y; the closures of Y and Z may share
    at most two points."""
    mesh = Z.mesh
    if len(Z.closure_components) != 1:
        raise PreconditionViolated("piece must be connected")
    sat = local_saturation(mesh, Z.ids)
    if len(sat) != len(Z.ids):
        raise PreconditionViolated("piece must be saturated (no holes)")
    budget = vm.hole_threshold(mesh.params.eps)
    if Z.area > budget:
        raise PreconditionViolated(
            f"piece area {Z.area:.3e} exceeds eps^2/eta^2 = {budget:.3e}")
    nz = _neighborhood(mesh, Z.ids)
    y_ids = np.intersect1d(Y.ids, nz) if len(Y) else np.empty(0, dtype=np.int64)
    touch = np.intersect1d(_nodes_of(mesh, y_ids), _nodes_of(mesh, Z.ids))
    if len(touch) > 2:
        raise PreconditionViolated(
            f"Y touches Z at {len(touch)} points (at most two allowed)")
    data = np.setdiff1d(nz, y_ids)
    return _extend_field(mesh, u, Z.ids, data, vm.heal_mode)


def healing_ratio(mesh: Triangulation, u_new: DisplacementField,
                  u_old: DisplacementField, z_ids, data_ids) -> float:
    """||e(u_new)||^2 over Z plus data, relative to ||e(u_old)||^2 on data."""
    num = _frob_strain_energy(mesh, u_new, np.union1d(z_ids, data_ids))
    den = _frob_strain_energy(mesh, u_old, data_ids)
    if den == 0.0:
        return 0.0
    return num / den


# ---------------------------------------------------------------------------
# modification 2: separating vertices


def _sep_piece_candidates(B: TriangleSet):
    """All components of the closure split at one high-degree vertex, plus
    the whole closure components."""
    mesh = B.mesh
    _, deg = _boundary_degrees(B)
    closure = B.closure_components
    pieces = [tuple(int(t) for t in c) for c in closure]
    comp_of = {}
    for i, c in enumerate(closure):
        for t in c:
            comp_of[int(t)] = i
    for v in np.where(deg >= 4)[0]:
        indptr, tri_ids = mesh.node_tris
        incident = [int(t) for t in tri_ids[indptr[v]:indptr[v + 1]] if B.mask[t]]
        if not incident:
            continue
        home = closure[comp_of[incident[0]]]
        sub = np.zeros(mesh.n_triangles, dtype=bool)
        sub[home] = True
        parts = closure_components_minus_vertex(mesh, sub, int(v))
        if len(parts) <= 1:
            continue
        for p in parts:
            pieces.append(tuple(int(t) for t in p))
    # dedupe, keep deterministic order
    seen = set()
    out = []
    for p in sorted(pieces):
        if p not in seen:
            seen.add(p)
            out.append(np.asarray(p, dtype=np.int64))
    return out


def _maximal_small_pieces(B: TriangleSet, pieces, vm: VoidModParams):
    mesh = B.mesh
    budget = vm.hole_threshold(mesh.params.eps)
    small = []
    for p in pieces:
        if float(mesh.areas[p].sum()) > budget:
            continue  # saturation only grows the piece
        sat = local_saturation(mesh, p)
        if float(mesh.areas[sat].sum()) > budget:
            continue
        if not _piece_healable(mesh, sat, vm):
            continue
        small.append((p, sat))
    keep = []
    sets = [frozenset(int(t) for t in p) for p, _ in small]
    for i, (p, sat) in enumerate(small):
        maximal = True
        for j, other in enumerate(sets):
            if j != i and sets[i] < other:
                maximal = False
                break
        if maximal:
            keep.append((p, sat))
    return keep


def _heal_removed(mesh: Triangulation, u: DisplacementField, removed_fill,
                  void_after_mask, vm: VoidModParams, ratios: list,
                  ) -> DisplacementField:
    """Heal each closure component of the removed (saturated) region."""
    if not len(removed_fill):
        return u
    region = TriangleSet(mesh, removed_fill)
    for zc in region.closure_components:
        nz = _neighborhood(mesh, zc)
        y_ids = nz[void_after_mask[nz]]
        data = np.setdiff1d(nz, y_ids)
        before = u
        u = _extend_field(mesh, u, zc, data, vm.heal_mode)
        ratios.append(healing_ratio(mesh, u, before, zc, data))
    return u


def remove_separating_small(B: TriangleSet, u: DisplacementField,
                            vm: VoidModParams, stats: Optional[dict] = None):
    """Remove maximal small pieces hanging at separating vertices (and
    whole small closure components), healing the field over each; pieces
    too close to the boundary of the triangulated region are kept."""
    mesh = B.mesh
    if not len(B):
        return B, u
    pieces = _sep_piece_candidates(B)
    keep = _maximal_small_pieces(B, pieces, vm)
    if not keep:
        if stats is not None:
            stats.setdefault("sep_removed", 0)
        return B, u
    removed = np.unique(np.concatenate([p for p, _ in keep]))
    removed_fill = np.unique(np.concatenate([sat for _, sat in keep]))
    b_sep = B.difference(removed)
    ratios = stats.setdefault("heal_ratios", []) if stats is not None else []
    u_sep = _heal_removed(mesh, u, removed_fill, b_sep.mask, vm, ratios)
    if stats is not None:
        stats["sep_removed"] = stats.get("sep_removed", 0) + len(keep)
    return b_sep, u_sep


# ---------------------------------------------------------------------------
# modification 3: iterated peeling of two-touch small pieces


def _touch_points(mesh: Triangulation, piece_ids, other_mask) -> int:
    pn = _nodes_of(mesh, piece_ids)
    indptr, tri_ids = mesh.node_tris
    count = 0
    for v in pn:
        for t in tri_ids[indptr[v]:indptr[v + 1]]:
            if other_mask[t]:
                count += 1
                break
    return count


def _peel_round(W: TriangleSet, vm: VoidModParams):
    """One simultaneous round: small edge-components touching the rest in
    at most two points, plus small single-vertex-separated pieces."""
    mesh = W.mesh
    budget = vm.hole_threshold(mesh.params.eps)
    removal = []

    comps = W.components
    for c in comps:
        if float(mesh.areas[c].sum()) > budget:
            continue
        sat = local_saturation(mesh, c)
        if float(mesh.areas[sat].sum()) > budget:
            continue
        if not _piece_healable(mesh, sat, vm):
            continue
        rest = W.mask.copy()
        rest[c] = False
        if _touch_points(mesh, c, rest) <= 2:
            removal.append((c, sat))

    for p, sat in _maximal_small_pieces(W, _sep_piece_candidates(W), vm):
        removal.append((p, sat))

    if not removal:
        return None, None, 0
    ids = np.unique(np.concatenate([p for p, _ in removal]))
    fill = np.unique(np.concatenate([s for _, s in removal]))
    return ids, fill, len(removal)


# ---------------------------------------------------------------------------
# triangle healing


def heal_triangles(H: TriangleSet, u: DisplacementField, vm: VoidModParams,
                   stats: Optional[dict] = None):
    """Drop member triangles exposing two or more edges that own a vertex
    exclusive to them (no other member shares it); one simultaneous pass.

    The strain of a dropped triangle is already determined by continuity
    along the two shared edges with its good neighbors, so the field needs
    no modification; the induced amplification is measured and reported.
    Triangles whose exposed-edge neighbors are missing (outer mesh
    boundary) or too close to the enclosing boundary are kept.
    """
    mesh = H.mesh
    if not len(H):
        return H, u
    mask = H.mask
    nb = mesh.tri_neighbors

    indptr, tri_ids = mesh.node_tris
    removal = []
    ratios = stats.setdefault("tri_heal_ratios", []) if stats is not None else []
    strains = None
    for t in H.ids:
        t = int(t)
        nbs = nb[t]
        member_nb = [int(s) for s in nbs if s >= 0 and mask[s]]
        if len(member_nb) > 1:
            continue
        exposed = [int(s) for s in nbs if s >= 0 and not mask[s]]
        if len(exposed) < 2 or (nbs < 0).any():
            continue  # missing neighbors: cannot heal at the mesh rim
        # exclusive vertex: one of t's nodes belongs to no other member
        exclusive = False
        for v in mesh.triangles[t]:
            owners = tri_ids[indptr[v]:indptr[v + 1]]
            if not np.any(mask[owners] & (owners != t)):
                exclusive = True
                break
        if not exclusive:
            continue
        if not _piece_healable(mesh, np.array([t]), vm):
            continue
        removal.append(t)
        if stats is not None:
            if strains is None:
                strains = u.strains()
            num = float(mesh.areas[t] * (strains[t] ** 2).sum())
            den = sum(float(mesh.areas[s] * (strains[s] ** 2).sum())
                      for s in exposed)
            ratios.append(0.0 if den == 0.0 else num / den)

    if not removal:
        return H, u
    out = H.difference(np.asarray(removal, dtype=np.int64))
    if stats is not None:
        stats["healed_triangles"] = stats.get("healed_triangles", 0) + len(removal)
    return out, u


def _unfill_exposed(H: TriangleSet, filled) -> TriangleSet:
    """Remove filled (non-input) triangles that own a boundary edge,
    cascading until none is exposed.

    Removing non-input triangles preserves nesting under set inclusion and
    restores the invariant that hole fills stay interior even when a
    neighboring triangle was healed away."""
    if not len(filled) or not len(H):
        return H
    mesh = H.mesh
    fmask = np.zeros(mesh.n_triangles, dtype=bool)
    fmask[np.asarray(filled, dtype=np.int64)] = True
    out = H
    while True:
        if not len(out):
            return out
        et = mesh.edge_tris
        exposed = []
        for e in out.boundary_edges:
            t0, t1 = et[e]
            member = int(t0) if out.mask[t0] else int(t1)
            if fmask[member]:
                exposed.append(member)
        if not exposed:
            return out
        out = out.difference(np.unique(exposed))


# ---------------------------------------------------------------------------
# full pipeline


@dataclass
class ModResult:
    a_mod: TriangleSet
    u_mod: DisplacementField
    t_mod: TriangleSet
    filled: np.ndarray
    stats: dict = field(default_factory=dict)


def modify_voids(A: TriangleSet, u: DisplacementField,
                 vm: VoidModParams) -> ModResult:
    """Full void-modification pipeline producing A_mod, u_mod, and audit
    statistics (areas, boundary length, component count, healing
    amplification, and the measured constants of the sharp bound)."""
    mesh = A.mesh
    eps = mesh.params.eps
    sin0 = math.sin(mesh.params.theta0)
    stats = {"area_A": A.area, "eta": vm.eta}
    energy_in = _frob_strain_energy(
        mesh, u, np.setdiff1d(np.arange(mesh.n_triangles), A.ids),
        weights=mesh.area_in_omega)
    stats["energy_in"] = energy_in

    if not len(A):
        empty = TriangleSet(mesh)
        stats.update(area_Amod=0.0, perim_Amod=0.0, n_components=0,
                     healed_triangle_count=0, removed_component_count=0,
                     energy_out=energy_in, c_eta=0.0, c_perimeter=0.0,
                     c_components=0.0, max_heal_ratio=0.0, changed_area=0.0,
                     filled_boundary_length=0.0)
        return ModResult(empty, u, empty, np.empty(0, dtype=np.int64), stats)

    b = fill_holes(A, vm)
    filled = np.setdiff1d(b.ids, A.ids)

    work = {}
    b_sep, u_mod = remove_separating_small(b, u, vm, stats=work)

    w = b_sep
    rounds = 0
    while rounds < 1000:
        ids, fill, n_pieces = _peel_round(w, vm)
        if ids is None:
            break
        w_new = w.difference(ids)
        ratios = work.setdefault("heal_ratios", [])
        u_mod = _heal_removed(mesh, u_mod, fill, w_new.mask, vm, ratios)
        work["sep_removed"] = work.get("sep_removed", 0) + n_pieces
        w = w_new
        rounds += 1

    a_mod, u_mod = heal_triangles(w, u_mod, vm, stats=work)
    a_mod = _unfill_exposed(a_mod, filled)

    t_mod = TriangleSet(mesh, np.intersect1d(A.ids, a_mod.ids))
    perim = a_mod.boundary_length
    n_comp = len(a_mod.components)
    heal_ratios = work.get("heal_ratios", []) + work.get("tri_heal_ratios", [])

    # changed region and reference energy inside the inner window
    changed_tris = _changed_triangles(mesh, u, u_mod)
    window = _inner_window(mesh, vm)
    if window is not None:
        wx0, wy0, wx1, wy1 = window
        w_in = clip_areas_rect(mesh.nodes, mesh.triangles, wx0, wy0, wx1, wy1)
        changed_area = float(w_in[changed_tris].sum()) if len(changed_tris) else 0.0
        outside_amod = np.setdiff1d(np.arange(mesh.n_triangles), a_mod.ids)
        energy_out = _frob_strain_energy(mesh, u_mod, outside_amod, weights=w_in)
    else:
        changed_area = 0.0
        energy_out = 0.0

    stats.update(
        area_Amod=a_mod.area,
        perim_Amod=perim,
        n_components=n_comp,
        healed_triangle_count=work.get("healed_triangles", 0),
        removed_component_count=work.get("sep_removed", 0),
        energy_out=energy_out,
        c_eta=a_mod.area / eps,
        c_perimeter=(perim - 2.0 * A.area / (eps * sin0)) / vm.eta,
        c_components=n_comp * eps / vm.eta,
        max_heal_ratio=max(heal_ratios) if heal_ratios else 0.0,
        changed_area=changed_area,
        filled_boundary_length=_filled_boundary_length(mesh, a_mod, filled),
        window=window,
    )
    return ModResult(a_mod, u_mod, t_mod, filled, stats)


def _changed_triangles(mesh: Triangulation, u, u_mod):
    diff = np.any(u.values != u_mod.values, axis=1)
    if not diff.any():
        return np.empty(0, dtype=np.int64)
    changed_nodes = np.where(diff)[0]
    indptr, tri_ids = mesh.node_tris
    out = set()
    for v in changed_nodes:
        out.update(int(t) for t in tri_ids[indptr[v]:indptr[v + 1]])
    return np.asarray(sorted(out), dtype=np.int64)


def _inner_window(mesh: Triangulation, vm: VoidModParams):
    """Rectangle {x : dist(x, boundary of omega_prime) > 2 omega(eps) + eps/eta^3};
    None when empty."""
    px0, py0, px1, py1 = mesh.domain.omega_prime
    m = 2.0 * mesh.params.omega + mesh.params.eps / vm.eta ** 3
    wx0, wy0, wx1, wy1 = px0 + m, py0 + m, px1 - m, py1 - m
    if wx0 >= wx1 or wy0 >= wy1:
        return None
    return (wx0, wy0, wx1, wy1)


def _filled_boundary_length(mesh: Triangulation, a_mod: TriangleSet,
                            filled) -> float:
    """Length of A_mod boundary edges owned by filled (non-input) triangles."""
    if not len(filled) or not len(a_mod):
        return 0.0
    fmask = np.zeros(mesh.n_triangles, dtype=bool)
    fmask[np.asarray(filled, dtype=np.int64)] = True
    et = mesh.edge_tris
    total = 0.0
    for e in a_mod.boundary_edges:
        t0, t1 = et[e]
        member = int(t0) if a_mod.mask[t0] else int(t1)
        if fmask[member]:
            total += float(mesh.edge_lengths[e])
    return total
