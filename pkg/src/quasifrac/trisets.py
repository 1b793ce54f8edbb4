"""Triangle id-sets over one triangulation, with the connectivity views the
void machinery relies on.

Two notions of connectivity are first-class and deliberately distinct:
edge-connectivity (components of the open set, `components`) and
vertex-connectivity (components of the closure, `closure_components`).
Complement components are computed in the whole plane: everything beyond
the triangulated region counts as one unbounded component.
"""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .mesh import Triangulation

OUTSIDE = -1  # marker for the unbounded complement region


class _UnionFind:
    __slots__ = ("parent", "rank")

    def __init__(self, n):
        self.parent = list(range(n))
        self.rank = [0] * n

    def find(self, x):
        p = self.parent
        while p[x] != x:
            p[x] = p[p[x]]
            x = p[x]
        return x

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return
        if self.rank[ra] < self.rank[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        if self.rank[ra] == self.rank[rb]:
            self.rank[ra] += 1


@dataclass
class TriangleSet:
    """Sorted set of triangle ids of one mesh plus derived geometric views."""

    mesh: Triangulation
    ids: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))

    def __post_init__(self):
        ids = np.unique(np.asarray(self.ids, dtype=np.int64))
        if len(ids) and (ids[0] < 0 or ids[-1] >= self.mesh.n_triangles):
            raise ValueError("triangle id out of range")
        self.ids = ids

    # -- set algebra --------------------------------------------------------

    def __len__(self):
        return len(self.ids)

    def __contains__(self, t):
        return bool(np.isin(t, self.ids))

    def union(self, other) -> "TriangleSet":
        oids = other.ids if isinstance(other, TriangleSet) else np.asarray(other)
        return TriangleSet(self.mesh, np.union1d(self.ids, oids))

    def difference(self, other) -> "TriangleSet":
        oids = other.ids if isinstance(other, TriangleSet) else np.asarray(other)
        return TriangleSet(self.mesh, np.setdiff1d(self.ids, oids))

    def intersection(self, other) -> "TriangleSet":
        oids = other.ids if isinstance(other, TriangleSet) else np.asarray(other)
        return TriangleSet(self.mesh, np.intersect1d(self.ids, oids))

    def issubset(self, other) -> bool:
        oids = other.ids if isinstance(other, TriangleSet) else np.asarray(other)
        return bool(np.isin(self.ids, oids).all())

    @cached_property
    def mask(self):
        m = np.zeros(self.mesh.n_triangles, dtype=bool)
        m[self.ids] = True
        m.setflags(write=False)
        return m

    # -- measures ------------------------------------------------------------

    @cached_property
    def area(self) -> float:
        """Full area of the member triangles."""
        return float(self.mesh.areas[self.ids].sum())

    @cached_property
    def area_in_omega_prime(self) -> float:
        return float(self.mesh.area_in_omega_prime[self.ids].sum())

    @cached_property
    def boundary_edges(self):
        """Edges with exactly one incident member triangle."""
        et = self.mesh.edge_tris
        in0 = self.mask[et[:, 0]]
        in1 = (et[:, 1] >= 0) & self.mask[np.maximum(et[:, 1], 0)]
        return np.where(in0 ^ in1)[0]

    @cached_property
    def boundary_length(self) -> float:
        return float(self.mesh.edge_lengths[self.boundary_edges].sum())

    @cached_property
    def boundary_nodes(self):
        e = self.mesh.edges[self.boundary_edges]
        return np.unique(e.ravel())

    def boundary_length_in_rect(self, rect) -> float:
        """Boundary length clipped to an axis-aligned rectangle."""
        from .geometry import segment_clip_rect_length
        total = 0.0
        for e in self.boundary_edges:
            a, b = self.mesh.edges[e]
            total += segment_clip_rect_length(self.mesh.nodes[a],
                                              self.mesh.nodes[b], rect)
        return total

    # -- connectivity ---------------------------------------------------------

    @cached_property
    def components(self):
        """Edge-connected components: list of id arrays, sorted by min id."""
        return _components_from_mask(self.mesh, self.mask, vertex=False)

    @cached_property
    def closure_components(self):
        """Vertex-connected components of the closure."""
        return _components_from_mask(self.mesh, self.mask, vertex=True)

    @cached_property
    def complement_components(self):
        """Connected components of the plane minus the closure.

        Returns (comps, bounded) where comps is a list of id arrays over
        non-member triangles.  The unbounded component (reached through the
        outside of the triangulated region) carries bounded=False; an empty
        id array stands for the pure outside when no non-member triangle
        touches it.
        """
        return complement_components(self.mesh, self.mask)

    def saturation_ids(self) -> np.ndarray:
        """Member ids plus all triangles in bounded complement components."""
        comps, bounded = self.complement_components
        extra = [c for c, b in zip(comps, bounded) if b]
        if not extra:
            return self.ids
        return np.union1d(self.ids, np.concatenate(extra))

    @cached_property
    def sat_area(self) -> float:
        """Area of the saturation (holes filled)."""
        return float(self.mesh.areas[self.saturation_ids()].sum())

    def is_saturated(self) -> bool:
        comps, bounded = self.complement_components
        return not any(bounded)


def _components_from_mask(mesh: Triangulation, mask, vertex: bool):
    ids = np.where(mask)[0]
    if not len(ids):
        return []
    pos = {int(t): i for i, t in enumerate(ids)}
    uf = _UnionFind(len(ids))
    et = mesh.edge_tris
    both = (et[:, 0] >= 0) & (et[:, 1] >= 0)
    pairs = et[both]
    share = mask[pairs[:, 0]] & mask[pairs[:, 1]]
    for a, b in pairs[share]:
        uf.union(pos[int(a)], pos[int(b)])
    if vertex:
        indptr, tri_ids = mesh.node_tris
        for v in np.unique(mesh.triangles[ids].ravel()):
            incident = tri_ids[indptr[v]:indptr[v + 1]]
            members = incident[mask[incident]]
            for k in range(1, len(members)):
                uf.union(pos[int(members[0])], pos[int(members[k])])
    groups = {}
    for i, t in enumerate(ids):
        groups.setdefault(uf.find(i), []).append(int(t))
    comps = [np.asarray(sorted(g), dtype=np.int64) for g in groups.values()]
    comps.sort(key=lambda c: int(c[0]))
    return comps


def closure_components_minus_vertex(mesh: Triangulation, mask, v: int):
    """Vertex-connected components of the closure with the point v removed.

    Triangles sharing an edge stay connected even if the edge contains v
    (an edge minus one point is still connected); the vertex fan at v no
    longer glues."""
    ids = np.where(mask)[0]
    if not len(ids):
        return []
    pos = {int(t): i for i, t in enumerate(ids)}
    uf = _UnionFind(len(ids))
    et = mesh.edge_tris
    both = (et[:, 0] >= 0) & (et[:, 1] >= 0)
    pairs = et[both]
    share = mask[pairs[:, 0]] & mask[pairs[:, 1]]
    for a, b in pairs[share]:
        uf.union(pos[int(a)], pos[int(b)])
    indptr, tri_ids = mesh.node_tris
    for w in np.unique(mesh.triangles[ids].ravel()):
        if w == v:
            continue
        incident = tri_ids[indptr[w]:indptr[w + 1]]
        members = incident[mask[incident]]
        for k in range(1, len(members)):
            uf.union(pos[int(members[0])], pos[int(members[k])])
    groups = {}
    for i, t in enumerate(ids):
        groups.setdefault(uf.find(i), []).append(int(t))
    comps = [np.asarray(sorted(g), dtype=np.int64) for g in groups.values()]
    comps.sort(key=lambda c: int(c[0]))
    return comps


def complement_components(mesh: Triangulation, mask):
    """Components of the open complement of the closed member set.

    Non-member triangles connect across shared edges; edges on the outer
    boundary of the triangulated region connect to the unbounded outside.
    Returns (list of id arrays, list of bounded flags), sorted by min id
    with a possible trailing empty unbounded entry.
    """
    comp_ids = np.where(~mask)[0]
    n = len(comp_ids)
    pos = {int(t): i for i, t in enumerate(comp_ids)}
    uf = _UnionFind(n + 1)  # extra node for OUTSIDE
    outside = n
    et = mesh.edge_tris
    both = (et[:, 0] >= 0) & (et[:, 1] >= 0)
    pairs = et[both]
    share = (~mask[pairs[:, 0]]) & (~mask[pairs[:, 1]])
    for a, b in pairs[share]:
        uf.union(pos[int(a)], pos[int(b)])
    for e in mesh.mesh_boundary_edges:
        t = et[e, 0]
        if not mask[t]:
            uf.union(pos[int(t)], outside)
    groups = {}
    for i, t in enumerate(comp_ids):
        groups.setdefault(uf.find(i), []).append(int(t))
    root_out = uf.find(outside)
    comps = []
    bounded = []
    for root, g in groups.items():
        comps.append(np.asarray(sorted(g), dtype=np.int64))
        bounded.append(root != root_out)
    order = np.argsort([int(c[0]) for c in comps]) if comps else []
    comps = [comps[i] for i in order]
    bounded = [bounded[i] for i in order]
    if root_out not in groups:
        comps.append(np.empty(0, dtype=np.int64))
        bounded.append(False)
    return comps, bounded


def saturation_of(mesh: Triangulation, ids) -> np.ndarray:
    """Saturation (holes filled) of an arbitrary id set."""
    return TriangleSet(mesh, ids).saturation_ids()


def local_saturation(mesh: Triangulation, ids, member_mask=None) -> np.ndarray:
    """Saturation of a (typically small) id set by bounded local flooding.

    Holes of a set lie inside its bounding box, so a complement flood that
    escapes the inflated box or reaches the outer mesh boundary cannot be a
    hole.  Cost scales with the saturated region, not the mesh.
    """
    ids = np.asarray(sorted(ids), dtype=np.int64)
    if not len(ids):
        return ids
    if member_mask is None:
        member_mask = np.zeros(mesh.n_triangles, dtype=bool)
        member_mask[ids] = True
    pts = mesh.nodes[np.unique(mesh.triangles[ids].ravel())]
    pad = mesh.params.grid_spacing
    bx0, by0 = pts.min(axis=0) - pad
    bx1, by1 = pts.max(axis=0) + pad
    nb = mesh.tri_neighbors
    on_bdy = mesh.tri_on_mesh_boundary
    nodes = mesh.nodes
    tris = mesh.triangles

    def in_box(t):
        p = nodes[tris[t]]
        return (p[:, 0].min() >= bx0 and p[:, 0].max() <= bx1
                and p[:, 1].min() >= by0 and p[:, 1].max() <= by1)

    visited = set()
    fill = []
    for seed in ids:
        for t0 in nb[seed]:
            t0 = int(t0)
            if t0 < 0 or member_mask[t0] or t0 in visited:
                continue
            comp = []
            stack = [t0]
            comp_set = {t0}
            bounded = True
            while stack:
                t = stack.pop()
                comp.append(t)
                if on_bdy[t]:
                    bounded = False
                if not in_box(t):
                    bounded = False
                    continue  # out-of-box triangles are not expanded
                for s in nb[t]:
                    s = int(s)
                    if s < 0:
                        bounded = False
                        continue
                    if member_mask[s] or s in comp_set:
                        continue
                    comp_set.add(s)
                    stack.append(s)
            visited.update(comp)
            if bounded:
                fill.extend(comp)
    if not fill:
        return ids
    return np.union1d(ids, np.asarray(fill, dtype=np.int64))
