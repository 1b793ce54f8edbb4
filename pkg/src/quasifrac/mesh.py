"""Admissible triangulations: background grid, validation, interpolation,
and crack-constrained adaptation.

A triangulation is admissible when triangles meet only along full shared
edges or vertices, every interior angle is at least theta0, every edge
length lies in [eps, omega_factor*eps], and the union covers the body
rectangle.  All meshes produced here share the connectivity of the regular
half-square background grid; adaptation moves nodes without retriangulating,
which keeps crack-history triangles intact across steps.
"""

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence

import numpy as np

from . import geometry
from ._kernels import clip_areas_rect, strain_b_matrices, strains_from_values


class MeshError(Exception):
    pass


class InadmissibleParams(MeshError):
    pass


class AdaptationFailed(MeshError):
    pass


@dataclass(frozen=True)
class MeshParams:
    """Mesh-family parameters: minimal angle, minimal edge length eps,
    maximal edge length omega_factor*eps, and the background-distance
    multiplier used by crack classification."""

    theta0: float
    eps: float
    omega_factor: float = 1.0e6
    bg_dist_factor: float = 1.0e6

    def __post_init__(self):
        if not (0.0 < self.theta0 <= math.pi / 3.0):
            raise InadmissibleParams(f"theta0 must be in (0, pi/3], got {self.theta0}")
        if self.eps <= 0.0:
            raise InadmissibleParams(f"eps must be positive, got {self.eps}")
        if self.omega_factor < 6.0:
            raise InadmissibleParams(
                f"omega_factor must be >= 6, got {self.omega_factor}")

    @property
    def omega(self) -> float:
        return self.omega_factor * self.eps

    @property
    def grid_spacing(self) -> float:
        """Background cell size: 2 * eps * cos(theta0)."""
        return 2.0 * self.eps * math.cos(self.theta0)

    @property
    def point_tol(self) -> float:
        return 1.0e-9 * self.eps


@dataclass(frozen=True)
class Domain:
    """Body rectangle omega inside the enclosing rectangle omega_prime.

    The Dirichlet collar is omega_prime minus the closure of omega; an
    optional convex polygonal notch is cut out of omega.
    """

    omega: tuple
    omega_prime: tuple
    notch: Optional[tuple] = None

    def __post_init__(self):
        ox0, oy0, ox1, oy1 = self.omega
        px0, py0, px1, py1 = self.omega_prime
        if not (ox0 < ox1 and oy0 < oy1):
            raise ValueError(f"degenerate omega {self.omega}")
        if not (px0 <= ox0 and py0 <= oy0 and px1 >= ox1 and py1 >= oy1):
            raise ValueError("omega must be contained in omega_prime")
        if self.collar_area <= 0.0:
            raise ValueError("omega_prime \\ omega must have positive area")

    @property
    def omega_area(self) -> float:
        x0, y0, x1, y1 = self.omega
        a = (x1 - x0) * (y1 - y0)
        if self.notch:
            a -= geometry.poly_area(self.notch)
        return a

    @property
    def collar_area(self) -> float:
        px0, py0, px1, py1 = self.omega_prime
        x0, y0, x1, y1 = self.omega
        return (px1 - px0) * (py1 - py0) - (x1 - x0) * (y1 - y0)

    def to_dict(self):
        d = {"omega": list(self.omega), "omega_prime": list(self.omega_prime)}
        if self.notch:
            d["notch"] = [list(p) for p in self.notch]
        return d

    @staticmethod
    def from_dict(d):
        notch = tuple(tuple(p) for p in d["notch"]) if d.get("notch") else None
        return Domain(tuple(d["omega"]), tuple(d["omega_prime"]), notch)


@dataclass
class ValidationReport:
    """Deterministic list of admissibility violations; empty means admissible."""

    violations: list = field(default_factory=list)

    def add(self, kind: str, ids, detail: str = ""):
        self.violations.append((kind, tuple(int(i) for i in ids), detail))

    def finalize(self):
        self.violations.sort(key=lambda v: (v[0], v[1]))
        return self

    @property
    def ok(self) -> bool:
        return not self.violations

    def kinds(self):
        return sorted({v[0] for v in self.violations})

    def __str__(self):
        if self.ok:
            return "admissible"
        lines = [f"{k} {ids} {d}".rstrip() for k, ids, d in self.violations]
        return "\n".join(lines)


def _coord_key(x: float, y: float, tol: float):
    return (round(x / tol), round(y / tol))


class Triangulation:
    """Immutable conforming triangle mesh of the enclosing rectangle.

    Nodes are (n,2) float64, triangles (m,3) int32 in counterclockwise
    order.  Derived tables (edges, adjacency, clipped areas, strain
    matrices) are built lazily and cached; instances are safe to share.
    """

    def __init__(self, nodes, triangles, domain: Domain, params: MeshParams,
                 grid_shape=None):
        nodes = np.ascontiguousarray(np.asarray(nodes, dtype=np.float64))
        triangles = np.ascontiguousarray(np.asarray(triangles, dtype=np.int64))
        if triangles.ndim != 2 or triangles.shape[1] != 3:
            raise MeshError("triangles must be an (m,3) index array")
        signed = geometry.tri_signed_areas(nodes, triangles)
        flip = signed < 0.0
        if flip.any():
            triangles = triangles.copy()
            triangles[flip] = triangles[flip][:, ::-1]
        self.nodes = nodes
        self.triangles = triangles
        self.domain = domain
        self.params = params
        self.grid_shape = grid_shape  # (nx, ny, origin_x, origin_y) for grid family
        self.nodes.setflags(write=False)
        self.triangles.setflags(write=False)

    # -- basic sizes ------------------------------------------------------

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    # -- cached geometry ---------------------------------------------------

    @cached_property
    def areas(self):
        return np.abs(geometry.tri_signed_areas(self.nodes, self.triangles))

    @cached_property
    def edge_table(self):
        """(edges (e,2) sorted pairs, tri_edges (m,3), edge_tris (e,2), -1 pad)."""
        m = self.n_triangles
        raw = np.stack([
            self.triangles[:, [0, 1]],
            self.triangles[:, [1, 2]],
            self.triangles[:, [2, 0]],
        ], axis=1).reshape(-1, 2)
        raw = np.sort(raw, axis=1)
        edges, inv = np.unique(raw, axis=0, return_inverse=True)
        tri_edges = inv.reshape(m, 3)
        edge_tris = np.full((len(edges), 2), -1, dtype=np.int64)
        for t in range(m):
            for k in range(3):
                e = tri_edges[t, k]
                if edge_tris[e, 0] < 0:
                    edge_tris[e, 0] = t
                elif edge_tris[e, 1] < 0:
                    edge_tris[e, 1] = t
                else:
                    raise MeshError(f"edge {e} shared by more than two triangles")
        return edges, tri_edges, edge_tris

    @property
    def edges(self):
        return self.edge_table[0]

    @property
    def tri_edges(self):
        return self.edge_table[1]

    @property
    def edge_tris(self):
        return self.edge_table[2]

    @cached_property
    def edge_lengths(self):
        e = self.edges
        d = self.nodes[e[:, 0]] - self.nodes[e[:, 1]]
        return np.hypot(d[:, 0], d[:, 1])

    @cached_property
    def mesh_boundary_edges(self):
        """Edges on the outer boundary of the triangulated region."""
        return np.where(self.edge_tris[:, 1] < 0)[0]

    @cached_property
    def tri_on_mesh_boundary(self):
        """Triangles owning at least one outer-boundary edge."""
        out = np.zeros(self.n_triangles, dtype=bool)
        out[self.edge_tris[self.mesh_boundary_edges, 0]] = True
        return out

    @cached_property
    def tri_neighbors(self):
        """(m,3) edge-neighbor ids, -1 where the edge is on the outer boundary."""
        et = self.edge_tris
        te = self.tri_edges
        n0 = et[te, 0]
        n1 = et[te, 1]
        own = np.arange(self.n_triangles)[:, None]
        nb = np.where(n0 == own, n1, n0)
        return nb

    @cached_property
    def node_tris(self):
        """CSR node-to-triangle incidence: (indptr, tri_ids)."""
        flat = self.triangles.ravel()
        order = np.argsort(flat, kind="stable")
        tri_ids = order // 3
        counts = np.bincount(flat, minlength=self.n_nodes)
        indptr = np.concatenate([[0], np.cumsum(counts)])
        return indptr.astype(np.int64), tri_ids.astype(np.int64)

    def tris_of_node(self, v: int):
        indptr, tri_ids = self.node_tris
        return tri_ids[indptr[v]:indptr[v + 1]]

    @cached_property
    def strain_setup(self):
        return strain_b_matrices(self.nodes, self.triangles)

    @property
    def b_matrices(self):
        return self.strain_setup[0]

    @cached_property
    def area_in_omega(self):
        """|T `intersect` omega| per triangle (notch removed)."""
        x0, y0, x1, y1 = self.domain.omega
        a = clip_areas_rect(self.nodes, self.triangles, x0, y0, x1, y1)
        if self.domain.notch:
            a = a - geometry.clip_areas_polygon(self.nodes, self.triangles,
                                                self.domain.notch)
            a = np.maximum(a, 0.0)
        return a

    @cached_property
    def area_in_omega_prime(self):
        x0, y0, x1, y1 = self.domain.omega_prime
        return clip_areas_rect(self.nodes, self.triangles, x0, y0, x1, y1)

    @cached_property
    def collar_mask(self):
        """Triangles whose closure misses the closed body rectangle."""
        rect = self.domain.omega
        out = np.zeros(self.n_triangles, dtype=bool)
        for i, t in enumerate(self.triangles):
            out[i] = geometry.tri_rect_distance(self.nodes[t], rect) > 0.0
        return out

    @cached_property
    def is_background(self):
        """Triangles coinciding with cells of the regular background grid."""
        if self.grid_shape is None:
            return np.zeros(self.n_triangles, dtype=bool)
        nx, ny, ox, oy = self.grid_shape
        h = self.params.grid_spacing
        tol = self.params.point_tol
        out = np.zeros(self.n_triangles, dtype=bool)
        rel = (self.nodes - np.array([ox, oy])) / h
        ij = np.round(rel)
        on_lattice = np.max(np.abs(rel - ij), axis=1) * h <= tol
        for t in range(self.n_triangles):
            tri = self.triangles[t]
            if not on_lattice[tri].all():
                continue
            pts = {(int(ij[v, 0]), int(ij[v, 1])) for v in tri}
            if len(pts) != 3:
                continue
            i0 = min(p[0] for p in pts)
            j0 = min(p[1] for p in pts)
            loc = {(p[0] - i0, p[1] - j0) for p in pts}
            if loc == {(0, 0), (1, 0), (1, 1)} or loc == {(0, 0), (1, 1), (0, 1)}:
                out[t] = True
        return out

    @cached_property
    def tri_keys(self):
        """Coordinate identity keys, stable across meshes of the family."""
        tol = self.params.point_tol
        keys = []
        for t in range(self.n_triangles):
            k = sorted(_coord_key(self.nodes[v, 0], self.nodes[v, 1], tol)
                       for v in self.triangles[t])
            keys.append(tuple(k))
        return keys

    @cached_property
    def key_to_tri(self):
        return {k: i for i, k in enumerate(self.tri_keys)}

    @cached_property
    def _locator_grid(self):
        h = self.params.grid_spacing
        x0 = self.nodes[:, 0].min()
        y0 = self.nodes[:, 1].min()
        cells = {}
        for t in range(self.n_triangles):
            pts = self.nodes[self.triangles[t]]
            ci0 = int((pts[:, 0].min() - x0) // h)
            ci1 = int((pts[:, 0].max() - x0) // h)
            cj0 = int((pts[:, 1].min() - y0) // h)
            cj1 = int((pts[:, 1].max() - y0) // h)
            for ci in range(ci0, ci1 + 1):
                for cj in range(cj0, cj1 + 1):
                    cells.setdefault((ci, cj), []).append(t)
        return x0, y0, h, cells

    def find_containing(self, p) -> int:
        """Triangle id containing point p, or -1."""
        x0, y0, h, cells = self._locator_grid
        ci = int((p[0] - x0) // h)
        cj = int((p[1] - y0) // h)
        for dci in (0, -1, 1):
            for dcj in (0, -1, 1):
                for t in cells.get((ci + dci, cj + dcj), ()):
                    if geometry.point_in_tri(p[0], p[1], self.nodes[self.triangles[t]]):
                        return t
        return -1

    # -- serialization -----------------------------------------------------

    def to_dict(self):
        d = {
            "nodes": [[float(x), float(y)] for x, y in self.nodes],
            "triangles": [[int(a), int(b), int(c)] for a, b, c in self.triangles],
            "params": {
                "theta0": self.params.theta0,
                "eps": self.params.eps,
                "omega_factor": self.params.omega_factor,
            },
            "domain": self.domain.to_dict(),
        }
        d["params"]["bg_dist_factor"] = self.params.bg_dist_factor
        if self.grid_shape is not None:
            d["grid_shape"] = list(self.grid_shape)
        return d

    def save(self, path):
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f)

    @staticmethod
    def from_dict(d, domain: Optional[Domain] = None) -> "Triangulation":
        p = d["params"]
        params = MeshParams(theta0=float(p["theta0"]), eps=float(p["eps"]),
                            omega_factor=float(p.get("omega_factor", 1e6)),
                            bg_dist_factor=float(p.get("bg_dist_factor", 1e6)))
        nodes = np.asarray(d["nodes"], dtype=float)
        if domain is None:
            if "domain" in d:
                domain = Domain.from_dict(d["domain"])
            else:
                x0, y0 = nodes.min(axis=0)
                x1, y1 = nodes.max(axis=0)
                pad = params.grid_spacing
                domain = Domain((x0 + pad, y0 + pad, x1 - pad, y1 - pad),
                                (x0, y0, x1, y1))
        grid_shape = tuple(d["grid_shape"]) if "grid_shape" in d else None
        return Triangulation(nodes, np.asarray(d["triangles"]), domain, params,
                             grid_shape=grid_shape)

    @staticmethod
    def load(path) -> "Triangulation":
        with open(path, "r", encoding="utf-8") as f:
            return Triangulation.from_dict(json.load(f))


@dataclass
class DisplacementField:
    """Continuous piecewise-affine field given by one value per mesh node."""

    mesh: Triangulation
    values: np.ndarray

    def __post_init__(self):
        self.values = np.ascontiguousarray(np.asarray(self.values, dtype=np.float64))
        if self.values.shape != (self.mesh.n_nodes, 2):
            raise MeshError(
                f"field shape {self.values.shape} does not match node count "
                f"{self.mesh.n_nodes}")

    def copy(self) -> "DisplacementField":
        return DisplacementField(self.mesh, self.values.copy())

    def strains(self):
        """Mandel strain [e11, e22, sqrt(2) e12] per triangle."""
        bmats, _ = self.mesh.strain_setup
        return strains_from_values(bmats, self.mesh.triangles, self.values)

    def evaluate(self, p):
        t = self.mesh.find_containing(p)
        if t < 0:
            raise MeshError(f"point {p} outside mesh")
        tri = self.mesh.triangles[t]
        pts = self.mesh.nodes[tri]
        det = ((pts[1, 0] - pts[0, 0]) * (pts[2, 1] - pts[0, 1])
               - (pts[1, 1] - pts[0, 1]) * (pts[2, 0] - pts[0, 0]))
        l1 = ((p[0] - pts[0, 0]) * (pts[2, 1] - pts[0, 1])
              - (p[1] - pts[0, 1]) * (pts[2, 0] - pts[0, 0])) / det
        l2 = ((pts[1, 0] - pts[0, 0]) * (p[1] - pts[0, 1])
              - (pts[1, 1] - pts[0, 1]) * (p[0] - pts[0, 0])) / det
        l0 = 1.0 - l1 - l2
        return (l0 * self.values[tri[0]] + l1 * self.values[tri[1]]
                + l2 * self.values[tri[2]])


# ---------------------------------------------------------------------------
# operations


def _grid_counts(domain: Domain, params: MeshParams):
    px0, py0, px1, py1 = domain.omega_prime
    h = params.grid_spacing
    w = px1 - px0
    ht = py1 - py0
    nx = int(math.ceil(w / h - 1e-12))
    ny = int(math.ceil(ht / h - 1e-12))
    return max(nx, 1), max(ny, 1), px0, py0


def build_background_mesh(domain: Domain, params: MeshParams) -> Triangulation:
    """Regular half-square mesh on the grid of size 2*eps*cos(theta0).

    Nodes sit on the grid lattice anchored at the lower-left corner of
    omega_prime, extended by full cells so the union covers omega_prime.
    Each cell is split along its lower-left to upper-right diagonal; the
    resulting 45-45-90 triangles are admissible only for theta0 <= pi/4.
    """
    if params.theta0 > math.pi / 4.0 + 1e-15:
        raise InadmissibleParams(
            "background half-squares have 45 degree angles; need theta0 <= pi/4")
    h = params.grid_spacing
    if h < params.eps - 1e-12 * params.eps:
        raise InadmissibleParams("grid spacing below minimal edge length")
    if h * math.sqrt(2.0) > params.omega + 1e-12 * params.eps:
        raise InadmissibleParams("cell diagonal exceeds maximal edge length")
    nx, ny, ox, oy = _grid_counts(domain, params)
    xs = ox + h * np.arange(nx + 1)
    ys = oy + h * np.arange(ny + 1)
    xx, yy = np.meshgrid(xs, ys)
    nodes = np.column_stack([xx.ravel(), yy.ravel()])

    def nid(i, j):
        return j * (nx + 1) + i

    tris = np.empty((2 * nx * ny, 3), dtype=np.int64)
    k = 0
    for j in range(ny):
        for i in range(nx):
            n00 = nid(i, j)
            n10 = nid(i + 1, j)
            n01 = nid(i, j + 1)
            n11 = nid(i + 1, j + 1)
            tris[k] = (n00, n10, n11)   # lower half
            tris[k + 1] = (n00, n11, n01)  # upper half
            k += 2
    return Triangulation(nodes, tris, domain, params, grid_shape=(nx, ny, ox, oy))


def check_admissible(mesh: Triangulation) -> ValidationReport:
    """Report every violated admissibility constraint; empty report = admissible."""
    rep = ValidationReport()
    params = mesh.params
    rel = 1.0 + 1e-12

    areas = mesh.areas
    degenerate = np.where(areas <= 1e-14 * params.eps ** 2)[0]
    for t in degenerate:
        rep.add("degenerate", (t,), f"area={areas[t]:.3e}")

    lengths = mesh.edge_lengths
    short = np.where(lengths < params.eps / rel)[0]
    for e in short:
        rep.add("edge_short", (e,), f"len={lengths[e]:.6e}")
    long_ = np.where(lengths > params.omega * rel)[0]
    for e in long_:
        rep.add("edge_long", (e,), f"len={lengths[e]:.6e}")

    # interior angles
    p0 = mesh.nodes[mesh.triangles[:, 0]]
    p1 = mesh.nodes[mesh.triangles[:, 1]]
    p2 = mesh.nodes[mesh.triangles[:, 2]]
    min_ang = np.full(mesh.n_triangles, np.inf)
    for a, b, c in ((p0, p1, p2), (p1, p2, p0), (p2, p0, p1)):
        u = b - a
        v = c - a
        nu = np.hypot(u[:, 0], u[:, 1])
        nv = np.hypot(v[:, 0], v[:, 1])
        denom = np.where(nu * nv == 0.0, 1.0, nu * nv)
        cosang = np.clip((u * v).sum(axis=1) / denom, -1.0, 1.0)
        min_ang = np.minimum(min_ang, np.arccos(cosang))
    bad_ang = np.where(min_ang < params.theta0 - 1e-12)[0]
    for t in bad_ang:
        if t in degenerate:
            continue
        rep.add("angle", (t,), f"min_angle={min_ang[t]:.6f}")

    # triangle inequality |T| >= eps sin(theta0)/2 * max edge
    max_edge = lengths[mesh.tri_edges].max(axis=1)
    bound = 0.5 * params.eps * math.sin(params.theta0) * max_edge
    bad_ti = np.where(areas < bound * (1.0 - 1e-12))[0]
    for t in bad_ti:
        if t in degenerate or t in bad_ang:
            continue
        rep.add("area_edge_bound", (t,), f"|T|={areas[t]:.3e} bound={bound[t]:.3e}")

    _check_overlaps(mesh, rep)

    cov = float(mesh.area_in_omega.sum())
    target = mesh.domain.omega_area
    tol = max(1e-10 * params.eps, 1e-12 * abs(target))
    if cov < target - tol:
        rep.add("coverage", (), f"covered={cov!r} omega={target!r}")

    return rep.finalize()


def _check_overlaps(mesh: Triangulation, rep: ValidationReport):
    """Detect pairwise improper intersections with a bbox hash."""
    nodes = mesh.nodes
    tris = mesh.triangles
    tol = mesh.params.point_tol
    h = mesh.params.grid_spacing
    x0 = nodes[:, 0].min()
    y0 = nodes[:, 1].min()
    cells = {}
    for t in range(len(tris)):
        pts = nodes[tris[t]]
        ci0 = int((pts[:, 0].min() - x0) // h)
        ci1 = int((pts[:, 0].max() - x0) // h)
        cj0 = int((pts[:, 1].min() - y0) // h)
        cj1 = int((pts[:, 1].max() - y0) // h)
        for ci in range(ci0, ci1 + 1):
            for cj in range(cj0, cj1 + 1):
                cells.setdefault((ci, cj), []).append(t)
    seen = set()
    area_tol = tol * mesh.params.eps  # tolerance on intersection area
    for lst in cells.values():
        for ii in range(len(lst)):
            for jj in range(ii + 1, len(lst)):
                a, b = lst[ii], lst[jj]
                if (a, b) in seen:
                    continue
                seen.add((a, b))
                pa = nodes[tris[a]]
                pb = nodes[tris[b]]
                inter = geometry.clip_poly_convex(pa, pb)
                if geometry.poly_area(inter) > area_tol:
                    rep.add("overlap", (a, b), "positive intersection area")
                    continue
                if _tjunction(pa, pb, tol) or _tjunction(pb, pa, tol):
                    rep.add("overlap", (a, b), "partial edge contact")


def _tjunction(pa, pb, tol) -> bool:
    """True if a vertex of pa lies strictly inside an edge of pb."""
    for p in pa:
        for k in range(3):
            a = pb[k]
            b = pb[(k + 1) % 3]
            if geometry.point_seg_dist(p[0], p[1], a[0], a[1], b[0], b[1]) < tol:
                da = math.hypot(p[0] - a[0], p[1] - a[1])
                db = math.hypot(p[0] - b[0], p[1] - b[1])
                if da > tol and db > tol:
                    return True
    return False


def interpolate(mesh: Triangulation, g, t: float) -> DisplacementField:
    """Nodal interpolation of the boundary program g(t, .)."""
    vals = g.eval(t, mesh.nodes)
    return DisplacementField(mesh, vals)


@dataclass(frozen=True)
class StrainHint:
    """A straight high-strain band: point, unit direction, half-width, half-length."""

    point: tuple
    direction: tuple
    width: float
    length: float = math.inf

    def unit(self):
        d = np.asarray(self.direction, dtype=float)
        n = np.hypot(d[0], d[1])
        return d / n if n > 0 else np.array([1.0, 0.0])


def adapt_mesh(prev: Triangulation, locked, hint: Optional[StrainHint] = None,
               ) -> Triangulation:
    """Background-based mesh containing every locked triangle verbatim.

    Without a hint this merges the background grid with the node positions
    carried by locked triangles (all meshes of the family share the grid
    connectivity, so the merge is a node-coordinate carry-over and the ring
    of triangles around moved nodes absorbs the transition).  With a hint,
    free lattice nodes near the band are snapped onto its axis.  Raises
    AdaptationFailed when the result is not admissible or a locked triangle
    cannot be preserved.
    """
    locked_ids = np.asarray(sorted(locked.ids if hasattr(locked, "ids") else locked),
                            dtype=np.int64)
    if len(locked_ids) and (locked_ids.max() >= prev.n_triangles or locked_ids.min() < 0):
        raise AdaptationFailed("locked triangles must belong to the previous mesh")
    if prev.grid_shape is None:
        raise AdaptationFailed("previous mesh is not from the background grid family")

    base = build_background_mesh(prev.domain, prev.params)
    if base.n_nodes != prev.n_nodes or base.n_triangles != prev.n_triangles:
        raise AdaptationFailed("grid family mismatch between meshes")

    nodes = base.nodes.copy()
    locked_nodes = np.unique(prev.triangles[locked_ids].ravel()) if len(locked_ids) \
        else np.empty(0, dtype=np.int64)
    nodes[locked_nodes] = prev.nodes[locked_nodes]

    if hint is not None:
        nodes = _snap_to_band(nodes, base, hint, frozenset(locked_nodes.tolist()))

    out = Triangulation(nodes, base.triangles, prev.domain, prev.params,
                        grid_shape=base.grid_shape)
    rep = check_admissible(out)
    if not rep.ok:
        raise AdaptationFailed(f"adapted mesh inadmissible: {rep.kinds()}")
    for t in locked_ids:
        if not np.array_equal(out.triangles[t], prev.triangles[t]) or \
                not np.allclose(out.nodes[out.triangles[t]],
                                prev.nodes[prev.triangles[t]], atol=0.0):
            raise AdaptationFailed(f"locked triangle {t} not preserved")
    return out


def _snap_to_band(nodes, base: Triangulation, hint: StrainHint, frozen):
    """Move at most one lattice node per column (row, for steep bands) onto
    the band axis, so snapped edges align with it without collapsing."""
    d = hint.unit()
    p0 = np.asarray(hint.point, dtype=float)
    h = base.params.grid_spacing
    nx, ny, ox, oy = base.grid_shape
    out = nodes.copy()
    # a move of m shortens the lattice edge on one side to h - m
    max_move = min(0.49 * h, h - base.params.eps * (1.0 + 1e-9))
    if max_move <= 0.0:
        return out
    steep = abs(d[1]) > abs(d[0])

    def nid(i, j):
        return j * (nx + 1) + i

    if not steep:
        slope = d[1] / d[0]
        for i in range(nx + 1):
            x = ox + i * h
            s = (x - p0[0]) / d[0]
            if abs(s) > hint.length:
                continue
            y_star = p0[1] + slope * (x - p0[0])
            j = int(round((y_star - oy) / h))
            if not (0 <= j <= ny):
                continue
            v = nid(i, j)
            if v in frozen:
                continue
            move = y_star - nodes[v, 1]
            if abs(move) <= max_move:
                out[v, 1] = y_star
    else:
        slope = d[0] / d[1]
        for j in range(ny + 1):
            y = oy + j * h
            s = (y - p0[1]) / d[1]
            if abs(s) > hint.length:
                continue
            x_star = p0[0] + slope * (y - p0[1])
            i = int(round((x_star - ox) / h))
            if not (0 <= i <= nx):
                continue
            v = nid(i, j)
            if v in frozen:
                continue
            move = x_star - nodes[v, 0]
            if abs(move) <= max_move:
                out[v, 0] = x_star
    return out
