"""Truncated finite-element energy, crack classification, and the
history-dependent energy of the incremental scheme.

Per triangle the density is f(eps * C e:e) / eps with f(t) = min(t, kappa)
by default; a triangle whose density is capped counts as cracked, as does
any triangle far from the regular background grid.  The elastic integral
runs over the body rectangle; cracked area is measured inside the
enclosing rectangle.
"""

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ._kernels import tri_tri_dist, truncated_energy_terms
from .mesh import DisplacementField, MeshParams, Triangulation
from .trisets import TriangleSet


class EnergyError(Exception):
    pass


class MeshFieldMismatch(EnergyError):
    pass


class DegenerateTriangle(EnergyError):
    pass


class InconsistentHistory(EnergyError):
    pass


TRUNCATED = "truncated"


@dataclass
class MaterialModel:
    """Energy-density cap kappa and the elasticity contraction.

    `elasticity` is a symmetric 3x3 matrix acting on Mandel strain vectors
    [e11, e22, sqrt(2) e12]; with the identity matrix the contraction
    C e : e reduces exactly to the Frobenius norm |e|^2.  `f_profile` is
    either "truncated" (f(t) = min(t, kappa)) or an (n,2) table of a
    nondecreasing density with f(0)=0, slope 1 at 0, and plateau kappa.
    """

    kappa: float = 1.0
    elasticity: np.ndarray = field(default_factory=lambda: np.eye(3))
    c1: float = 1.0
    c2: float = 1.0
    f_profile: object = TRUNCATED

    def __post_init__(self):
        self.elasticity = np.asarray(self.elasticity, dtype=float)
        if self.kappa <= 0.0:
            raise EnergyError(f"kappa must be positive, got {self.kappa}")
        if self.elasticity.shape != (3, 3):
            raise EnergyError("elasticity must be a 3x3 Mandel matrix")
        if not np.allclose(self.elasticity, self.elasticity.T, atol=1e-12):
            raise EnergyError("elasticity matrix must be symmetric")
        if not (0.0 < self.c1 <= self.c2):
            raise EnergyError("need 0 < c1 <= c2")
        if not self.is_truncated:
            tab = np.asarray(self.f_profile, dtype=float)
            if tab.ndim != 2 or tab.shape[1] != 2 or tab.shape[0] < 2:
                raise EnergyError("custom f must be an (n,2) table")
            if tab[0, 0] != 0.0 or tab[0, 1] != 0.0:
                raise EnergyError("custom f must start at (0,0)")
            if np.any(np.diff(tab[:, 0]) <= 0) or np.any(np.diff(tab[:, 1]) < 0):
                raise EnergyError("custom f must be nondecreasing")
            slope0 = tab[1, 1] / tab[1, 0]
            if abs(slope0 - 1.0) > 1e-6:
                raise EnergyError("custom f must have unit slope at zero")
            if abs(tab[-1, 1] - self.kappa) > 1e-12 * max(1.0, self.kappa):
                raise EnergyError("custom f must plateau at kappa")
            self.f_profile = tab

    @property
    def is_truncated(self) -> bool:
        return isinstance(self.f_profile, str) and self.f_profile == TRUNCATED

    def f(self, t):
        if self.is_truncated:
            return np.minimum(t, self.kappa)
        tab = self.f_profile
        return np.interp(t, tab[:, 0], tab[:, 1])

    def validate_ellipticity(self, n_samples: int = 10_000, seed: int = 0) -> bool:
        """Check c1 |xi|^2 <= C xi : xi <= c2 |xi|^2 on random symmetric xi."""
        rng = np.random.default_rng(seed)
        v = rng.standard_normal((n_samples, 3))
        quad = np.einsum("ni,ij,nj->n", v, self.elasticity, v)
        norm2 = (v * v).sum(axis=1)
        lo = self.c1 * norm2 - 1e-12 * norm2
        hi = self.c2 * norm2 + 1e-12 * norm2
        return bool(np.all(quad >= lo) and np.all(quad <= hi))


@dataclass
class EnergyReport:
    total: float
    elastic_part: float
    crack_part: float
    cracked_area: float
    n_cracked: int = 0
    per_triangle: Optional[np.ndarray] = None

    def csv_row(self, step: int, t: float) -> str:
        cols = [f"{step:d}", _g17(t), _g17(self.total), _g17(self.elastic_part),
                _g17(self.crack_part), _g17(self.cracked_area), f"{self.n_cracked:d}"]
        return ",".join(cols)

    CSV_HEADER = "step,t,total,elastic,crack,cracked_area,n_cracked"


def _g17(x: float) -> str:
    return f"{x:.17g}"


class CrackHistory:
    """Irreversible accumulated crack set, shared across meshes by
    coordinate keys so a locked triangle can be found on later meshes."""

    def __init__(self):
        self._keys = {}   # key -> (area_in_omega_prime, full_area)
        self._steps = []  # per step: sorted tuple of keys added

    def __len__(self):
        return len(self._steps)

    @property
    def n_triangles(self) -> int:
        return len(self._keys)

    def accumulated_keys(self):
        return self._keys.keys()

    def add_step(self, tset: TriangleSet):
        mesh = tset.mesh
        added = []
        for t in tset.ids:
            k = mesh.tri_keys[t]
            if k not in self._keys:
                self._keys[k] = (float(mesh.area_in_omega_prime[t]),
                                 float(mesh.areas[t]))
                added.append(k)
        self._steps.append(tuple(sorted(added)))

    def resolve_ids(self, mesh: Triangulation) -> np.ndarray:
        """Ids of the accumulated triangles on `mesh`; raises if absent."""
        lookup = mesh.key_to_tri
        out = np.empty(len(self._keys), dtype=np.int64)
        for i, k in enumerate(self._keys):
            t = lookup.get(k)
            if t is None:
                raise InconsistentHistory(
                    "locked crack triangle is absent from the mesh")
            out[i] = t
        out.sort()
        return out

    def area_in_omega_prime(self) -> float:
        return float(sum(a for a, _ in self._keys.values()))

    def copy(self) -> "CrackHistory":
        h = CrackHistory()
        h._keys = dict(self._keys)
        h._steps = list(self._steps)
        return h


# ---------------------------------------------------------------------------
# operations


def triangle_strain(mesh: Triangulation, u: DisplacementField, t_id: int):
    """Constant symmetrized gradient of u on one triangle, as a 2x2 matrix."""
    _check_field(mesh, u)
    if mesh.areas[t_id] < 1e-14 * mesh.params.eps ** 2:
        raise DegenerateTriangle(f"triangle {t_id} has near-zero area")
    row = u.strains()[t_id]
    s2 = row[2] / math.sqrt(2.0)
    return np.array([[row[0], s2], [s2, row[1]]])


def _check_field(mesh, u):
    if u.mesh is not mesh:
        raise MeshFieldMismatch("field does not live on this mesh")


def static_energy(mesh: Triangulation, u: DisplacementField,
                  material: MaterialModel, params: MeshParams) -> EnergyReport:
    """Total truncated energy and, for the truncated profile, its exact
    split into elastic part plus kappa * |capped region in omega| / eps."""
    _check_field(mesh, u)
    strains = u.strains()
    w_omega = mesh.area_in_omega
    eps = params.eps
    if material.is_truncated:
        sq, elastic_t, cap_t, capped = truncated_energy_terms(
            strains, material.elasticity, w_omega, w_omega, eps, material.kappa)
        elastic = float(elastic_t[~capped].sum())
        crack = float(cap_t[capped].sum())
        per = np.where(capped, cap_t, elastic_t)
        return EnergyReport(total=elastic + crack, elastic_part=elastic,
                            crack_part=crack,
                            cracked_area=float(w_omega[capped].sum()),
                            n_cracked=int(capped.sum()), per_triangle=per)
    sq = np.einsum("mi,ij,mj->m", strains, material.elasticity, strains)
    per = w_omega / eps * material.f(eps * sq)
    total = float(per.sum())
    capped = eps * sq >= material.kappa
    return EnergyReport(total=total, elastic_part=total, crack_part=0.0,
                        cracked_area=float(w_omega[capped].sum()),
                        n_cracked=int(capped.sum()), per_triangle=per)


def classify_cracked(mesh: Triangulation, u: DisplacementField,
                     material: MaterialModel, params: MeshParams) -> TriangleSet:
    """Triangles with eps |e|_C^2 >= kappa, plus triangles farther than
    bg_dist_factor * eps from the background part of the mesh (all
    triangles when the mesh has no background part)."""
    _check_field(mesh, u)
    strains = u.strains()
    sq = np.einsum("mi,ij,mj->m", strains, material.elasticity, strains)
    cracked = params.eps * sq >= material.kappa
    bg = mesh.is_background
    if not bg.any():
        return TriangleSet(mesh, np.arange(mesh.n_triangles))
    if not bg.all():
        radius = params.bg_dist_factor * params.eps
        far = _far_from_background(mesh, bg, radius)
        cracked = cracked | far
    return TriangleSet(mesh, np.where(cracked)[0])


def _far_from_background(mesh: Triangulation, bg, radius: float):
    """Mask of triangles at distance >= radius from every background triangle."""
    out = np.zeros(mesh.n_triangles, dtype=bool)
    cand = np.where(~bg)[0]
    if not len(cand):
        return out
    span = max(float(np.ptp(mesh.nodes[:, 0])), float(np.ptp(mesh.nodes[:, 1])))
    if radius > 2.0 * span:
        return out  # clause inert: some background triangle is always nearer
    h = mesh.params.grid_spacing
    x0 = mesh.nodes[:, 0].min()
    y0 = mesh.nodes[:, 1].min()
    cells = {}
    for t in np.where(bg)[0]:
        p = mesh.nodes[mesh.triangles[t]]
        ci = int((p[:, 0].mean() - x0) // h)
        cj = int((p[:, 1].mean() - y0) // h)
        cells.setdefault((ci, cj), []).append(t)
    reach = int(math.ceil(radius / h)) + 2
    for t in cand:
        p = mesh.nodes[mesh.triangles[t]]
        ci = int((p[:, 0].mean() - x0) // h)
        cj = int((p[:, 1].mean() - y0) // h)
        best = np.inf
        for di in range(-reach, reach + 1):
            for dj in range(-reach, reach + 1):
                for s in cells.get((ci + di, cj + dj), ()):
                    d = tri_tri_dist(p, mesh.nodes[mesh.triangles[s]])
                    if d < best:
                        best = d
            if best < radius * 0.5:
                break
        out[t] = best >= radius
    return out


def history_energy(mesh: Triangulation, u: DisplacementField, history,
                   material: MaterialModel, params: MeshParams) -> EnergyReport:
    """History-dependent energy: elastic integral off the accumulated crack
    set (including the current classification of u), plus kappa/eps times
    the cracked area inside the enclosing rectangle."""
    _check_field(mesh, u)
    hist_ids = _history_ids(mesh, history)
    current = classify_cracked(mesh, u, material, params)
    s_ids = np.union1d(hist_ids, current.ids)
    return energy_given_crack_set(mesh, u, s_ids, material, params)


def energy_given_crack_set(mesh: Triangulation, u: DisplacementField, s_ids,
                           material: MaterialModel, params: MeshParams,
                           ) -> EnergyReport:
    """Energy with an explicit crack set (no self-classification)."""
    strains = u.strains()
    sq = np.einsum("mi,ij,mj->m", strains, material.elasticity, strains)
    w_omega = mesh.area_in_omega
    w_prime = mesh.area_in_omega_prime
    s_mask = np.zeros(mesh.n_triangles, dtype=bool)
    s_ids = np.asarray(s_ids, dtype=np.int64)
    s_mask[s_ids] = True
    elastic = float((w_omega[~s_mask] * sq[~s_mask]).sum())
    cracked_area = float(w_prime[s_mask].sum())
    crack = material.kappa * cracked_area / params.eps
    return EnergyReport(total=elastic + crack, elastic_part=elastic,
                        crack_part=crack, cracked_area=cracked_area,
                        n_cracked=int(len(s_ids)))


def _history_ids(mesh: Triangulation, history) -> np.ndarray:
    if history is None:
        return np.empty(0, dtype=np.int64)
    if isinstance(history, CrackHistory):
        return history.resolve_ids(mesh)
    if isinstance(history, TriangleSet):
        if history.mesh is not mesh:
            lookup = mesh.key_to_tri
            out = []
            for t in history.ids:
                k = history.mesh.tri_keys[t]
                if k not in lookup:
                    raise InconsistentHistory(
                        "locked crack triangle is absent from the mesh")
                out.append(lookup[k])
            return np.asarray(sorted(out), dtype=np.int64)
        return history.ids
    return np.asarray(sorted(history), dtype=np.int64)
