from typing import Callable, Optional, Self, Sequence, Iterator
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
import logging

import numpy as np

from cutfeec.forms import FacetFrame
from cutfeec.model.enums import GeometryKind, TriangleLabel
from cutfeec.model.util import Box
from cutfeec.quadrature import QuadRule, cut_rule_from_values, triangle_area
from cutfeec.util import GeometryError, bfs_paths

log = logging.getLogger(__name__)

N_MAX_DEFAULT = 10
DELTA_DEFAULT = 0.25
FRACTION_QUAD_DEGREE = 2


@dataclass(frozen=True, eq=False)
class LevelSet:
    """Signed function phi, negative inside the physical domain."""

    func: Callable[[np.ndarray], np.ndarray]
    offset: np.ndarray = field(default_factory=lambda: np.zeros(2))
    kind: Optional[GeometryKind] = None
    base_center: Optional[np.ndarray] = None
    radii: tuple[float, ...] = ()

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return self.func(pts + self.offset[None, :])

    def shifted(self, offset: Sequence[float]) -> "LevelSet":
        return replace(self, offset=np.asarray(offset, dtype=float))

    @property
    def center(self) -> np.ndarray:
        """Center of the translated geometry."""
        if self.base_center is None:
            raise ValueError("level set has no center")
        return self.base_center - self.offset

    @classmethod
    def circle(cls, center: Sequence[float], radius: float) -> Self:
        if radius <= 0:
            raise GeometryError(f"non-positive radius {radius}")
        c = np.asarray(center, dtype=float)

        def phi(x: np.ndarray) -> np.ndarray:
            return np.hypot(x[:, 0] - c[0], x[:, 1] - c[1]) - radius

        return cls(phi, kind=GeometryKind.DISK, base_center=c, radii=(radius,))

    @classmethod
    def annulus(cls, center: Sequence[float], r_inner: float, r_outer: float) -> Self:
        if not 0 < r_inner < r_outer:
            raise GeometryError(f"invalid annulus radii {r_inner}, {r_outer}")
        c = np.asarray(center, dtype=float)

        def phi(x: np.ndarray) -> np.ndarray:
            rho = np.hypot(x[:, 0] - c[0], x[:, 1] - c[1])
            return np.maximum(r_inner - rho, rho - r_outer)

        return cls(
            phi, kind=GeometryKind.ANNULUS, base_center=c, radii=(r_inner, r_outer)
        )

    @classmethod
    def affine(cls, normal: Sequence[float], offset: float) -> Self:
        """Half-plane {normal . x < offset}."""
        nv = np.asarray(normal, dtype=float)

        def phi(x: np.ndarray) -> np.ndarray:
            return x @ nv - offset

        return cls(phi)


@dataclass(frozen=True, eq=False)
class BackgroundMesh:
    box: Box
    m: int
    vertices: np.ndarray
    triangles: np.ndarray
    edges: np.ndarray
    tri_edges: np.ndarray
    edge_triangles: np.ndarray

    @property
    def h(self) -> float:
        return self.box.width / self.m

    @cached_property
    def areas(self) -> np.ndarray:
        return np.array([triangle_area(self.vertices[t]) for t in self.triangles])

    @cached_property
    def centroids(self) -> np.ndarray:
        return self.vertices[self.triangles].mean(axis=1)

    def coords(self, t: int) -> np.ndarray:
        return self.vertices[self.triangles[t]]

    def edge_coords(self, e: int) -> np.ndarray:
        return self.vertices[self.edges[e]]

    def locate(self, points: np.ndarray) -> np.ndarray:
        """Index of a triangle containing each point; -1 outside the box."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        s = (pts[:, 0] - self.box.xmin) / self.box.width * self.m
        t = (pts[:, 1] - self.box.ymin) / self.box.height * self.m
        inside = (s >= 0) & (s <= self.m) & (t >= 0) & (t <= self.m)
        i = np.clip(np.floor(s), 0, self.m - 1).astype(int)
        j = np.clip(np.floor(t), 0, self.m - 1).astype(int)
        upper = (t - j) > (s - i)
        res = 2 * (j * self.m + i) + upper.astype(int)
        return np.where(inside, res, -1)


def build_background(box: Box, m: int) -> BackgroundMesh:
    """Structured mesh of m x m squares, each split along its (+1, +1) diagonal."""
    if m < 1:
        raise GeometryError(f"need at least one cell per side, got {m}")

    xs = np.linspace(box.xmin, box.xmax, m + 1)
    ys = np.linspace(box.ymin, box.ymax, m + 1)
    X, Y = np.meshgrid(xs, ys)
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    j, i = np.meshgrid(np.arange(m), np.arange(m), indexing="ij")
    v00 = (j * (m + 1) + i).ravel()
    v10 = v00 + 1
    v01 = v00 + m + 1
    v11 = v01 + 1
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    triangles = np.stack([lower, upper], axis=1).reshape(-1, 3)

    local = triangles[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 3, 2)
    edges, inverse = np.unique(np.sort(local.reshape(-1, 2), axis=1), axis=0, return_inverse=True)
    tri_edges = inverse.reshape(-1, 3)

    edge_triangles = np.full((edges.shape[0], 2), -1, dtype=int)
    for t, tri in enumerate(tri_edges):
        for e in tri:
            slot = 0 if edge_triangles[e, 0] < 0 else 1
            edge_triangles[e, slot] = t

    bg = BackgroundMesh(box, m, vertices, triangles, edges, tri_edges, edge_triangles)
    log.debug(
        f"background mesh {box} m={m}: {len(vertices)} vertices, {len(edges)} edges, {len(triangles)} triangles"
    )
    return bg


@dataclass(frozen=True, eq=False)
class Facet:
    """Interior facet of the active mesh with a normal pointing from `from_tri` to `to_tri`."""

    edge: int
    from_tri: int
    to_tri: int
    points: np.ndarray
    normal: np.ndarray

    @property
    def length(self) -> float:
        return float(np.linalg.norm(self.points[1] - self.points[0]))

    @cached_property
    def frame(self) -> FacetFrame:
        return FacetFrame.from_points(self.points, normal=self.normal)

    def flipped(self) -> "Facet":
        return Facet(self.edge, self.to_tri, self.from_tri, self.points, -self.normal)


@dataclass(frozen=True)
class UncutPath:
    immersed: int
    triangles: tuple[int, ...]
    facets: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.triangles)


@dataclass(frozen=True, eq=False)
class ActiveMesh:
    parent: BackgroundMesh
    phi: LevelSet
    active: np.ndarray
    labels: dict[int, TriangleLabel]
    vertex_values: np.ndarray
    stab_facets: tuple[int, ...]
    facet_normals: dict[int, Facet]
    cut_to_uncut: dict[int, UncutPath] = field(default_factory=dict)

    @cached_property
    def active_set(self) -> frozenset[int]:
        return frozenset(int(t) for t in self.active)

    @property
    def cut(self) -> list[int]:
        return [int(t) for t in self.active if self.labels[t] == TriangleLabel.CUT]

    @property
    def immersed(self) -> list[int]:
        return [int(t) for t in self.active if self.labels[t] == TriangleLabel.IMMERSED]

    @property
    def n_realized(self) -> int:
        return max((len(p) for p in self.cut_to_uncut.values()), default=0)

    def is_active(self, t: int) -> bool:
        return t in self.active_set

    def neighbours(self, t: int) -> Iterator[tuple[int, int]]:
        """(edge, triangle) pairs across interior facets of the active mesh."""
        for e in self.parent.tri_edges[t]:
            for other in self.parent.edge_triangles[e]:
                if other >= 0 and other != t and other in self.active_set:
                    yield int(e), int(other)

    def is_interior(self, e: int) -> bool:
        a, b = self.parent.edge_triangles[e]
        return a >= 0 and b >= 0 and a in self.active_set and b in self.active_set

    def facet(self, e: int) -> Facet:
        if e in self.facet_normals:
            return self.facet_normals[e]
        if not self.is_interior(e):
            raise GeometryError(f"edge {e} is not an interior facet of the active mesh")
        return _make_facet(self.parent, e)

    def physical_rule(self, t: int, degree: int) -> QuadRule:
        tri = self.parent.triangles[t]
        return cut_rule_from_values(self.parent.vertices[tri], self.vertex_values[tri], degree)

    @cached_property
    def cut_fractions(self) -> dict[int, float]:
        res = {}
        for t in self.active:
            t = int(t)
            if self.labels[t] == TriangleLabel.IMMERSED:
                res[t] = 1.0
            else:
                rule = self.physical_rule(t, FRACTION_QUAD_DEGREE)
                res[t] = rule.measure / self.parent.areas[t]
        return res

    def physical_measure(self) -> float:
        return sum(self.cut_fractions[t] * self.parent.areas[t] for t in self.cut_fractions)


def _make_facet(bg: BackgroundMesh, e: int) -> Facet:
    a, b = sorted(int(t) for t in bg.edge_triangles[e])
    points = bg.edge_coords(e)
    tangent = points[1] - points[0]
    normal = np.array([tangent[1], -tangent[0]]) / np.linalg.norm(tangent)
    if normal @ (bg.centroids[b] - bg.centroids[a]) < 0:
        normal = -normal
    return Facet(e, a, b, points, normal)


def classify(bg: BackgroundMesh, phi: LevelSet, n_max: Optional[int] = N_MAX_DEFAULT) -> ActiveMesh:
    """
    Extract the active mesh of {phi < 0}, label CUT/IMMERSED triangles and collect
    stabilisation facets. With `n_max`, cut-to-uncut paths are computed as well.
    """
    vertex_values = phi.evaluate(bg.vertices)
    midpoints = bg.vertices[bg.edges].mean(axis=1)
    midpoint_values = phi.evaluate(midpoints)

    tri_values = vertex_values[bg.triangles]
    active = np.flatnonzero((tri_values < 0).any(axis=1))
    if active.size == 0:
        raise GeometryError("the physical domain misses the background mesh")

    immersed = (tri_values < 0).all(axis=1) & (midpoint_values[bg.tri_edges] < 0).all(axis=1)
    labels = {
        int(t): TriangleLabel.IMMERSED if immersed[t] else TriangleLabel.CUT
        for t in active
    }

    active_set = set(labels)
    stab = []
    for e, (a, b) in enumerate(bg.edge_triangles):
        if a < 0 or b < 0 or a not in active_set or b not in active_set:
            continue
        if labels[a] == TriangleLabel.CUT or labels[b] == TriangleLabel.CUT:
            stab.append(e)

    am = ActiveMesh(
        bg,
        phi,
        active,
        labels,
        vertex_values,
        tuple(stab),
        {e: _make_facet(bg, e) for e in stab},
    )
    n_cut = len(am.cut)
    log.debug(
        f"active mesh: {len(active)} triangles, {n_cut} cut, {len(stab)} stabilisation facets"
    )

    if n_max is not None:
        am = replace(am, cut_to_uncut=cut_to_uncut(am, n_max))
    return am


def cut_to_uncut(am: ActiveMesh, n_max: int = N_MAX_DEFAULT) -> dict[int, UncutPath]:
    """Shortest facet path from every cut triangle to a fully immersed one."""
    res = {}
    for start, nodes, edges in bfs_paths(
        am.cut,
        am.neighbours,
        lambda t: am.labels[t] == TriangleLabel.IMMERSED,
        n_max,
    ):
        if nodes is None or edges is None:
            raise GeometryError(
                f"cut triangle {start} has no fully immersed triangle within {n_max} elements"
            )
        res[start] = UncutPath(nodes[-1], tuple(nodes), tuple(edges))

    n_realized = max((len(p) for p in res.values()), default=0)
    log.debug(f"cut-to-uncut paths: {len(res)} cut triangles, N = {n_realized}")
    return res


def macro_facets(am: ActiveMesh, delta: float = DELTA_DEFAULT, n_max: int = N_MAX_DEFAULT) -> tuple[int, ...]:
    """
    Facets joining each small triangle (|T ∩ Ω|/|T| < delta) to its closest large
    triangle through interior facets.
    """
    if not 0 < delta <= 1:
        raise ValueError(f"macro parameter {delta} outside (0, 1]")

    fractions = am.cut_fractions

    def is_large(t: int) -> bool:
        return am.labels[t] == TriangleLabel.IMMERSED or fractions[t] >= delta

    small = [t for t in am.cut if not is_large(t)]
    selected: set[int] = set()
    for start, _, edges in bfs_paths(small, am.neighbours, is_large, n_max):
        if edges is None:
            raise GeometryError(
                f"small triangle {start} reaches no large triangle within {n_max} elements"
            )
        selected.update(edges)

    log.debug(f"macro stabilisation (delta={delta}): {len(small)} small triangles, {len(selected)} facets")
    return tuple(sorted(selected))


@dataclass(frozen=True)
class MeshDiagnostics:
    kappa_max: float
    n_realized: int
    h_min: float
    h_max: float


def shape_ratio(T: np.ndarray) -> float:
    """Circumdiameter over indiameter."""
    a, b, c = (np.linalg.norm(T[i] - T[(i + 1) % 3]) for i in range(3))
    area = abs(triangle_area(T))
    return float(a * b * c * (a + b + c) / (8.0 * area**2))


def mesh_diagnostics(am: ActiveMesh) -> MeshDiagnostics:
    bg = am.parent
    kappas = []
    diameters = []
    for t in am.active:
        T = bg.coords(t)
        kappas.append(shape_ratio(T))
        diameters.append(max(np.linalg.norm(T[i] - T[(i + 1) % 3]) for i in range(3)))
    return MeshDiagnostics(
        float(max(kappas)), am.n_realized, float(min(diameters)), float(max(diameters))
    )


def dump_mesh(am: ActiveMesh, path: Path | str, marked: Sequence[int] = ()) -> None:
    """
    Debug dump of the active mesh: `v x y` per vertex, `t i j k` per active triangle
    and `f i j LABEL` per stabilisation facet (MACRO for facets in `marked`).
    """
    bg = am.parent
    marked_set = set(marked)
    with open(path, "w") as fp:
        for x, y in bg.vertices:
            fp.write(f"v {x:.17g} {y:.17g}\n")
        for t in am.active:
            i, j, k = bg.triangles[t]
            fp.write(f"t {i} {j} {k}\n")
        for e in am.stab_facets:
            i, j = bg.edges[e]
            label = "MACRO" if e in marked_set else "STAB"
            fp.write(f"f {i} {j} {label}\n")
