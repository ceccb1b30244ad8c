from typing import Callable, Optional, Sequence
from dataclasses import dataclass
from functools import lru_cache
import logging

import numpy as np
import scipy.sparse as sps

from cutfeec.forms import AltForm, dimension
from cutfeec.geometry import ActiveMesh
from cutfeec.model.enums import Region
from cutfeec.quadrature import QuadRule, facet_rule, triangle_rule
from cutfeec.util import CutFeecException, multi_indices, permutation_sign

log = logging.getLogger(__name__)

DIM = 2
UNISOLVENCE_TOL = 1e-12
INTERPOLATION_DEGREE = 4

# field evaluated at (N, 2) points -> (N, n_components) coefficients
FormField = Callable[[np.ndarray], np.ndarray]


@lru_cache(maxsize=None)
def monomials(r: int) -> tuple[tuple[int, int], ...]:
    """Exponents (a, b) of x^a y^b with a + b <= r, ordered by total degree."""
    return tuple((d - b, b) for d in range(r + 1) for b in range(d + 1))


def eval_monomials(points: np.ndarray, r: int) -> np.ndarray:
    pts = np.atleast_2d(points)
    return np.column_stack([pts[:, 0] ** a * pts[:, 1] ** b for a, b in monomials(r)])


@lru_cache(maxsize=None)
def _partial_matrix(r: int, axis: int) -> np.ndarray:
    """D with (coeffs @ D) the coefficients of the partial derivative along `axis`."""
    mono = monomials(r)
    pos = {e: i for i, e in enumerate(mono)}
    D = np.zeros((len(mono), len(mono)))
    for i, (a, b) in enumerate(mono):
        if axis == 0 and a > 0:
            D[i, pos[(a - 1, b)]] = a
        if axis == 1 and b > 0:
            D[i, pos[(a, b - 1)]] = b
    return D


def directional_derivative_matrix(normal: Sequence[float], r: int, ell: int = 1) -> np.ndarray:
    nv = np.asarray(normal, dtype=float)
    D = nv[0] * _partial_matrix(r, 0) + nv[1] * _partial_matrix(r, 1)
    return np.linalg.matrix_power(D, ell)


@dataclass(frozen=True, eq=False)
class LocalBasis:
    """Whitney basis on one triangle as Cartesian monomial tables (n_local, n_components, n_monomials)."""

    tri: int
    dofs: np.ndarray
    coeffs: np.ndarray


@dataclass(frozen=True, eq=False)
class FESpace:
    k: int
    r: int
    mesh: ActiveMesh
    entities: np.ndarray
    entity_dof: dict[int, int]
    local_basis: dict[int, LocalBasis]

    @property
    def n_dofs(self) -> int:
        return len(self.entities)

    @property
    def n_components(self) -> int:
        return dimension(DIM, self.k)

    def local(self, t: int) -> LocalBasis:
        return self.local_basis[int(t)]

    def __repr__(self) -> str:
        return f"FESpace(k={self.k}, r={self.r}, dofs={self.n_dofs})"


def barycentric_coefficients(T: np.ndarray) -> np.ndarray:
    """Columns hold (a_i, b_ix, b_iy) with lambda_i(x) = a_i + b_i . x."""
    A = np.column_stack([np.ones(3), T])
    return np.linalg.inv(A)


def _whitney_table(k: int, T: np.ndarray, local_vertices: Sequence[tuple[int, ...]]) -> np.ndarray:
    C = barycentric_coefficients(T)
    match k:
        case 0:
            return np.array([[C[:, i]] for (i,) in local_vertices])
        case 1:
            rows = []
            for lo, hi in local_vertices:
                # lambda_lo d lambda_hi - lambda_hi d lambda_lo
                rows.append(
                    [C[:, lo] * C[1 + axis, hi] - C[:, hi] * C[1 + axis, lo] for axis in range(2)]
                )
            return np.array(rows)
        case 2:
            area = 0.5 * abs(np.linalg.det(np.column_stack([T[1] - T[0], T[2] - T[0]])))
            return np.array([[[1.0 / area, 0.0, 0.0]]])
        case _:
            raise ValueError(f"invalid form degree {k}")


def _local_entities(mesh: ActiveMesh, k: int, t: int) -> tuple[list[int], list[tuple[int, ...]]]:
    """Global entity ids of triangle t and their local vertex tuples in global orientation."""
    bg = mesh.parent
    tri = bg.triangles[t]
    match k:
        case 0:
            return [int(v) for v in tri], [(i,) for i in range(3)]
        case 1:
            ents, local = [], []
            for i in range(3):
                j = (i + 1) % 3
                ents.append(int(bg.tri_edges[t, i]))
                local.append((i, j) if tri[i] < tri[j] else (j, i))
            return ents, local
        case 2:
            return [int(t)], [(0, 1, 2)]
        case _:
            raise ValueError(f"invalid form degree {k}")


def build_space(mesh: ActiveMesh, k: int, r: int = 1, check: bool = True) -> FESpace:
    if k not in (0, 1, 2):
        raise ValueError(f"invalid form degree {k} for a 2D mesh")
    if r != 1:
        raise ValueError(f"only the lowest-order trimmed family is implemented, got r={r}")

    bg = mesh.parent
    per_tri = {int(t): _local_entities(mesh, k, int(t)) for t in mesh.active}
    entities = np.array(sorted({e for ents, _ in per_tri.values() for e in ents}), dtype=int)
    entity_dof = {int(e): i for i, e in enumerate(entities)}

    local_basis = {}
    for t, (ents, local) in per_tri.items():
        table = _whitney_table(k, bg.coords(t), local)
        dofs = np.array([entity_dof[e] for e in ents], dtype=int)
        local_basis[t] = LocalBasis(t, dofs, table)

    sp = FESpace(k, r, mesh, entities, entity_dof, local_basis)

    if check:
        for t in local_basis:
            F = dof_functionals(sp, t)
            if not np.allclose(F, np.eye(F.shape[0]), rtol=0.0, atol=UNISOLVENCE_TOL):
                raise CutFeecException(f"Whitney basis of degree {k} not unisolvent on triangle {t}")

    log.debug(f"built {sp}")
    return sp


def basis_values(
    sp: FESpace,
    t: int,
    points: np.ndarray,
    ell: int = 0,
    normal: Optional[Sequence[float]] = None,
) -> np.ndarray:
    """
    Values of the ell-th directional derivative along `normal` of every local basis
    form, shape (n_points, n_local, n_components). Points outside T evaluate the
    polynomial extension.
    """
    coeffs = sp.local(t).coeffs
    if ell > 0:
        if normal is None:
            raise ValueError("directional derivative needs a direction")
        coeffs = coeffs @ directional_derivative_matrix(normal, sp.r, ell)
    return np.einsum("lcm,qm->qlc", coeffs, eval_monomials(points, sp.r))


def eval_basis(
    sp: FESpace,
    t: int,
    x: Sequence[float],
    ell: int = 0,
    normal: Optional[Sequence[float]] = None,
) -> list[AltForm]:
    vals = basis_values(sp, t, np.asarray(x, dtype=float)[None, :], ell, normal)[0]
    return [AltForm(DIM, sp.k, v) for v in vals]


def evaluate_field(sp: FESpace, coeffs: np.ndarray, t: int, points: np.ndarray) -> np.ndarray:
    """Discrete field with global DOF vector `coeffs` on triangle t, shape (n_points, n_components)."""
    local = sp.local(t)
    return np.einsum("qlc,l->qc", basis_values(sp, t, points), coeffs[local.dofs])


def _local_functionals(sp: FESpace, t: int, values: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """
    Local DOF functionals applied to a family of fields; `values(points)` has shape
    (n_points, n_fields, n_components). Returns (n_local, n_fields).
    """
    bg = sp.mesh.parent
    T = bg.coords(t)
    _, local = _local_entities(sp.mesh, sp.k, t)
    match sp.k:
        case 0:
            return np.array([values(T[i][None, :])[0, :, 0] for (i,) in local])
        case 1:
            rows = []
            for lo, hi in local:
                rule = facet_rule(T[[lo, hi]], INTERPOLATION_DEGREE)
                tangent = T[hi] - T[lo]
                # weights carry |e|; the tangent is unnormalized
                w = rule.weights / np.linalg.norm(tangent)
                rows.append(np.einsum("q,qfc,c->f", w, values(rule.points), tangent))
            return np.array(rows)
        case 2:
            rule = triangle_rule(T, INTERPOLATION_DEGREE)
            return np.einsum("q,qf->f", rule.weights, values(rule.points)[:, :, 0])[None, :]
        case _:
            raise ValueError(f"invalid form degree {sp.k}")


def dof_functionals(sp: FESpace, t: int) -> np.ndarray:
    """Matrix of DOF functional i applied to local basis form j; the identity for a unisolvent basis."""
    return _local_functionals(sp, t, lambda pts: basis_values(sp, t, pts))


def interpolate(sp: FESpace, field: FormField) -> np.ndarray:
    """Canonical interpolant of an AltForm-valued field into the space."""
    res = np.zeros(sp.n_dofs)
    for t, local in sp.local_basis.items():
        vals = _local_functionals(sp, t, lambda pts: np.asarray(field(pts))[:, None, :])
        res[local.dofs] = vals[:, 0]
    return res


@dataclass(frozen=True, eq=False)
class CoboundaryMatrix:
    k: int
    matrix: sps.csr_matrix

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape


def coboundary(sp_k: FESpace, sp_k1: FESpace) -> CoboundaryMatrix:
    """Signed incidence matrix realizing d from degree k to k+1 on Whitney DOFs."""
    if sp_k.mesh is not sp_k1.mesh:
        raise ValueError("spaces live on different meshes")
    if sp_k1.k != sp_k.k + 1:
        raise ValueError(f"coboundary from degree {sp_k.k} to {sp_k1.k}")

    bg = sp_k.mesh.parent
    rows, cols, vals = [], [], []
    match sp_k.k:
        case 0:
            for e in sp_k1.entities:
                lo, hi = bg.edges[e]
                row = sp_k1.entity_dof[int(e)]
                rows += [row, row]
                cols += [sp_k.entity_dof[int(lo)], sp_k.entity_dof[int(hi)]]
                vals += [-1, 1]
        case 1:
            for t in sp_k1.entities:
                tri = bg.triangles[t]
                row = sp_k1.entity_dof[int(t)]
                for i in range(3):
                    # counter-clockwise boundary traversal
                    sign = 1 if tri[i] < tri[(i + 1) % 3] else -1
                    rows.append(row)
                    cols.append(sp_k.entity_dof[int(bg.tri_edges[t, i])])
                    vals.append(sign)
        case _:
            raise ValueError(f"no coboundary from degree {sp_k.k} in 2D")

    D = sps.coo_matrix(
        (np.array(vals, dtype=np.int64), (rows, cols)), shape=(sp_k1.n_dofs, sp_k.n_dofs)
    ).tocsr()
    return CoboundaryMatrix(sp_k.k, D)


def exterior_derivative_table(coeffs: np.ndarray, k: int, r: int) -> np.ndarray:
    """Monomial table of d applied to each form of a (n_forms, n_components, n_monomials) table."""
    src = multi_indices(DIM, k)
    dst = {ix: i for i, ix in enumerate(multi_indices(DIM, k + 1))}
    res = np.zeros((coeffs.shape[0], len(dst), coeffs.shape[2]))
    for c, I in enumerate(src):
        for axis in range(DIM):
            j = axis + 1
            if j in I:
                continue
            sign = permutation_sign((j,) + I)
            target = dst[tuple(sorted((j,) + I))]
            res[:, target, :] += sign * coeffs[:, c, :] @ _partial_matrix(r, axis)
    return res


def quadrature_rule(sp: FESpace, t: int, region: Region, degree: int) -> QuadRule:
    match region:
        case Region.PHYSICAL:
            return sp.mesh.physical_rule(t, degree)
        case Region.ACTIVE:
            return triangle_rule(sp.mesh.parent.coords(t), degree)
        case _:
            raise ValueError(f"unknown region {region}")


def local_mass(sp: FESpace, t: int, region: Region, degree: int = 2) -> np.ndarray:
    rule = quadrature_rule(sp, t, region, degree)
    if len(rule) == 0:
        n = len(sp.local(t).dofs)
        return np.zeros((n, n))
    vals = basis_values(sp, t, rule.points)
    return np.einsum("q,qic,qjc->ij", rule.weights, vals, vals)


def mass_matrix(sp: FESpace, region: Region, degree: int = 2) -> sps.csr_matrix:
    """(phi_i, phi_j) over Ω (PHYSICAL, cut quadrature) or Ω_h (ACTIVE)."""
    rows, cols, data = [], [], []
    for t in sorted(sp.local_basis):
        dofs = sp.local(t).dofs
        M = local_mass(sp, t, region, degree)
        rows.append(np.repeat(dofs, len(dofs)))
        cols.append(np.tile(dofs, len(dofs)))
        data.append(M.ravel())

    M = sps.coo_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=(sp.n_dofs, sp.n_dofs),
    ).tocsr()
    # exact symmetry despite summation order
    return ((M + M.T) * 0.5).tocsr()


def load_vector(sp: FESpace, f: FormField, degree: int = 2) -> np.ndarray:
    """(f, phi_i)_Ω by cut quadrature; the data is never extended outside Ω."""
    res = np.zeros(sp.n_dofs)
    for t in sorted(sp.local_basis):
        rule = sp.mesh.physical_rule(t, degree)
        if len(rule) == 0:
            continue
        vals = basis_values(sp, t, rule.points)
        fx = np.asarray(f(rule.points)).reshape(len(rule), -1)
        np.add.at(res, sp.local(t).dofs, np.einsum("q,qlc,qc->l", rule.weights, vals, fx))
    return res
