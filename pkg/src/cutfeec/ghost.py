from typing import Iterable, Literal, Optional, Union
from dataclasses import dataclass, replace
from functools import cached_property, lru_cache
import logging

import numpy as np
import scipy.linalg
import scipy.sparse as sps

from cutfeec.forms import AltForm, FacetFrame, dimension, normal_trace, trace
from cutfeec.geometry import DELTA_DEFAULT, N_MAX_DEFAULT, Facet, macro_facets
from cutfeec.model.enums import FacetSet, Region
from cutfeec.quadrature import facet_rule
from cutfeec.spaces import FESpace, basis_values, mass_matrix
from cutfeec.util import GeometryError, SolverError

log = logging.getLogger(__name__)

ETA_DEFAULT = 1.0
SINGULAR_TOL = 1e-13

JumpPath = Literal["full", "trace"]


@dataclass(frozen=True, eq=False)
class GhostGram:
    k: int
    M_phys: sps.csr_matrix
    S: sps.csr_matrix
    M_active: sps.csr_matrix
    eta: float
    facet_set: FacetSet
    delta: Optional[float] = None

    @cached_property
    def M_s(self) -> sps.csr_matrix:
        return (self.M_phys + self.S).tocsr()

    def unstabilized(self) -> "GhostGram":
        """Same Gram with S = 0, i.e. (·,·)_Ω on the active-mesh space."""
        return replace(self, S=sps.csr_matrix(self.S.shape))

    def extremes(self, stabilized: bool = True) -> tuple[float, float]:
        """Extreme generalized eigenvalues of (M_s, M_active), or (M_phys, M_active)."""
        A = self.M_s if stabilized else self.M_phys
        return generalized_extremes(A, self.M_active)

    def check_definite(self) -> None:
        ev = scipy.linalg.eigvalsh(self.M_s.toarray())
        if ev[0] < SINGULAR_TOL * ev[-1]:
            raise SolverError(
                f"ghost Gram of degree {self.k} is numerically singular: "
                f"eigenvalues {ev[0]:.3e} .. {ev[-1]:.3e}"
            )


def generalized_extremes(A: sps.spmatrix | np.ndarray, B: sps.spmatrix | np.ndarray) -> tuple[float, float]:
    """Smallest and largest eigenvalue of A x = lambda B x, B positive definite."""
    Ad = A.toarray() if sps.issparse(A) else np.asarray(A)
    Bd = B.toarray() if sps.issparse(B) else np.asarray(B)
    ev = scipy.linalg.eigh(Ad, Bd, eigvals_only=True)
    return float(ev[0]), float(ev[-1])


@lru_cache(maxsize=None)
def _trace_maps(k: int, normal: tuple[float, ...], tangents: tuple[tuple[float, ...], ...]) -> tuple[np.ndarray, np.ndarray]:
    """Matrices of trace and normal trace acting on coefficient vectors of k-forms."""
    frame = FacetFrame(np.array(normal), np.array(tangents), np.zeros(len(normal)))
    n = len(normal)
    cols_t, cols_n = [], []
    for c in range(dimension(n, k)):
        e = np.zeros(dimension(n, k))
        e[c] = 1.0
        a = AltForm(n, k, e)
        cols_t.append(trace(a, frame).coeffs)
        cols_n.append(normal_trace(a, frame).coeffs)
    shape = (-1, dimension(n, k))
    return np.array(cols_t).T.reshape(shape), np.array(cols_n).T.reshape(shape)


def _jump_values(sp: FESpace, facet: Facet, points: np.ndarray, ell: int) -> tuple[np.ndarray, np.ndarray]:
    """DOFs of both neighbours and the jumps of their ell-th normal derivatives, (n_points, n_local, n_components)."""
    a, b = facet.from_tri, facet.to_tri
    va = basis_values(sp, a, points, ell, facet.normal)
    vb = basis_values(sp, b, points, ell, facet.normal)
    dofs = np.concatenate([sp.local(a).dofs, sp.local(b).dofs])
    return dofs, np.concatenate([va, -vb], axis=1)


def local_ghost(
    sp: FESpace,
    facet: Facet,
    eta: float,
    degree: int = 2,
    path: JumpPath = "full",
) -> tuple[np.ndarray, np.ndarray]:
    """Local penalty matrix on the union of both neighbours' DOFs."""
    rule = facet_rule(facet.points, degree)
    h = facet.length
    frame = facet.frame

    if path == "trace":
        Pt, Pn = _trace_maps(
            sp.k, tuple(frame.normal), tuple(tuple(t) for t in frame.tangents)
        )
        metric = Pn.T @ Pn + Pt.T @ Pt
    elif path == "full":
        metric = None
    else:
        raise ValueError(f"unknown jump evaluation path {path!r}")

    res = None
    dofs = None
    for ell in range(sp.r + 1):
        dofs, J = _jump_values(sp, facet, rule.points, ell)
        if metric is None:
            loc = np.einsum("q,qic,qjc->ij", rule.weights, J, J)
        else:
            loc = np.einsum("q,qic,cd,qjd->ij", rule.weights, J, metric, J)
        loc *= eta * h ** (2 * ell + 1)
        res = loc if res is None else res + loc
    assert dofs is not None and res is not None
    return dofs, res


def _resolve(sp: FESpace, facets: Iterable[Union[int, Facet]]) -> list[Facet]:
    res = []
    for f in facets:
        if isinstance(f, Facet):
            if not (sp.mesh.is_active(f.from_tri) and sp.mesh.is_active(f.to_tri)):
                raise GeometryError(f"facet on edge {f.edge} has an inactive neighbour")
            res.append(f)
        else:
            res.append(sp.mesh.facet(int(f)))
    return res


def assemble_ghost(
    sp: FESpace,
    facets: Iterable[Union[int, Facet]],
    eta: float = ETA_DEFAULT,
    degree: int = 2,
    path: JumpPath = "full",
) -> sps.csr_matrix:
    """
    Ghost penalty s(·,·) over the given interior facets,
    sum_F sum_l eta h_F^(2l+1) ∫_F jump of the l-th normal derivative, squared.
    """
    if eta <= 0:
        raise ValueError(f"penalty parameter {eta} must be positive")

    rows, cols, data = [np.zeros(0, dtype=int)], [np.zeros(0, dtype=int)], [np.zeros(0)]
    for facet in _resolve(sp, facets):
        dofs, loc = local_ghost(sp, facet, eta, degree, path)
        rows.append(np.repeat(dofs, len(dofs)))
        cols.append(np.tile(dofs, len(dofs)))
        data.append(loc.ravel())

    S = sps.coo_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=(sp.n_dofs, sp.n_dofs),
    ).tocsr()
    return ((S + S.T) * 0.5).tocsr()


def select_facets(
    sp: FESpace,
    facet_set: FacetSet,
    delta: float = DELTA_DEFAULT,
    n_max: int = N_MAX_DEFAULT,
) -> tuple[int, ...]:
    match facet_set:
        case FacetSet.FULL:
            return sp.mesh.stab_facets
        case FacetSet.MACRO:
            return macro_facets(sp.mesh, delta, n_max)
        case _:
            raise ValueError(f"unknown facet set {facet_set}")


def ghost_gram(
    sp: FESpace,
    eta: float = ETA_DEFAULT,
    facet_set: FacetSet = FacetSet.MACRO,
    delta: float = DELTA_DEFAULT,
    n_max: int = N_MAX_DEFAULT,
    volume_degree: int = 2,
    facet_degree: int = 2,
    check: bool = True,
) -> GhostGram:
    facets = select_facets(sp, facet_set, delta, n_max)
    gram = GhostGram(
        sp.k,
        mass_matrix(sp, Region.PHYSICAL, volume_degree),
        assemble_ghost(sp, facets, eta, facet_degree),
        mass_matrix(sp, Region.ACTIVE, volume_degree),
        eta,
        facet_set,
        delta if facet_set == FacetSet.MACRO else None,
    )
    log.debug(f"ghost Gram k={sp.k}: {sp.n_dofs} dofs, {len(facets)} {facet_set} facets, eta={eta}")
    if check:
        gram.check_definite()
    return gram
