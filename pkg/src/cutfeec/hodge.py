from typing import Optional
from dataclasses import dataclass, field
import logging
import math
import time
import warnings

import numpy as np
import scipy.linalg
import scipy.sparse as sps
import scipy.sparse.linalg as spla

from cutfeec.config import ExperimentConfig
from cutfeec.geometry import ActiveMesh, classify, build_background
from cutfeec.ghost import GhostGram, ghost_gram
from cutfeec.model.enums import FacetSet
from cutfeec.problems import ExactFields, FormField, ManufacturedProblem
from cutfeec.spaces import CoboundaryMatrix, FESpace, build_space, coboundary, evaluate_field, load_vector
from cutfeec.util import SolverError

log = logging.getLogger(__name__)

RANK_TOL = 1e-9
AMBIGUITY_FACTOR = 10.0
RESIDUAL_TOL = 1e-10
ORTHO_TOL = 1e-10
PIVOT_SCAN_MAX = 5000
ONENORMEST_SEED = 0


@dataclass(frozen=True, eq=False)
class HarmonicBasis:
    k: int
    vectors: np.ndarray
    gap: float = math.inf

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    @property
    def ambiguous(self) -> bool:
        return self.gap < AMBIGUITY_FACTOR


def _null_space(A: np.ndarray, tol: float = RANK_TOL) -> tuple[np.ndarray, float]:
    """Orthonormal kernel basis and the separation of the singular values from the cutoff."""
    n = A.shape[1]
    if A.shape[0] == 0 or n == 0:
        return np.eye(n), math.inf
    _, s, Vt = scipy.linalg.svd(A, full_matrices=True)
    if s.size == 0 or s[0] == 0.0:
        return np.eye(n), math.inf
    cutoff = tol * s[0]
    rank = int(np.sum(s > cutoff))
    gap = math.inf
    if rank > 0:
        gap = min(gap, s[rank - 1] / cutoff)
    if rank < s.size and s[rank] > 0:
        gap = min(gap, cutoff / s[rank])
    return Vt[rank:].T.conj(), gap


def harmonic_basis(
    sp_k: FESpace,
    M: sps.spmatrix,
    D_km1: Optional[CoboundaryMatrix],
    D_k: Optional[CoboundaryMatrix],
) -> HarmonicBasis:
    """
    M-orthonormal basis of {rho : D_k rho = 0, rho^T M D_km1 = 0}, the discrete
    harmonic forms for the inner product M (M_s, or M_phys / M_active for comparison).
    """
    n = sp_k.n_dofs
    if D_k is None:
        K, gap = np.eye(n), math.inf
    else:
        K, gap = _null_space(D_k.matrix.toarray().astype(float))

    Md = M.toarray() if sps.issparse(M) else np.asarray(M)
    if D_km1 is not None and K.shape[1] > 0:
        B = K.T @ Md @ D_km1.matrix.toarray().astype(float)
        Y, gap_b = _null_space(B.T)
        gap = min(gap, gap_b)
        H = K @ Y
    else:
        H = K

    H = _m_orthonormal(H, Md)

    basis = HarmonicBasis(sp_k.k, H, gap)
    if basis.ambiguous:
        log.warning(f"harmonic forms of degree {sp_k.k}: ambiguous rank decision, gap {gap:.3g}")
    log.debug(f"harmonic forms of degree {sp_k.k}: dim {basis.dim}")
    check_harmonic(basis, Md, D_km1, D_k)
    return basis


def _m_orthonormal(X: np.ndarray, M: np.ndarray) -> np.ndarray:
    if X.shape[1] == 0:
        return X
    try:
        L = scipy.linalg.cholesky(X.T @ M @ X, lower=True)
    except np.linalg.LinAlgError as e:
        raise SolverError(f"inner product is not definite on the subspace: {e}")
    return scipy.linalg.solve_triangular(L, X.T, lower=True).T


def check_harmonic(
    basis: HarmonicBasis,
    M: np.ndarray,
    D_km1: Optional[CoboundaryMatrix],
    D_k: Optional[CoboundaryMatrix],
    tol: float = ORTHO_TOL,
) -> None:
    """Closedness, orthogonality to exact forms and orthonormality, all relative to M."""
    if basis.dim == 0:
        return
    V = basis.vectors
    if D_k is not None:
        D = D_k.matrix.toarray().astype(float)
        if np.linalg.norm(D @ V) > tol * np.linalg.norm(D) * np.linalg.norm(V):
            raise SolverError(f"harmonic basis of degree {basis.k} is not closed")
    if D_km1 is not None:
        E = D_km1.matrix.toarray().astype(float)
        norms = np.sqrt(np.maximum(np.einsum("ij,ij->j", E, M @ E), 0.0))
        cross = np.abs(V.T @ M @ E)
        if np.any(cross > tol * np.maximum(norms, 1e-300)):
            raise SolverError(f"harmonic basis of degree {basis.k} is not orthogonal to exact forms")
    if not np.allclose(V.T @ M @ V, np.eye(basis.dim), rtol=0.0, atol=tol):
        raise SolverError(f"harmonic basis of degree {basis.k} is not orthonormal")


@dataclass(frozen=True, eq=False)
class MixedSystem:
    k: int
    A: sps.csc_matrix
    b: np.ndarray
    n_sigma: int
    n_eta: int
    n_lambda: int

    def split(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        s, e = self.n_sigma, self.n_sigma + self.n_eta
        return x[:s], x[s:e], x[e:]


@dataclass(frozen=True, eq=False)
class MixedSolution:
    sigma: np.ndarray
    eta: np.ndarray
    lambda_coeffs: np.ndarray
    residual: float
    system: MixedSystem
    lu: Optional[spla.SuperLU] = field(default=None, repr=False)


def assemble_mixed(
    k: int,
    M_km1: Optional[sps.spmatrix],
    M_k: sps.spmatrix,
    M_kp1: Optional[sps.spmatrix],
    D_km1: Optional[CoboundaryMatrix],
    D_k: Optional[CoboundaryMatrix],
    H: HarmonicBasis,
    F: np.ndarray,
) -> MixedSystem:
    """
    Symmetric saddle-point system (first block row negated)

        [ -M_{k-1}      D_{k-1}^T M_k    0     ] [sigma ]   [0]
        [ M_k D_{k-1}   D_k^T M_{k+1} D_k M_k H ] [eta   ] = [F]
        [ 0             H^T M_k          0     ] [lambda]   [0]

    with the sigma block absent for k = 0 and the D_k block absent at top degree.
    """
    n_eta = M_k.shape[0]
    if H.vectors.shape[0] != n_eta:
        raise ValueError(f"harmonic basis has {H.vectors.shape[0]} rows for {n_eta} DOFs")
    if F.shape != (n_eta,):
        raise ValueError(f"load vector of shape {F.shape} for {n_eta} DOFs")

    has_sigma = k > 0
    if has_sigma and (M_km1 is None or D_km1 is None):
        raise ValueError(f"degree {k} needs the degree {k - 1} blocks")
    n_sigma = M_km1.shape[0] if has_sigma else 0
    n_lambda = H.dim

    Mk = sps.csr_matrix(M_k)
    C = None
    if has_sigma:
        C = Mk @ D_km1.matrix.astype(float)
    K = None
    if D_k is not None and M_kp1 is not None:
        Dk = D_k.matrix.astype(float)
        K = Dk.T @ sps.csr_matrix(M_kp1) @ Dk
    MH = sps.csr_matrix(Mk @ H.vectors) if n_lambda else None

    rows = []
    if has_sigma:
        rows.append([-sps.csr_matrix(M_km1), C.T, None])
    rows.append([C, K if K is not None else sps.csr_matrix((n_eta, n_eta)), MH])
    if n_lambda:
        rows.append([None, MH.T, None])
    if not n_lambda:
        rows = [r[:2] for r in rows]
    if not has_sigma:
        rows = [r[1:] for r in rows]

    A = sps.bmat(rows, format="csr")
    A = ((A + A.T) * 0.5).tocsc()
    b = np.concatenate([np.zeros(n_sigma), F, np.zeros(n_lambda)])
    log.debug(f"mixed system k={k}: sizes sigma={n_sigma} eta={n_eta} lambda={n_lambda}, nnz={A.nnz}")
    return MixedSystem(k, A, b, n_sigma, n_eta, n_lambda)


def singular_pivot(A: sps.spmatrix) -> Optional[int]:
    """Column of the first vanishing pivot of a dense partial-pivoting LU, None if all pivots are nonzero."""
    if A.shape[0] > PIVOT_SCAN_MAX:
        return None
    dense = sps.csc_matrix(A).toarray()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, _ = scipy.linalg.lu_factor(dense, check_finite=False)
    pivots = np.abs(np.diag(lu))
    tol = pivots.max(initial=0.0) * dense.shape[0] * np.finfo(float).eps
    small = np.flatnonzero(pivots <= tol)
    return int(small[0]) if small.size else None


def factorize(A: sps.spmatrix) -> spla.SuperLU:
    try:
        return spla.splu(sps.csc_matrix(A))
    except RuntimeError as e:
        pivot = singular_pivot(A)
        where = f" (zero pivot in column {pivot})" if pivot is not None else ""
        raise SolverError(f"factorization failed: {e}{where}")


def solve_mixed(system: MixedSystem, tol: float = RESIDUAL_TOL) -> MixedSolution:
    lu = factorize(system.A)
    x = lu.solve(system.b)
    if not np.all(np.isfinite(x)):
        raise SolverError("non-finite solution of the mixed system")

    r = system.A @ x - system.b
    bnorm = np.linalg.norm(system.b)
    residual = float(np.linalg.norm(r) / bnorm) if bnorm > 0 else float(np.linalg.norm(r))
    if residual > tol:
        raise SolverError(f"mixed solve residual {residual:.3e} above tolerance {tol:.1e}")
    sigma, eta, lam = system.split(x)
    return MixedSolution(sigma, eta, lam, residual, system, lu)


def condition_estimate(
    A: sps.spmatrix | np.ndarray,
    exact: bool = False,
    lu: Optional[spla.SuperLU] = None,
) -> float:
    """1-norm condition number ||A||_1 ||A^-1||_1, the inverse norm estimated through the LU factors."""
    As = sps.csc_matrix(A)
    if lu is None:
        lu = factorize(As)
    norm_a = float(spla.norm(As, 1))

    if exact:
        inv = lu.solve(np.eye(As.shape[0]))
        norm_inv = float(np.abs(inv).sum(axis=0).max())
    else:
        op = spla.LinearOperator(
            As.shape,
            matvec=lu.solve,
            rmatvec=lambda x: lu.solve(x, trans="T"),
            dtype=float,
        )
        # onenormest draws its start vectors from the global numpy state
        state = np.random.get_state()
        np.random.seed(ONENORMEST_SEED)
        try:
            norm_inv = float(spla.onenormest(op))
        finally:
            np.random.set_state(state)
    return norm_a * norm_inv


@dataclass(frozen=True)
class ErrorRecord:
    eta: float
    d_eta: float
    sigma: float
    d_sigma: float
    lam: float

    def as_tuple(self) -> tuple[float, ...]:
        return self.eta, self.d_eta, self.sigma, self.d_sigma, self.lam


def l2_error(
    sp: FESpace,
    coeffs: Optional[np.ndarray],
    exact: Optional[FormField],
    degree: int = 4,
) -> float:
    """||discrete - exact||_{L2(Ω)} by cut quadrature; None on either side stands for zero."""
    total = 0.0
    for t in sorted(sp.local_basis):
        rule = sp.mesh.physical_rule(t, degree)
        if len(rule) == 0:
            continue
        diff = np.zeros((len(rule), sp.n_components))
        if coeffs is not None:
            diff += evaluate_field(sp, coeffs, t, rule.points)
        if exact is not None:
            diff -= np.asarray(exact(rule.points)).reshape(len(rule), -1)
        total += float(rule.weights @ np.sum(diff**2, axis=1))
    return math.sqrt(total)


@dataclass(eq=False)
class HodgeProblem:
    """Spaces, coboundaries, ghost Grams and harmonic forms of one mesh for one form degree."""

    k: int
    mesh: ActiveMesh
    spaces: dict[int, FESpace]
    coboundaries: dict[int, CoboundaryMatrix]
    grams: dict[int, GhostGram]
    stabilized: bool = True
    volume_degree: int = 2
    _harmonic: Optional[HarmonicBasis] = field(default=None, repr=False)

    def mass(self, degree: int) -> Optional[sps.csr_matrix]:
        gram = self.grams.get(degree)
        if gram is None:
            return None
        return gram.M_s if self.stabilized else gram.M_phys

    @property
    def harmonic(self) -> HarmonicBasis:
        if self._harmonic is None:
            self._harmonic = harmonic_basis(
                self.spaces[self.k],
                self.mass(self.k),
                self.coboundaries.get(self.k - 1),
                self.coboundaries.get(self.k),
            )
        return self._harmonic

    def assemble(self, f: FormField) -> MixedSystem:
        F = load_vector(self.spaces[self.k], f, self.volume_degree)
        return assemble_mixed(
            self.k,
            self.mass(self.k - 1),
            self.mass(self.k),
            self.mass(self.k + 1),
            self.coboundaries.get(self.k - 1),
            self.coboundaries.get(self.k),
            self.harmonic,
            F,
        )

    def solve(self, f: FormField) -> MixedSolution:
        start = time.perf_counter()
        sol = solve_mixed(self.assemble(f))
        log.info(
            f"solved k={self.k} ({'stabilized' if self.stabilized else 'unstabilized'}) "
            f"with {sol.system.A.shape[0]} unknowns in {time.perf_counter() - start:.2f}s"
        )
        return sol

    def lambda_field(self, sol: MixedSolution) -> np.ndarray:
        return self.harmonic.vectors @ sol.lambda_coeffs

    def s_norm(self, degree: int, coeffs: np.ndarray) -> float:
        M = self.mass(degree)
        assert M is not None
        return math.sqrt(max(float(coeffs @ (M @ coeffs)), 0.0))

    def unstabilized(self) -> "HodgeProblem":
        return HodgeProblem(
            self.k,
            self.mesh,
            self.spaces,
            self.coboundaries,
            self.grams,
            stabilized=False,
            volume_degree=self.volume_degree,
        )


def build_problem(
    mesh: ActiveMesh,
    k: int,
    eta: float,
    facet_set: FacetSet,
    delta: float,
    n_max: int,
    volume_degree: int = 2,
    facet_degree: int = 2,
    stabilized: bool = True,
) -> HodgeProblem:
    degrees = [d for d in (k - 1, k, k + 1) if 0 <= d <= 2]
    spaces = {d: build_space(mesh, d) for d in degrees}
    coboundaries = {
        d: coboundary(spaces[d], spaces[d + 1]) for d in degrees if d + 1 in spaces
    }
    grams = {
        d: ghost_gram(
            spaces[d],
            eta,
            facet_set,
            delta,
            n_max,
            volume_degree,
            facet_degree,
            check=stabilized,
        )
        for d in degrees
    }
    return HodgeProblem(k, mesh, spaces, coboundaries, grams, stabilized, volume_degree)


def problem_from_config(cfg: ExperimentConfig, m: int, epsilon: float = 0.0, stabilized: Optional[bool] = None) -> HodgeProblem:
    """HodgeProblem for an ExperimentConfig at resolution m and level-set offset epsilon."""
    bg = build_background(cfg.box(), m)
    mesh = classify(bg, cfg.level_set(epsilon), cfg.n_max)
    return build_problem(
        mesh,
        cfg.k,
        cfg.eta,
        cfg.facet_set,
        cfg.delta,
        cfg.n_max,
        cfg.quad_degree_volume,
        cfg.quad_degree_facet,
        cfg.stabilize if stabilized is None else stabilized,
    )


def compute_errors(
    problem: HodgeProblem,
    sol: MixedSolution,
    exact: ExactFields,
    degree: int = 4,
) -> ErrorRecord:
    """L2(Ω) errors of eta, d eta, sigma, d sigma and lambda; NaN for blocks absent at this degree."""
    k = problem.k
    sp_k = problem.spaces[k]

    e_eta = l2_error(sp_k, sol.eta, exact.eta, degree)
    if k + 1 in problem.spaces:
        d_eta = problem.coboundaries[k].matrix @ sol.eta
        e_deta = l2_error(problem.spaces[k + 1], d_eta, exact.d_eta, degree)
    else:
        e_deta = math.nan
    if k - 1 in problem.spaces:
        e_sigma = l2_error(problem.spaces[k - 1], sol.sigma, exact.sigma, degree)
        d_sigma = problem.coboundaries[k - 1].matrix @ sol.sigma
        e_dsigma = l2_error(sp_k, d_sigma, exact.d_sigma, degree)
    else:
        e_sigma = e_dsigma = math.nan
    e_lam = l2_error(sp_k, problem.lambda_field(sol), exact.lam, degree)
    return ErrorRecord(e_eta, e_deta, e_sigma, e_dsigma, e_lam)


@dataclass(frozen=True)
class HodgeDecomposition:
    n_dofs: int
    dim_kernel: int
    dim_exact: int
    dim_harmonic: int
    dim_coexact: int
    max_cosine: float

    @property
    def consistent(self) -> bool:
        return (
            self.dim_kernel == self.dim_exact + self.dim_harmonic
            and self.dim_kernel + self.dim_coexact == self.n_dofs
        )


def hodge_decomposition(problem: HodgeProblem) -> HodgeDecomposition:
    """Dimensions and mutual M-orthogonality of the coexact, exact and harmonic parts of V^k."""
    k = problem.k
    M = problem.mass(k).toarray()
    n = M.shape[0]

    D_k = problem.coboundaries.get(k)
    D_km1 = problem.coboundaries.get(k - 1)

    if D_k is not None:
        K, _ = _null_space(D_k.matrix.toarray().astype(float))
        dim_kernel = K.shape[1]
        # (Ker d)^⊥M = M^{-1} range(D_k^T)
        R = scipy.linalg.orth(D_k.matrix.toarray().T.astype(float))
        coexact = _m_orthonormal(scipy.linalg.solve(M, R, assume_a="pos"), M)
    else:
        dim_kernel = n
        coexact = np.zeros((n, 0))

    if D_km1 is not None:
        exact = _m_orthonormal(scipy.linalg.orth(D_km1.matrix.toarray().astype(float)), M)
    else:
        exact = np.zeros((n, 0))
    harmonic = problem.harmonic.vectors

    cos = 0.0
    parts = [coexact, exact, harmonic]
    for i in range(3):
        for j in range(i + 1, 3):
            if parts[i].shape[1] and parts[j].shape[1]:
                cos = max(cos, float(np.abs(parts[i].T @ M @ parts[j]).max()))

    return HodgeDecomposition(n, dim_kernel, exact.shape[1], harmonic.shape[1], coexact.shape[1], cos)


def divergence_defect(problem: HodgeProblem, sol: MixedSolution, f: FormField, degree: int = 4) -> float:
    """
    ||D sigma_h - Pi f||_M / ||f||_Ω at top degree, Pi the M-projection of f
    (source integrated over Ω) onto V^k.
    """
    k = problem.k
    if k - 1 not in problem.spaces or k + 1 in problem.spaces:
        raise ValueError("divergence reproduction applies to the top degree only")
    M = problem.mass(k)
    F = load_vector(problem.spaces[k], f, problem.volume_degree)
    proj = spla.spsolve(sps.csc_matrix(M), F)
    diff = problem.coboundaries[k - 1].matrix @ sol.sigma - proj
    f_norm = l2_error(problem.spaces[k], None, f, degree)
    if f_norm == 0:
        return math.sqrt(max(float(diff @ (M @ diff)), 0.0))
    return math.sqrt(max(float(diff @ (M @ diff)), 0.0)) / f_norm


def solve_manufactured(problem: HodgeProblem, manufactured: ManufacturedProblem) -> MixedSolution:
    if manufactured.k != problem.k:
        raise ValueError(f"problem {manufactured.name} is posed for k={manufactured.k}, mesh built for k={problem.k}")
    return problem.solve(manufactured.source)
