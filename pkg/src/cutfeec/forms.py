from typing import Sequence, Self, Union
from dataclasses import dataclass
from functools import lru_cache
import math

import numpy as np

from cutfeec.util import multi_indices, permutation_sign

MAX_DIM = 4


@lru_cache(maxsize=None)
def _index_table(n: int, k: int) -> tuple[tuple[tuple[int, ...], ...], dict[tuple[int, ...], int]]:
    if k < 0:
        return (), {}
    idx = tuple(multi_indices(n, k))
    return idx, {ix: pos for pos, ix in enumerate(idx)}


def dimension(n: int, k: int) -> int:
    """Dimension of Alt^k(R^n); zero outside 0 <= k <= n."""
    if k < 0 or k > n:
        return 0
    return math.comb(n, k)


@dataclass(frozen=True, order=True)
class MultiIndex:
    indices: tuple[int, ...]
    n: int

    def __post_init__(self):
        if any(i < 1 or i > self.n for i in self.indices):
            raise ValueError(f"multi-index {self.indices} out of range 1..{self.n}")
        if any(a >= b for a, b in zip(self.indices, self.indices[1:])):
            raise ValueError(f"multi-index {self.indices} is not strictly increasing")

    @property
    def degree(self) -> int:
        return len(self.indices)

    def complement(self) -> Self:
        return type(self)(
            tuple(i for i in range(1, self.n + 1) if i not in self.indices), self.n
        )

    def __str__(self) -> str:
        if not self.indices:
            return "1"
        return "^".join(f"dx{i}" for i in self.indices)


class AltForm:
    """
    Value of an alternating k-form at a point.

    Coefficients are stored densely, indexed by the lexicographically ordered
    increasing multi-indices of degree k. For k > n the space is {0} and the
    coefficient vector is empty.
    """

    __slots__ = ("n", "k", "coeffs")

    def __init__(self, n: int, k: int, coeffs: Union[Sequence[float], np.ndarray]):
        if n < 0 or n > MAX_DIM:
            raise ValueError(f"ambient dimension {n} not supported")
        if k < 0:
            raise ValueError(f"negative form degree {k}")
        arr = np.array(coeffs, dtype=float).reshape(-1)
        if arr.size != dimension(n, k):
            raise ValueError(
                f"Alt^{k}(R^{n}) has {dimension(n, k)} coefficients, got {arr.size}"
            )
        arr.flags.writeable = False
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "coeffs", arr)

    def __setattr__(self, name, value):
        raise AttributeError("AltForm is immutable")

    @classmethod
    def zero(cls, n: int, k: int) -> Self:
        return cls(n, k, np.zeros(dimension(n, k)))

    @classmethod
    def basis(cls, n: int, indices: Sequence[int]) -> Self:
        """The basis form dx^{i1} ^ ... ^ dx^{ik}; `indices` may be unsorted."""
        sign = permutation_sign(indices)
        k = len(indices)
        res = np.zeros(dimension(n, k))
        if sign != 0:
            _, pos = _index_table(n, k)
            res[pos[tuple(sorted(indices))]] = sign
        return cls(n, k, res)

    @classmethod
    def from_dict(cls, n: int, k: int, values: dict[tuple[int, ...], float]) -> Self:
        res = np.zeros(dimension(n, k))
        _, pos = _index_table(n, k)
        for ix, val in values.items():
            MultiIndex(ix, n)
            res[pos[ix]] = val
        return cls(n, k, res)

    def indices(self) -> list[MultiIndex]:
        idx, _ = _index_table(self.n, self.k)
        return [MultiIndex(ix, self.n) for ix in idx]

    def __getitem__(self, index: Union[MultiIndex, tuple[int, ...]]) -> float:
        ix = index.indices if isinstance(index, MultiIndex) else tuple(index)
        _, pos = _index_table(self.n, self.k)
        return float(self.coeffs[pos[ix]])

    def _check_same_space(self, other: "AltForm"):
        if not isinstance(other, AltForm):
            raise TypeError(f"expected AltForm, got {type(other).__name__}")
        if self.n != other.n or self.k != other.k:
            raise ValueError(
                f"Alt^{self.k}(R^{self.n}) and Alt^{other.k}(R^{other.n}) differ"
            )

    def __add__(self, other: "AltForm") -> "AltForm":
        self._check_same_space(other)
        return AltForm(self.n, self.k, self.coeffs + other.coeffs)

    def __sub__(self, other: "AltForm") -> "AltForm":
        self._check_same_space(other)
        return AltForm(self.n, self.k, self.coeffs - other.coeffs)

    def __neg__(self) -> "AltForm":
        return AltForm(self.n, self.k, -self.coeffs)

    def __mul__(self, scalar: float) -> "AltForm":
        return AltForm(self.n, self.k, scalar * self.coeffs)

    __rmul__ = __mul__

    def is_zero(self, atol: float = 0.0) -> bool:
        return bool(np.all(np.abs(self.coeffs) <= atol))

    def allclose(self, other: "AltForm", atol: float = 1e-12) -> bool:
        """Compare two forms; zero forms of any degree compare equal to each other."""
        if self.is_zero(atol) and other.is_zero(atol):
            return True
        if self.n != other.n or self.k != other.k:
            return False
        return bool(np.allclose(self.coeffs, other.coeffs, rtol=0.0, atol=atol))

    def evaluate(self, vectors: Sequence[Sequence[float]]) -> float:
        """Multilinear evaluation a(X_1, ..., X_k)."""
        if len(vectors) != self.k:
            raise ValueError(f"{self.k}-form evaluated on {len(vectors)} vectors")
        if self.k == 0:
            return float(self.coeffs[0])
        X = np.asarray(vectors, dtype=float)
        idx, _ = _index_table(self.n, self.k)
        cols = np.array(idx) - 1
        minors = np.linalg.det(X[:, cols].transpose(1, 0, 2))
        return float(minors @ self.coeffs)

    def __repr__(self) -> str:
        terms = [
            f"{c:+g} {ix}" for c, ix in zip(self.coeffs, self.indices()) if c != 0
        ]
        return f"AltForm(n={self.n}, k={self.k}, {' '.join(terms) or '0'})"


@lru_cache(maxsize=None)
def _wedge_table(n: int, k: int, l: int) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    idx_k, _ = _index_table(n, k)
    idx_l, _ = _index_table(n, l)
    _, pos_kl = _index_table(n, k + l)
    rows, cols, targets, signs = [], [], [], []
    for i, I in enumerate(idx_k):
        for j, J in enumerate(idx_l):
            sign = permutation_sign(I + J)
            if sign == 0:
                continue
            rows.append(i)
            cols.append(j)
            targets.append(pos_kl[tuple(sorted(I + J))])
            signs.append(sign)
    return (
        np.array(rows, dtype=int),
        np.array(cols, dtype=int),
        np.array(targets, dtype=int),
        np.array(signs, dtype=float),
    )


def wedge(a: AltForm, b: AltForm) -> AltForm:
    if a.n != b.n:
        raise ValueError(f"wedge of forms in R^{a.n} and R^{b.n}")
    if a.k + b.k > a.n:
        raise ValueError(f"wedge degree {a.k + b.k} exceeds dimension {a.n}")

    rows, cols, targets, signs = _wedge_table(a.n, a.k, b.k)
    res = np.zeros(dimension(a.n, a.k + b.k))
    np.add.at(res, targets, signs * a.coeffs[rows] * b.coeffs[cols])
    return AltForm(a.n, a.k + b.k, res)


@lru_cache(maxsize=None)
def _star_table(n: int, k: int) -> tuple[np.ndarray, np.ndarray]:
    idx, _ = _index_table(n, k)
    _, pos_c = _index_table(n, n - k)
    targets, signs = [], []
    for I in idx:
        comp = tuple(i for i in range(1, n + 1) if i not in I)
        targets.append(pos_c[comp])
        signs.append(permutation_sign(I + comp))
    return np.array(targets, dtype=int), np.array(signs, dtype=float)


def hodge_star(a: AltForm, orientation: int = 1) -> AltForm:
    """Euclidean Hodge star, `a ^ *b = <a, b> vol`; `orientation=-1` reverses vol."""
    if a.k > a.n:
        raise ValueError(f"no Hodge star on Alt^{a.k}(R^{a.n})")
    targets, signs = _star_table(a.n, a.k)
    res = np.zeros(dimension(a.n, a.n - a.k))
    res[targets] = orientation * signs * a.coeffs
    return AltForm(a.n, a.n - a.k, res)


def inner(a: AltForm, b: AltForm) -> float:
    if a.n != b.n or a.k != b.k:
        raise ValueError(
            f"inner product of Alt^{a.k}(R^{a.n}) and Alt^{b.k}(R^{b.n})"
        )
    return float(a.coeffs @ b.coeffs)


@lru_cache(maxsize=None)
def _contract_table(n: int, k: int) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    idx, _ = _index_table(n, k)
    _, pos = _index_table(n, k - 1)
    src, dst, comp, signs = [], [], [], []
    for i, I in enumerate(idx):
        for p, ip in enumerate(I):
            src.append(i)
            dst.append(pos[I[:p] + I[p + 1 :]])
            comp.append(ip - 1)
            signs.append(-1.0 if p % 2 else 1.0)
    return (
        np.array(src, dtype=int),
        np.array(dst, dtype=int),
        np.array(comp, dtype=int),
        np.array(signs),
    )


def contract(v: Sequence[float], a: AltForm) -> AltForm:
    """Interior product: (v ⌐ a)(X_2, ..., X_k) = a(v, X_2, ..., X_k)."""
    if a.k == 0:
        raise ValueError("cannot contract a 0-form")
    vec = np.asarray(v, dtype=float)
    if vec.shape != (a.n,):
        raise ValueError(f"vector of shape {vec.shape} in R^{a.n}")

    src, dst, comp, signs = _contract_table(a.n, a.k)
    res = np.zeros(dimension(a.n, a.k - 1))
    np.add.at(res, dst, signs * vec[comp] * a.coeffs[src])
    return AltForm(a.n, a.k - 1, res)


def compound_matrix(rows: np.ndarray, k: int) -> np.ndarray:
    """
    k-th compound of a (p, n) matrix: entry (J, I) is the minor on rows J, columns I.

    For `rows` holding vectors X_1..X_p it maps coefficients of a k-form in R^n to
    the coefficients of its pullback along x -> sum_j s_j X_j.
    """
    p, n = rows.shape
    idx_p, _ = _index_table(p, k)
    idx_n, _ = _index_table(n, k)
    if k == 0:
        return np.ones((1, 1))
    if not idx_p or not idx_n:
        return np.zeros((len(idx_p), len(idx_n)))
    J = np.array(idx_p) - 1
    I = np.array(idx_n) - 1
    sub = rows[J[:, None, :, None], I[None, :, None, :]]
    return np.linalg.det(sub)


@dataclass(frozen=True, eq=False)
class FacetFrame:
    normal: np.ndarray
    tangents: np.ndarray
    origin: np.ndarray

    def __post_init__(self):
        n = self.normal.shape[0]
        basis = self.basis
        if self.tangents.shape != (n - 1, n):
            raise ValueError(f"expected {n - 1} tangents in R^{n}")
        if not np.allclose(basis @ basis.T, np.eye(n), atol=1e-12):
            raise ValueError("facet frame is not orthonormal")

    @property
    def n(self) -> int:
        return self.normal.shape[0]

    @property
    def basis(self) -> np.ndarray:
        """Rows normal, t_1, ..., t_{n-1}."""
        return np.vstack([self.normal[None, :], self.tangents])

    @property
    def orientation(self) -> int:
        return 1 if np.linalg.det(self.basis) > 0 else -1

    @classmethod
    def from_normal(cls, normal: Sequence[float], origin: Sequence[float] | None = None) -> Self:
        """Frame completing `normal` by a Householder QR of `[normal | I]`."""
        nv = np.asarray(normal, dtype=float)
        nv = nv / np.linalg.norm(nv)
        n = nv.shape[0]
        # the first column of Q is ±normal, the remaining ones span its complement
        Q, _ = np.linalg.qr(np.column_stack([nv, np.eye(n)]))
        org = np.zeros(n) if origin is None else np.asarray(origin, dtype=float)
        return cls(nv, np.ascontiguousarray(Q[:, 1:].T), org)

    @classmethod
    def from_points(cls, points: Sequence[Sequence[float]], normal: Sequence[float] | None = None) -> Self:
        """
        Frame of the hyperplane through n points, tangents by Gram-Schmidt in
        vertex order. Without `normal`, the normal completes a positive basis.
        """
        pts = np.asarray(points, dtype=float)
        n = pts.shape[1]
        if pts.shape[0] != n:
            raise ValueError(f"a hyperplane in R^{n} needs {n} points")
        tangents: list[np.ndarray] = []
        for p in pts[1:]:
            w = p - pts[0]
            for t in tangents:
                w = w - (w @ t) * t
            tangents.append(w / np.linalg.norm(w))
        T = np.array(tangents).reshape(n - 1, n)

        if normal is None:
            # cofactor expansion gives the vector completing T to a positive basis
            nv = np.array(
                [
                    (-1) ** i * np.linalg.det(np.delete(T, i, axis=1))
                    for i in range(n)
                ]
            )
        else:
            nv = np.asarray(normal, dtype=float)
            nv = nv - T.T @ (T @ nv)
        nv = nv / np.linalg.norm(nv)
        return cls(nv, T, pts[0].copy())

    def to_facet(self, v: Sequence[float]) -> np.ndarray:
        return self.tangents @ (np.asarray(v, dtype=float) - self.origin)

    def to_ambient(self, w: Sequence[float]) -> np.ndarray:
        return self.origin + np.asarray(w, dtype=float) @ self.tangents


def facet_star(a: AltForm, frame: FacetFrame) -> AltForm:
    """Hodge star on forms in facet coordinates, oriented by the frame."""
    if a.n != frame.n - 1:
        raise ValueError(f"facet forms live in R^{frame.n - 1}, got R^{a.n}")
    return hodge_star(a, frame.orientation)


def trace(a: AltForm, frame: FacetFrame) -> AltForm:
    """Pullback of `a` along the inclusion of the facet, in facet coordinates."""
    if a.n != frame.n:
        raise ValueError(f"frame in R^{frame.n} for a form in R^{a.n}")
    if a.k > a.n - 1:
        return AltForm.zero(a.n - 1, a.k)
    P = compound_matrix(frame.tangents, a.k)
    return AltForm(a.n - 1, a.k, P @ a.coeffs)


def normal_trace(a: AltForm, frame: FacetFrame) -> AltForm:
    """Trace of the contraction with the unit normal; the zero 0-form for k = 0."""
    if a.k == 0:
        return AltForm.zero(a.n - 1, 0)
    return trace(contract(frame.normal, a), frame)


def split_parts(a: AltForm, frame: FacetFrame) -> tuple[AltForm, AltForm]:
    """Tangential and normal parts (a_par, a_perp) of `a`, both in ambient coordinates."""
    if a.n != frame.n:
        raise ValueError(f"frame in R^{frame.n} for a form in R^{a.n}")
    if a.k == 0:
        return a, AltForm.zero(a.n, 0)

    # adapted coordinates: index 1 is the normal direction
    M = compound_matrix(frame.basis, a.k)
    adapted = M @ a.coeffs
    idx, _ = _index_table(a.n, a.k)
    perp_mask = np.array([1 in ix for ix in idx])
    par = M.T @ np.where(perp_mask, 0.0, adapted)
    perp = M.T @ np.where(perp_mask, adapted, 0.0)
    return AltForm(a.n, a.k, par), AltForm(a.n, a.k, perp)


def to_proxy(a: AltForm) -> Union[float, np.ndarray]:
    """Scalar or vector proxy of a form in R^3."""
    if a.n != 3:
        raise ValueError(f"vector proxies are defined in R^3, got R^{a.n}")
    c = a.coeffs
    match a.k:
        case 0 | 3:
            return float(c[0])
        case 1:
            return c.copy()
        case 2:
            # order (1,2), (1,3), (2,3)
            return np.array([c[2], -c[1], c[0]])
        case _:
            raise ValueError(f"invalid form degree {a.k}")


def from_proxy(value: Union[float, Sequence[float]], k: int) -> AltForm:
    match k:
        case 0 | 3:
            return AltForm(3, k, [float(value)])  # type: ignore[arg-type]
        case 1:
            return AltForm(3, 1, value)  # type: ignore[arg-type]
        case 2:
            w = np.asarray(value, dtype=float)
            return AltForm(3, 2, [w[2], -w[1], w[0]])
        case _:
            raise ValueError(f"invalid form degree {k}")
