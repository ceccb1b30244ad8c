import numpy as np
import pytest

from cutfeec.forms import AltForm, normal_trace, trace
from cutfeec.geometry import ActiveMesh, build_background, classify
from cutfeec.model.enums import Region
from cutfeec.model.util import Box
from cutfeec.quadrature import facet_rule
from cutfeec.spaces import (
    basis_values,
    build_space,
    coboundary,
    dof_functionals,
    eval_basis,
    eval_monomials,
    evaluate_field,
    exterior_derivative_table,
    interpolate,
    load_vector,
    local_mass,
    mass_matrix,
)

from . import annulus, disk, everywhere, mesh

UNIT = Box(0.0, 1.0, 0.0, 1.0)


def single_cell() -> ActiveMesh:
    """Unit square split into triangles (0,0),(1,0),(1,1) and (0,0),(1,1),(0,1)."""
    return classify(build_background(UNIT, 1), everywhere())


MESHES = {
    "everywhere": lambda: mesh(everywhere(), 4),
    "disk": lambda: mesh(disk(), 8),
    "disk-shifted": lambda: mesh(disk(1e-3), 8),
    "annulus": lambda: mesh(annulus(), 8),
}


@pytest.mark.parametrize("k,n_dofs", [(0, 9), (1, 16), (2, 8)])
def test_dof_counts(k: int, n_dofs: int):
    am = mesh(everywhere(), 2)
    assert build_space(am, k).n_dofs == n_dofs


def test_build_space_errors():
    am = single_cell()
    with pytest.raises(ValueError):
        build_space(am, 3)
    with pytest.raises(ValueError):
        build_space(am, 1, r=2)


@pytest.mark.parametrize("name", MESHES)
@pytest.mark.parametrize("k", [0, 1, 2])
def test_unisolvence(name: str, k: int):
    sp = build_space(MESHES[name](), k, check=False)
    for t in sp.local_basis:
        assert np.allclose(dof_functionals(sp, t), np.eye(len(sp.local(t).dofs)), atol=1e-12)


def test_partition_of_unity():
    rng = np.random.default_rng(0)
    sp = build_space(mesh(disk(), 8), 0)
    for t in list(sp.local_basis)[:20]:
        bary = rng.dirichlet(np.ones(3), size=10)
        vals = basis_values(sp, t, bary @ sp.mesh.parent.coords(t))
        assert np.allclose(vals.sum(axis=1), 1.0, atol=1e-14)


def test_edge_form_on_its_edge():
    sp = build_space(single_cell(), 1)
    bg = sp.mesh.parent
    for t in (0, 1):
        local = sp.local(t)
        for i, dof in enumerate(local.dofs):
            lo, hi = bg.edges[sp.entities[dof]]
            p_lo, p_hi = bg.vertices[lo], bg.vertices[hi]
            length = np.linalg.norm(p_hi - p_lo)
            value = basis_values(sp, t, (0.5 * (p_lo + p_hi))[None, :])[0, i]
            assert value @ (p_hi - p_lo) / length == pytest.approx(1.0 / length)


def test_area_form():
    sp = build_space(mesh(everywhere(), 4), 2)
    area = sp.mesh.parent.areas[0]
    assert np.allclose(sp.local(0).coeffs[0, 0], [1.0 / area, 0.0, 0.0])


def test_eval_basis_derivatives():
    sp = build_space(single_cell(), 0)
    normal = np.array([0.6, 0.8])
    x = [0.7, 0.2]
    assert all(f.is_zero() for f in eval_basis(sp, 0, x, ell=2, normal=normal))

    # hats of (0,0), (1,0), (1,1) on the lower triangle: 1 - x, x - y, y
    grads = [np.array([-1.0, 0.0]), np.array([1.0, -1.0]), np.array([0.0, 1.0])]
    for x in ([0.7, 0.2], [3.0, -1.0]):
        values = eval_basis(sp, 0, x, ell=1, normal=normal)
        assert [v.coeffs[0] for v in values] == pytest.approx([g @ normal for g in grads])
    with pytest.raises(ValueError):
        eval_basis(sp, 0, x, ell=1)


@pytest.mark.parametrize("name", MESHES)
def test_complex_property(name: str):
    am = MESHES[name]()
    sp0, sp1, sp2 = (build_space(am, k) for k in range(3))
    D0 = coboundary(sp0, sp1).matrix
    D1 = coboundary(sp1, sp2).matrix
    assert D0.dtype == np.int64 and D1.dtype == np.int64
    assert (D1 @ D0).count_nonzero() == 0
    # connected active mesh: only constants are closed 0-forms
    assert np.linalg.matrix_rank(D0.toarray()) == sp0.n_dofs - 1


def test_coboundary_errors():
    am = single_cell()
    sp0, sp2 = build_space(am, 0), build_space(am, 2)
    with pytest.raises(ValueError):
        coboundary(sp0, sp2)
    with pytest.raises(ValueError):
        coboundary(sp0, build_space(single_cell(), 1))


@pytest.mark.parametrize("k", [0, 1])
def test_coboundary_pointwise(k: int):
    rng = np.random.default_rng(k)
    am = mesh(disk(), 8)
    sp_k, sp_k1 = build_space(am, k), build_space(am, k + 1)
    D = coboundary(sp_k, sp_k1).matrix
    c = rng.normal(size=sp_k.n_dofs)
    dc = D @ c
    for t in sp_k.local_basis:
        points = rng.dirichlet(np.ones(3), size=4) @ am.parent.coords(t)
        local = sp_k.local(t)
        table = exterior_derivative_table(local.coeffs, k, sp_k.r)
        expected = np.einsum("lcm,qm,l->qc", table, eval_monomials(points, sp_k.r), c[local.dofs])
        assert np.allclose(evaluate_field(sp_k1, dc, t, points), expected, atol=1e-12)


def test_p1_mass():
    sp = build_space(single_cell(), 0)
    area = sp.mesh.parent.areas[0]
    expected = area / 12 * np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]])
    assert np.allclose(local_mass(sp, 0, Region.ACTIVE), expected, atol=1e-15)
    assert np.allclose(local_mass(sp, 0, Region.PHYSICAL), expected, atol=1e-15)


@pytest.mark.parametrize("k", [0, 1, 2])
def test_mass_matrices(k: int):
    sp = build_space(mesh(disk(), 8), k)
    M_phys = mass_matrix(sp, Region.PHYSICAL)
    M_active = mass_matrix(sp, Region.ACTIVE)
    assert (M_phys != M_phys.T).nnz == 0
    assert (M_active != M_active.T).nnz == 0
    assert np.all(M_phys.diagonal() <= M_active.diagonal() + 1e-15)
    assert np.linalg.eigvalsh(M_active.toarray())[0] > 0

    # DOFs supported on immersed triangles only see identical entries
    cut = set(sp.mesh.cut)
    touched = {int(d) for t in cut for d in sp.local(t).dofs}
    inner_dofs = [i for i in range(sp.n_dofs) if i not in touched]
    assert inner_dofs
    sub = np.ix_(inner_dofs, inner_dofs)
    assert np.allclose(M_phys.toarray()[sub], M_active.toarray()[sub], atol=1e-15)


@pytest.mark.parametrize("k", [0, 1, 2])
def test_jump_characterisation(k: int):
    rng = np.random.default_rng(10 + k)
    am = mesh(disk(1e-3), 8)
    sp = build_space(am, k)
    c = rng.normal(size=sp.n_dofs)
    jump_seen = 0.0
    for e in am.stab_facets:
        facet = am.facet(e)
        points = facet_rule(facet.points, 2).points
        jumps = evaluate_field(sp, c, facet.from_tri, points) - evaluate_field(sp, c, facet.to_tri, points)
        for j in jumps:
            form = AltForm(2, k, j)
            assert trace(form, facet.frame).is_zero(1e-12)
            jump_seen = max(jump_seen, abs(normal_trace(form, facet.frame).coeffs).max(initial=0.0))
            if k == 1:
                # jump of the proxy is normal to the facet
                assert np.allclose(j, (j @ facet.normal) * facet.normal, atol=1e-12)
    if k == 0:
        assert jump_seen == 0.0
    else:
        assert jump_seen > 1e-6


@pytest.mark.parametrize("k", [0, 1, 2])
def test_interpolate_reproduces_polynomials(k: int):
    rng = np.random.default_rng(20 + k)
    sp = build_space(mesh(annulus(), 8), k)
    match k:
        case 0:
            def field(x):
                return (1.0 + 2.0 * x[:, 0] - 3.0 * x[:, 1])[:, None]
        case 1:
            def field(x):
                return np.tile([0.5, -2.0], (x.shape[0], 1))
        case _:
            def field(x):
                return np.full((x.shape[0], 1), 3.0)

    c = interpolate(sp, field)
    for t in list(sp.local_basis)[:30]:
        points = rng.dirichlet(np.ones(3), size=5) @ sp.mesh.parent.coords(t)
        assert np.allclose(evaluate_field(sp, c, t, points), field(points), atol=1e-12)


def test_load_vector_constant():
    am = mesh(disk(), 8)
    sp = build_space(am, 0)
    F = load_vector(sp, lambda x: np.ones((x.shape[0], 1)))
    assert F.sum() == pytest.approx(am.physical_measure())
    sp2 = build_space(am, 2)
    F2 = load_vector(sp2, lambda x: np.ones((x.shape[0], 1)))
    # unit-integral area forms: F_T = |T ∩ Ω| / |T|
    assert np.allclose(F2, [am.cut_fractions[int(t)] for t in sp2.entities])
