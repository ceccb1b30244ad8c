import numpy as np
import pytest

from cutfeec.forms import (
    AltForm,
    FacetFrame,
    MultiIndex,
    contract,
    dimension,
    facet_star,
    from_proxy,
    hodge_star,
    inner,
    normal_trace,
    split_parts,
    to_proxy,
    trace,
    wedge,
)

from . import random_form, random_frame

TOL = 1e-12
N_CASES = 1000


def dx(n: int, *indices: int) -> AltForm:
    return AltForm.basis(n, indices)


@pytest.mark.parametrize(
    "n,k,expected",
    [(2, 0, 1), (2, 1, 2), (2, 2, 1), (2, 3, 0), (3, 1, 3), (3, 2, 3), (3, 3, 1), (3, -1, 0)],
)
def test_dimension(n: int, k: int, expected: int):
    assert dimension(n, k) == expected


def test_multi_index():
    mi = MultiIndex((1, 3), 3)
    assert mi.degree == 2
    assert mi.complement() == MultiIndex((2,), 3)
    assert str(mi) == "dx1^dx3"
    with pytest.raises(ValueError):
        MultiIndex((3, 1), 3)
    with pytest.raises(ValueError):
        MultiIndex((0,), 3)


def test_basis_sign():
    assert dx(3, 2, 1).allclose(-dx(3, 1, 2))
    assert dx(3, 1, 1).is_zero()
    assert AltForm.from_dict(3, 2, {(1, 3): 2.0})[(1, 3)] == 2.0


def test_immutable():
    a = dx(2, 1)
    with pytest.raises(AttributeError):
        a.k = 2  # type: ignore[misc]
    with pytest.raises(ValueError):
        a.coeffs[0] = 3.0


def test_arithmetic():
    a = AltForm(2, 1, [1.0, 2.0])
    b = AltForm(2, 1, [0.5, -1.0])
    assert (a + b).allclose(AltForm(2, 1, [1.5, 1.0]))
    assert (a - b).allclose(AltForm(2, 1, [0.5, 3.0]))
    assert (2 * a).allclose(a * 2.0)
    assert (-a + a).is_zero()
    with pytest.raises(ValueError):
        a + AltForm(2, 2, [1.0])


@pytest.mark.parametrize(
    "a,b,expected",
    [
        (dx(2, 1), dx(2, 2), dx(2, 1, 2)),
        (dx(2, 2), dx(2, 1), -dx(2, 1, 2)),
        (dx(3, 1), dx(3, 2, 3), dx(3, 1, 2, 3)),
        (dx(3, 2), dx(3, 1, 3), -dx(3, 1, 2, 3)),
        (dx(3, 1), dx(3, 1), AltForm.zero(3, 2)),
        (AltForm(3, 0, [3.0]), dx(3, 2), 3.0 * dx(3, 2)),
    ],
)
def test_wedge(a: AltForm, b: AltForm, expected: AltForm):
    assert wedge(a, b).allclose(expected)


def test_wedge_errors():
    with pytest.raises(ValueError):
        wedge(dx(2, 1), dx(3, 1))
    with pytest.raises(ValueError):
        wedge(dx(2, 1, 2), dx(2, 1))


@pytest.mark.parametrize(
    "a,expected",
    [
        (AltForm(2, 0, [1.0]), dx(2, 1, 2)),
        (dx(2, 1), dx(2, 2)),
        (dx(2, 2), -dx(2, 1)),
        (dx(3, 1), dx(3, 2, 3)),
        (dx(3, 2), -dx(3, 1, 3)),
        (dx(3, 3), dx(3, 1, 2)),
        (dx(3, 1, 2, 3), AltForm(3, 0, [1.0])),
    ],
)
def test_hodge_star(a: AltForm, expected: AltForm):
    assert hodge_star(a).allclose(expected)
    assert hodge_star(a, orientation=-1).allclose(-expected)


def test_hodge_star_degree_error():
    with pytest.raises(ValueError):
        hodge_star(AltForm.zero(2, 3))


def test_contract_and_evaluate():
    assert contract([1.0, 0.0], dx(2, 1, 2)).allclose(dx(2, 2))
    assert contract([0.0, 1.0], dx(2, 1, 2)).allclose(-dx(2, 1))
    assert dx(3, 1, 2).evaluate([[1, 0, 0], [0, 1, 0]]) == pytest.approx(1.0)
    assert dx(3, 1, 2).evaluate([[0, 1, 0], [1, 0, 0]]) == pytest.approx(-1.0)
    with pytest.raises(ValueError):
        contract([1.0, 0.0], AltForm(2, 0, [1.0]))


@pytest.mark.parametrize(
    "form,proxy",
    [
        (AltForm(3, 0, [2.0]), 2.0),
        (AltForm(3, 1, [1.0, 2.0, 3.0]), [1.0, 2.0, 3.0]),
        # (12), (13), (23) -> (w_1, w_2, w_3) = (c_23, -c_13, c_12)
        (AltForm(3, 2, [1.0, 2.0, 3.0]), [3.0, -2.0, 1.0]),
        (AltForm(3, 3, [4.0]), 4.0),
    ],
)
def test_proxy(form: AltForm, proxy):
    assert np.allclose(to_proxy(form), proxy)
    assert from_proxy(proxy, form.k).allclose(form)


def test_frame_from_points():
    frame = FacetFrame.from_points([[0.0, 0.0], [1.0, 0.0]])
    assert np.allclose(frame.tangents, [[1.0, 0.0]])
    assert frame.orientation == 1
    assert np.allclose(frame.to_facet([2.0, 0.0]), [2.0])
    assert np.allclose(frame.to_ambient([0.5]), [0.5, 0.0])

    flipped = FacetFrame.from_points([[0.0, 0.0], [1.0, 0.0]], normal=[0.0, 1.0])
    assert np.allclose(flipped.normal, [0.0, 1.0])
    assert flipped.orientation == -1

    with pytest.raises(ValueError):
        FacetFrame(np.array([1.0, 0.0]), np.array([[1.0, 0.0]]), np.zeros(2))


def test_trace_proxies_3d():
    # normal trace of a 1-form is v . n, trace of a 2-form is w . n
    frame = FacetFrame.from_normal([0.0, 0.0, 1.0])
    v = from_proxy([1.0, 2.0, 3.0], 1)
    assert normal_trace(v, frame).coeffs[0] == pytest.approx(3.0)
    w = from_proxy([1.0, 2.0, 3.0], 2)
    assert abs(trace(w, frame).coeffs[0]) == pytest.approx(3.0)
    assert normal_trace(AltForm(3, 0, [1.0]), frame).is_zero()


@pytest.mark.parametrize(
    "normal",
    [
        [1.0, 1e-6, 0.0],
        [1.0, 0.0, 3e-7],
        [1.0, 2e-6, 5e-7],
        [0.0, -1.0, 1e-9],
        [1e-8, 1.0],
        [0.0, 0.0, -1.0],
    ],
)
def test_frame_from_near_axis_normal(normal: list[float]):
    frame = FacetFrame.from_normal(normal)
    n = len(normal)
    assert np.allclose(frame.normal, np.asarray(normal) / np.linalg.norm(normal))
    assert np.allclose(frame.basis @ frame.basis.T, np.eye(n), atol=1e-14)


def test_frame_from_random_normals():
    rng = np.random.default_rng(0)
    for normal in rng.normal(size=(20000, 3)):
        frame = FacetFrame.from_normal(normal)
        assert np.allclose(frame.tangents @ frame.normal, 0.0, atol=1e-14)


CASES = [(n, k) for n in (2, 3) for k in range(n + 1)]


@pytest.mark.timeout(5)
@pytest.mark.parametrize("n,k", CASES)
def test_trace_relations(n: int, k: int):
    """star_F normal_trace = trace star and normal_trace star = (-1)^k star_F trace."""
    rng = np.random.default_rng(1000 * n + k)
    for _ in range(N_CASES):
        a = random_form(rng, n, k)
        frame = random_frame(rng, n)

        lhs = facet_star(normal_trace(a, frame), frame) if k > 0 else AltForm.zero(n - 1, n - 1)
        assert lhs.allclose(trace(hodge_star(a), frame), TOL)

        if k < n:
            rhs = (-1) ** k * facet_star(trace(a, frame), frame)
            assert normal_trace(hodge_star(a), frame).allclose(rhs, TOL)
        else:
            assert trace(a, frame).is_zero()
            assert normal_trace(hodge_star(a), frame).is_zero()


@pytest.mark.timeout(5)
@pytest.mark.parametrize("n,k", CASES)
def test_parts(n: int, k: int):
    rng = np.random.default_rng(2000 * n + k)
    for _ in range(N_CASES):
        a = random_form(rng, n, k)
        frame = random_frame(rng, n)
        par, perp = split_parts(a, frame)

        assert (par + perp).allclose(a, TOL)
        # the parallel part is seen by the trace only, the normal part by the normal trace only
        assert trace(perp, frame).is_zero(TOL)
        assert normal_trace(par, frame).is_zero(TOL)
        assert trace(par, frame).allclose(trace(a, frame), TOL)
        assert inner(par, par) == pytest.approx(inner(trace(a, frame), trace(a, frame)), abs=TOL)
        assert inner(par, perp) == pytest.approx(0.0, abs=TOL)

        star_par, star_perp = split_parts(hodge_star(a), frame)
        assert star_par.allclose(hodge_star(perp), TOL)
        assert star_perp.allclose(hodge_star(par), TOL)

        b = random_form(rng, n, n - k)
        b_par, b_perp = split_parts(b, frame)
        assert wedge(par, b_par).is_zero(TOL)
        assert wedge(perp, b_perp).is_zero(TOL)


@pytest.mark.timeout(5)
@pytest.mark.parametrize("n,k", CASES)
def test_star_identities(n: int, k: int):
    rng = np.random.default_rng(3000 * n + k)
    for _ in range(N_CASES // 10):
        a = random_form(rng, n, k)
        b = random_form(rng, n, k)
        frame = random_frame(rng, n)

        assert hodge_star(hodge_star(a)).allclose((-1) ** (k * (n - k)) * a, TOL)
        vol = wedge(a, hodge_star(b)).coeffs[0]
        assert vol == pytest.approx(inner(a, b), abs=TOL)

        if k < n:
            t = trace(a, frame)
            sign = (-1) ** (k * (n - 1 - k))
            assert facet_star(facet_star(t, frame), frame).allclose(sign * t, TOL)
