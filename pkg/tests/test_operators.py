import numpy as np
import pytest
from hypothesis import given, strategies as st

from dissipchaos.errors import DimensionError
from dissipchaos.operators import (
    HilbertSpace,
    Operator,
    annihilation,
    coherent_state,
    commutator,
    devectorize,
    embed,
    left_mult_superop,
    number,
    pauli,
    right_mult_superop,
    sandwich_superop,
    vectorize,
)

from conftest import random_matrix


def test_hilbert_space_dims():
    s = HilbertSpace([3, 4, 2])
    assert s.total_dim == 24 and s.n_factors == 3
    with pytest.raises(DimensionError):
        HilbertSpace([])
    with pytest.raises(DimensionError):
        HilbertSpace([2, 0])


def test_annihilation_entries():
    a = annihilation(3).dense()
    expect = np.zeros((3, 3))
    expect[0, 1], expect[1, 2] = 1.0, np.sqrt(2.0)
    np.testing.assert_array_equal(a, expect)
    with pytest.raises(DimensionError):
        annihilation(1)


def test_truncated_commutator():
    a = annihilation(10)
    c = commutator(a, a.dag()).dense()
    np.testing.assert_allclose(np.diag(c)[:9], 1.0)
    assert c[9, 9] == pytest.approx(-9.0)


def test_ladder_action_and_number():
    a = annihilation(4)
    np.testing.assert_allclose(a.apply(np.eye(4)[1]), np.eye(4)[0])
    np.testing.assert_allclose((a.dag() @ a).dense(), np.diag(np.arange(4.0)))
    np.testing.assert_allclose(number(4).dense(), np.diag(np.arange(4.0)))


def test_embed_matches_kron():
    space = HilbertSpace([3, 3])
    a = annihilation(3)
    np.testing.assert_allclose(embed(a, 0, space).dense(), np.kron(a.dense(), np.eye(3)))
    n = a.dag() @ a
    assert embed(n, 0, space).trace() == pytest.approx(3 * n.trace())
    s2 = HilbertSpace([2, 2])
    z0, z1 = embed(pauli("z"), 0, s2), embed(pauli("z"), 1, s2)
    assert np.abs(commutator(z0, z1).dense()).max() == 0
    with pytest.raises(DimensionError):
        embed(a, 2, space)
    with pytest.raises(DimensionError):
        embed(pauli("x"), 0, space)


@given(st.integers(2, 4), st.integers(0, 2), st.integers(0, 2**31 - 1))
def test_embed_preserves_spectrum(d, site, seed):
    rng = np.random.default_rng(seed)
    dims = [2, 3, d]
    h = random_matrix(dims[site], rng)
    h = h + h.conj().T
    op = Operator(HilbertSpace(dims[site]), h)
    big = embed(op, site, HilbertSpace(dims))
    mult = 2 * 3 * d // dims[site]
    expect = np.sort(np.repeat(np.linalg.eigvalsh(h), mult))
    np.testing.assert_allclose(np.sort(np.linalg.eigvalsh(big.dense())), expect, atol=1e-10)


def test_vectorize_roundtrip_and_zero(rng):
    m = random_matrix(4, rng)
    np.testing.assert_array_equal(devectorize(vectorize(m)).dense(), m)
    assert not np.any(vectorize(np.zeros((3, 3))))
    with pytest.raises(DimensionError):
        devectorize(np.zeros(5))
    with pytest.raises(DimensionError):
        vectorize(np.zeros((2, 3)))


@given(st.integers(1, 6), st.integers(0, 2**31 - 1))
def test_sandwich_identity(d, seed):
    rng = np.random.default_rng(seed)
    A, B, rho = (random_matrix(d, rng) for _ in range(3))
    sp_ = HilbertSpace(d)
    S = sandwich_superop(Operator(sp_, A), Operator(sp_, B))
    out = devectorize(S @ vectorize(rho)).dense()
    ref = A @ rho @ B
    assert np.linalg.norm(out - ref) <= 1e-12 * np.linalg.norm(ref)


def test_left_right_compose_to_sandwich(rng):
    sp_ = HilbertSpace(3)
    A, B = Operator(sp_, random_matrix(3, rng)), Operator(sp_, random_matrix(3, rng))
    comp = (left_mult_superop(A).matrix @ right_mult_superop(B).matrix).toarray()
    np.testing.assert_allclose(comp, sandwich_superop(A, B).dense(), atol=1e-12)
    eye = sp_.identity()
    np.testing.assert_allclose(sandwich_superop(eye, eye).dense(), np.eye(9))


def test_left_mult_then_trace(rng):
    sp_ = HilbertSpace(4)
    P = random_matrix(4, rng)
    P = Operator(sp_, P + P.conj().T)
    rho = random_matrix(4, rng)
    v = left_mult_superop(P) @ vectorize(rho)
    assert np.trace(devectorize(v).dense()) == pytest.approx(np.trace(rho @ P.dense()))


def test_coherent_state_moments():
    psi = coherent_state(1.2 - 0.5j, 60)
    assert np.linalg.norm(psi) == pytest.approx(1.0)
    a = annihilation(60).dense()
    assert psi.conj() @ a @ psi == pytest.approx(1.2 - 0.5j, abs=1e-12)
    np.testing.assert_allclose(coherent_state(0, 5), np.eye(5)[0])


def test_operator_hermiticity_predicate():
    x = pauli("x")
    assert x.is_hermitian()
    assert not pauli("+").is_hermitian()
    assert (x * 2.0).dense()[0, 1] == 2.0
    with pytest.raises(DimensionError):
        Operator(HilbertSpace(3), np.eye(2))
