import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import random_density, random_matrix
from dissipchaos.cache import cache_path, cached_spectrum, load_spectrum, save_spectrum, CacheCorruptError
from dissipchaos.errors import MultipleSteadyStatesError, ResourceGuardError
from dissipchaos.liouvillian import (
    assemble,
    diagonalize,
    eigenvalues_from_csv,
    eigenvalues_to_csv,
    propagate,
    reconstruct,
    solve_steady_state,
    spectral_weights,
    steady_state,
)
from dissipchaos.models import (
    BoseHubbardParams,
    ModelSpec,
    RandomLiouvillianParams,
    build_bose_hubbard,
    build_kerr_resonator,
    build_random_liouvillian,
)
from dissipchaos.operators import HilbertSpace, Operator, annihilation, number, vectorize


def damped_oscillator(omega=1.3, kappa=0.7, cutoff=5):
    a = annihilation(cutoff + 1)
    space = a.space
    return ModelSpec(space, number(cutoff + 1) * omega, ((a, kappa),))


def lindblad_rhs(model, rho):
    H = model.hamiltonian.dense()
    out = -1j * (H @ rho - rho @ H)
    for op, rate in model.jumps:
        A = op.dense()
        AdA = A.conj().T @ A
        out += rate * (A @ rho @ A.conj().T - 0.5 * (AdA @ rho + rho @ AdA))
    return out


def rk4(model, rho, t, n):
    h = t / n
    for _ in range(n):
        k1 = lindblad_rhs(model, rho)
        k2 = lindblad_rhs(model, rho + 0.5 * h * k1)
        k3 = lindblad_rhs(model, rho + 0.5 * h * k2)
        k4 = lindblad_rhs(model, rho + h * k3)
        rho = rho + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return rho


@pytest.fixture(scope="module")
def kerr():
    return build_kerr_resonator(delta=1.0, U=0.8, F=1.2, gamma=1.0, cutoff=6)


@pytest.fixture(scope="module")
def kerr_spec(kerr):
    return diagonalize(kerr)


def test_damped_oscillator_spectrum_exact():
    # the truncated generator is triangular in total excitation, so the ladder is exact
    omega, kappa, N = 1.3, 0.7, 5
    spec = diagonalize(damped_oscillator(omega, kappa, N))
    m, n = np.meshgrid(np.arange(N + 1), np.arange(N + 1))
    expected = (-1j * omega * (m - n) - 0.5 * kappa * (m + n)).ravel()
    key = lambda z: (round(z.real, 8), round(z.imag, 8))
    np.testing.assert_allclose(sorted(spec.eigenvalues, key=key), sorted(expected, key=key), atol=1e-9)


def test_assemble_matches_explicit_lindblad(rng):
    m = build_random_liouvillian(RandomLiouvillianParams(N=4, r=3, seed=7))
    L = assemble(m)
    for _ in range(5):
        rho = random_matrix(4, rng)
        np.testing.assert_allclose(L @ vectorize(rho), vectorize(lindblad_rhs(m, rho)), atol=1e-12)


def test_trace_preservation(kerr):
    L = assemble(kerr).dense()
    d = kerr.dim
    np.testing.assert_allclose(vectorize(np.eye(d)).conj() @ L, 0, atol=1e-12)


def test_closed_system_limit():
    m = build_kerr_resonator(delta=0.7, U=0.3, F=0.9, gamma=0.0, cutoff=5)
    spec = diagonalize(m)
    E = np.linalg.eigvalsh(m.hamiltonian.dense())
    expected = (-1j * (E[:, None] - E[None, :])).ravel()
    assert np.max(np.abs(spec.eigenvalues.real)) < 1e-10
    np.testing.assert_allclose(np.sort(spec.eigenvalues.imag), np.sort(expected.imag), atol=1e-9)


def test_biorthonormality(kerr_spec):
    assert kerr_spec.biorthogonality_error() < 1e-8


def test_spectrum_closed_under_conjugation(kerr_spec):
    w = kerr_spec.eigenvalues
    dist = np.min(np.abs(w[:, None] - w.conj()[None, :]), axis=1)
    assert dist.max() < 1e-8


def test_eigenvalues_in_left_half_plane(kerr_spec):
    assert kerr_spec.eigenvalues.real.max() <= kerr_spec.tol_zero


def test_left_steady_proportional_to_identity(kerr_spec):
    sig = kerr_spec.left_op(kerr_spec.steady_index).dense()
    np.testing.assert_allclose(sig, np.eye(sig.shape[0]) * sig[0, 0], atol=1e-10)
    assert abs(sig[0, 0] - 1) < 1e-10


def test_steady_state_vacuum_for_pure_decay():
    spec = diagonalize(damped_oscillator())
    rho = steady_state(spec).dense()
    assert abs(rho[0, 0] - 1) < 1e-12


def test_steady_state_matches_long_propagation(kerr, kerr_spec):
    rho_ss = steady_state(kerr_spec).dense()
    rho0 = np.zeros((kerr.dim, kerr.dim), complex)
    rho0[0, 0] = 1
    late = propagate(assemble(kerr), Operator(kerr.space, rho0), 60.0).dense()
    np.testing.assert_allclose(late, rho_ss, atol=1e-9)
    ev = np.linalg.eigvalsh(rho_ss)
    assert ev.min() >= 0 and abs(ev.sum() - 1) < 1e-12


def test_sparse_solve_matches_eigen_route(kerr, kerr_spec):
    np.testing.assert_allclose(solve_steady_state(kerr).dense(), steady_state(kerr_spec).dense(), atol=1e-10)


def test_multiple_steady_states_detected():
    space = HilbertSpace(3)
    m = ModelSpec(space, Operator(space, np.zeros((3, 3))), ())
    with pytest.raises(MultipleSteadyStatesError):
        steady_state(diagonalize(m))


def test_weight_reconstruction(kerr_spec, rng):
    d = kerr_spec.space.total_dim
    for _ in range(20):
        rho = random_density(d, rng)
        c = spectral_weights(kerr_spec, Operator(kerr_spec.space, rho))
        np.testing.assert_allclose(reconstruct(kerr_spec, c).dense(), rho, atol=1e-9)
        assert abs(c.coefficients[kerr_spec.steady_index] - 1) < 1e-10


def test_weights_evolve_exponentially(kerr, kerr_spec, rng):
    rho = Operator(kerr.space, random_density(kerr.dim, rng))
    t = 0.37
    c0 = spectral_weights(kerr_spec, rho).coefficients
    # evolve with the sparse generator, independent of the decomposition
    ct = spectral_weights(kerr_spec, propagate(assemble(kerr), rho, t)).coefficients
    np.testing.assert_allclose(ct, np.exp(kerr_spec.eigenvalues * t) * c0, atol=1e-8)


def test_propagate_spectral_vs_rk4(rng):
    m = build_bose_hubbard(BoseHubbardParams(delta=0.5, F=0.8, J=1.0, U=1.0, n_sites=2, cutoff=2))
    spec = diagonalize(m)
    rho0 = random_density(m.dim, rng)
    for t in (0.3, 1.5):
        exact = propagate(spec, Operator(m.space, rho0), t).dense()
        np.testing.assert_allclose(exact, rk4(m, rho0, t, 400), atol=1e-6)


@given(st.floats(0, 2), st.floats(0, 2))
def test_semigroup(s, t):
    rho = np.zeros((7, 7), complex)
    rho[2, 2] = 1
    spec = _SEMI
    op = Operator(spec.space, rho)
    once = propagate(spec, op, s + t).dense()
    twice = propagate(spec, propagate(spec, op, s), t).dense()
    np.testing.assert_allclose(once, twice, atol=1e-10)


_SEMI = diagonalize(build_kerr_resonator(delta=1.0, U=0.8, F=1.2, gamma=1.0, cutoff=6))


def test_non_finite_time_rejected(kerr_spec):
    rho = Operator(kerr_spec.space, np.eye(7) / 7)
    with pytest.raises(ValueError):
        propagate(kerr_spec, rho, float("nan"))
    with pytest.raises(ValueError):
        propagate(kerr_spec, rho, float("inf"))


def test_memory_guard():
    m = build_bose_hubbard(BoseHubbardParams(delta=1, F=1, n_sites=2, cutoff=8))
    with pytest.raises(ResourceGuardError):
        diagonalize(m)


def test_csv_roundtrip(tmp_path, rng):
    w = rng.normal(size=30) + 1j * rng.normal(size=30)
    p = tmp_path / "e.csv"
    eigenvalues_to_csv(p, w, metadata={"model": "x"})
    np.testing.assert_array_equal(eigenvalues_from_csv(p), w)


def test_csv_error_has_line_number(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("re,im\n1.0,2.0\n3.0,abc\n")
    with pytest.raises(ValueError, match=":3:"):
        eigenvalues_from_csv(p)


def test_cache_roundtrip_and_corruption(tmp_path, kerr, kerr_spec):
    path = save_spectrum(kerr_spec, tmp_path / "s.spec")
    back = load_spectrum(path, expected_hash=kerr.hash())
    np.testing.assert_array_equal(back.eigenvalues, kerr_spec.eigenvalues)
    np.testing.assert_array_equal(back.right, kerr_spec.right)
    raw = bytearray(path.read_bytes())
    raw[len(raw) // 2] ^= 0xFF
    path.write_bytes(bytes(raw))
    with pytest.raises(CacheCorruptError):
        load_spectrum(path)


def test_cached_spectrum_recomputes_on_corruption(tmp_path, kerr):
    first = cached_spectrum(kerr, tmp_path)
    p = cache_path(kerr.hash(), tmp_path)
    assert p.exists()
    p.write_bytes(p.read_bytes()[:100])
    with pytest.warns(RuntimeWarning, match="corrupt"):
        again = cached_spectrum(kerr, tmp_path)
    np.testing.assert_array_equal(first.eigenvalues, again.eigenvalues)
