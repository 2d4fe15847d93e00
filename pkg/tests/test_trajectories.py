import numpy as np
import pytest
import scipy.linalg as la

from dissipchaos.errors import StepSizeError
from dissipchaos.liouvillian import diagonalize, propagate
from dissipchaos.models import ModelSpec, build_kerr_resonator
from dissipchaos.operators import HilbertSpace, Operator, annihilation, coherent_state, number
from dissipchaos.trajectories import (
    TrajectoryState,
    ensemble_average,
    jump_log_rows,
    run_ensemble,
    run_trajectory,
    safe_dt,
    step,
    trajectory_rng,
)


@pytest.fixture(scope="module")
def kerr():
    return build_kerr_resonator(delta=1.0, U=0.8, F=1.0, gamma=1.0, cutoff=8)


def vacuum(d):
    v = np.zeros(d, complex)
    v[0] = 1
    return v


def test_states_stay_normalized(kerr):
    res = run_ensemble(kerr, vacuum(9), np.linspace(0, 3, 7), 20, store_states=True)
    np.testing.assert_allclose(np.linalg.norm(res.states, axis=1), 1.0, atol=1e-12)


def test_seed_determinism_and_batch_independence(kerr):
    t = [0.0, 1.0, 2.0]
    a = run_ensemble(kerr, vacuum(9), t, 10, base_seed=4, store_states=True)
    b = run_ensemble(kerr, vacuum(9), t, 10, base_seed=4, store_states=True, batch_size=3)
    c = run_ensemble(kerr, vacuum(9), t, 10, base_seed=5, store_states=True)
    # jump records agree exactly; states up to the rounding of the batched products
    assert a.jump_logs == b.jump_logs
    np.testing.assert_allclose(a.states, b.states, atol=1e-12)
    assert not np.allclose(a.states, c.states)


def test_disjoint_ranges_merge(kerr):
    t = [0.0, 1.5]
    full = run_ensemble(kerr, vacuum(9), t, 6, base_seed=2, store_states=True)
    lo = run_ensemble(kerr, vacuum(9), t, 3, base_seed=2, store_states=True)
    hi = run_ensemble(kerr, vacuum(9), t, 3, base_seed=2, store_states=True, first_index=3)
    assert full.jump_logs == lo.jump_logs + hi.jump_logs
    np.testing.assert_allclose(full.states, np.concatenate([lo.states, hi.states], axis=2), atol=1e-12)


def test_trajectory_streams_are_distinct():
    assert trajectory_rng(0, 0).random() != trajectory_rng(0, 1).random()
    assert trajectory_rng(0, 3).random() == trajectory_rng(0, 3).random()


def test_step_size_guard(kerr):
    with pytest.raises(StepSizeError):
        run_ensemble(kerr, coherent_state(1.5, 9), [1.0], 2, dt=0.5)
    assert safe_dt(kerr) > 0


def test_single_step_api(kerr):
    s = TrajectoryState(vacuum(9), 0.0, trajectory_rng(0, 0))
    s2 = step(s, kerr, 0.01)
    assert s2.t == pytest.approx(0.01) and abs(np.linalg.norm(s2.psi) - 1) < 1e-12
    with pytest.raises(ValueError):
        step(s, kerr, 0.0)


def test_single_photon_decays_with_one_jump():
    a = annihilation(4)
    m = ModelSpec(a.space, number(4) * 0.5, ((a, 1.0),))
    one = np.zeros(4, complex)
    one[1] = 1
    res = run_ensemble(m, one, [0.0, 40.0], 50, store_states=True)
    assert all(len(log) == 1 for log in res.jump_logs)
    np.testing.assert_allclose(np.abs(res.states[-1, 0, :]), 1.0, atol=1e-12)
    rows = jump_log_rows(res.jump_logs)
    assert len(rows) == 50 and all(mu == 0 for _, _, mu in rows)


def test_channel_frequencies_follow_rates():
    space = HilbertSpace(2)
    sm = Operator(space, np.array([[0, 1], [0, 0]], complex))
    m = ModelSpec(space, Operator(space, np.zeros((2, 2))), ((sm, 1.0), (sm, 3.0)))
    res = run_ensemble(m, np.array([0, 1], complex), [0.0, 20.0], 2000, base_seed=1)
    channels = np.array([log[0][1] for log in res.jump_logs])
    assert channels.mean() == pytest.approx(0.75, abs=0.04)


@pytest.mark.filterwarnings("ignore:population of the two highest")
def test_closed_system_expm_is_exact():
    closed = build_kerr_resonator(delta=1.0, U=0.8, F=1.0, gamma=0.0, cutoff=6)
    psi0 = coherent_state(0.5, 7)
    res = run_trajectory(closed, psi0, [2.0], dt=0.01, propagator="expm")
    exact = la.expm(-2.0j * closed.hamiltonian.dense()) @ psi0
    exact /= np.linalg.norm(exact)
    np.testing.assert_allclose(res.states[-1, :, 0], exact, atol=1e-10)
    t2 = run_trajectory(closed, psi0, [2.0], dt=1e-3, propagator="taylor2")
    assert np.max(np.abs(t2.states[-1, :, 0] - exact)) < 1e-4


def test_single_trajectory_density_is_projector(kerr):
    res = ensemble_average(kerr, vacuum(9), [0.5, 1.0], 1)
    for r in res.rho:
        np.testing.assert_allclose(r @ r, r, atol=1e-12)


def test_ensemble_density_is_valid(kerr):
    res = ensemble_average(kerr, vacuum(9), [0.0, 1.0, 2.0], 40)
    for r in res.rho:
        assert abs(np.trace(r) - 1) < 1e-12
        np.testing.assert_allclose(r, r.conj().T, atol=1e-14)


def test_ensemble_converges_to_master_equation(kerr):
    spec = diagonalize(kerr)
    rho0 = Operator(kerr.space, np.diag(vacuum(9)))
    t = 1.0
    exact = propagate(spec, rho0, t).dense()
    n_op = number(9)
    # the jump scheme is first order in dt; dt is chosen so the bias is below the noise
    res = ensemble_average(kerr, vacuum(9), [t], 1500, base_seed=3, dt=0.0025, propagator="taylor2",
                           observables={"n": n_op})
    n_exact = np.trace(n_op.dense() @ exact).real
    assert abs(res.means["n"][0] - n_exact) < 4 * res.stderr["n"][0] + 1e-3
    assert np.max(np.abs(res.rho[0] - exact)) < 0.05


def test_standard_error_scales_as_inverse_sqrt(kerr):
    obs = {"n": number(9)}
    small = run_ensemble(kerr, vacuum(9), [1.0], 100, base_seed=8, observables=obs, record_jumps=False)
    large = run_ensemble(kerr, vacuum(9), [1.0], 1600, base_seed=8, observables=obs, record_jumps=False)
    ratio = small.stderr["n"][0] / large.stderr["n"][0]
    assert 3.0 < ratio < 5.3


def test_cutoff_population_warning():
    m = build_kerr_resonator(delta=0.0, U=0.0, F=0.0, gamma=0.1, cutoff=4)
    with pytest.warns(RuntimeWarning, match="Fock cutoff"):
        run_ensemble(m, coherent_state(1.8, 5), [0.0], 2)


def test_invalid_inputs(kerr):
    with pytest.raises(ValueError):
        run_ensemble(kerr, vacuum(9), [0.0], 0)
    with pytest.raises(ValueError):
        run_ensemble(kerr, vacuum(9), [1.0, 0.5], 2)
    with pytest.raises(ValueError):
        run_ensemble(kerr, vacuum(9), [1.0], 2, propagator="rk45")
    with pytest.raises(ValueError):
        run_ensemble(kerr, vacuum(4), [1.0], 2)
