import numpy as np
import pytest

from conftest import small_setup
from z2scatter.circuits import EvolutionPlan, build_evolution
from z2scatter.experiments import (diagonal_observables, evolve_states, hadamard_amplitude,
                                   ideal_packet_state, noisy_field_series, prepare,
                                   sampled_observables, system_vector)
from z2scatter.model import scv_state
from z2scatter.simulator import NoiseModel, Statevector, run


@pytest.fixture(scope="module")
def prep2():
    return prepare(small_setup(), extra_qubits=1)


def test_scv_observables(system2):
    p = system2.params
    v = np.zeros(len(system2.basis.states))
    v[system2.basis.index[scv_state(p)]] = 1
    chi, E = diagonal_observables(v, system2.basis, p)
    assert np.allclose(chi, 0) and E == 1.0


def test_vacuum_only_prepare(system2):
    s = small_setup(packets=())
    prep = prepare(s)
    assert prep.accept == {} and prep.n_qubits == s.params.n_system
    v, pa = system_vector(prep, basis=system2.basis)
    assert pa == pytest.approx(1.0)
    assert abs(np.vdot(system2.ground_state()[1], v)) ** 2 > 0.9


def test_system_vector_is_accept_branch(prep2, system2):
    v, pa = system_vector(prep2, basis=system2.basis)
    assert np.linalg.norm(v) == pytest.approx(1.0)
    amp = prep2.state.amplitudes
    idx = np.arange(amp.size)
    ok = np.ones(amp.size, bool)
    for q, b in prep2.accept.items():
        ok &= ((idx >> q) & 1) == b
    assert pa == pytest.approx(float(np.sum(np.abs(amp[ok]) ** 2)))
    ideal = ideal_packet_state(prep2.setup, system2.basis.project(
        run(prepare(small_setup(packets=())).circuit,
            Statevector.basis(5, scv_state(system2.params))).amplitudes), system2.basis)
    assert abs(np.vdot(ideal, v)) ** 2 > 0.5


def test_evolve_states_match_single_circuit(prep2):
    sts = evolve_states(prep2, 0.5, 3)
    assert len(sts) == 4
    whole = run(build_evolution(EvolutionPlan(0.5, 3), prep2.setup.params, prep2.n_qubits), prep2.state)
    assert np.allclose(sts[-1].amplitudes, whole.amplitudes, atol=1e-12)


def test_hadamard_amplitude_matches_overlap(prep2):
    a = prep2.n_qubits - 1
    amp, out = hadamard_amplitude(prep2, 0.5, 2, a)
    v, _ = system_vector(prep2)
    evolved = system_vector(prep2, evolve_states(prep2, 0.5, 2)[-1])[0]
    assert amp == pytest.approx(np.vdot(v, evolved), abs=1e-10)
    assert set(out) >= {"re", "im", "state_re", "state_im"}


def test_sampled_observables_close_to_exact(prep2, system2):
    p = prep2.setup.params
    obs = sampled_observables(prep2.state, p, prep2.accept, 20000, 3, resamples=30)
    chi, E = diagonal_observables(system_vector(prep2, basis=system2.basis)[0], system2.basis, p)
    assert np.all(np.abs(obs.chi - chi) < 5 * obs.chi_err + 1e-9)
    assert abs(obs.field - E) < 5 * obs.field_err


def test_noisy_field_series_without_noise(prep2, system2):
    p = prep2.setup.params
    nf = noisy_field_series(prep2, 0.5, [2, 1], NoiseModel(0.0, 0.0, 4), trajectories=400, twirls=2,
                            resamples=30, seed=2)
    assert nf.times == [0.5, 1.0]
    # the identity circuit leaves E(0) in place; ODR then changes nothing beyond noise
    assert np.allclose(nf.identity.values, nf.e0, atol=5 * max(nf.identity.errors) + 1e-9)
    states = evolve_states(prep2, 0.5, 2)
    for i, n in enumerate((1, 2)):
        E = diagonal_observables(system_vector(prep2, states[n], system2.basis)[0], system2.basis, p)[1]
        assert abs(nf.raw.values[i] - E) < 5 * nf.raw.errors[i]
    with pytest.raises(ValueError):
        noisy_field_series(prep2, 0.5, [0], NoiseModel(0.0, 0.0, 4), trajectories=10)
