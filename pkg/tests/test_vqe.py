import math

import numpy as np
import pytest

import oracles
from z2scatter.ansatz import AnsatzParams, kinematic_factors
from z2scatter.model import ExactSystem, LatticeParams, brillouin_zone, reference_states
from z2scatter.vqe import AnsatzObjective, ground_state_energy_fn, optimize_ansatz, optimize_ground

P3 = LatticeParams(3)


@pytest.fixture(scope="module")
def system3():
    return ExactSystem(P3)


@pytest.fixture(scope="module")
def ground3(system3):
    return optimize_ground(P3, seeds=3, system=system3)


def test_report_energy_is_reproducible(ground3, system3):
    energy, _ = ground_state_energy_fn(P3, system3)
    assert energy(ground3.best_params) == pytest.approx(ground3.best_energy, abs=1e-10)
    assert ground3.evaluations == len(ground3.trace)
    assert all(b <= a for a, b in zip(ground3.trace, ground3.trace[1:]))


def test_optimum_is_local_minimum(ground3, system3):
    energy, _ = ground_state_energy_fn(P3, system3)
    x = ground3.best_params
    for i in range(2):
        for h in (1e-3, -1e-3):
            y = x.copy()
            y[i] += h
            assert energy(y) >= ground3.best_energy - 1e-12


def test_ground_fidelity_small_lattice(ground3, system3):
    assert ground3.extra["fidelity"] > 0.999
    assert ground3.best_energy >= system3.ground_state()[0] - 1e-12


def test_zero_hopping_limit():
    p = LatticeParams(2, hopping=0.0)
    rep = optimize_ground(p, seeds=2)
    assert rep.best_energy == pytest.approx(ExactSystem(p).ground_state()[0], abs=1e-8)


def test_accept_branch_matches_dense_exponential(system2):
    p = LatticeParams(2)
    _, vac = system2.ground_state()
    k = brillouin_zone(p)[1]
    obj = AnsatzObjective(k, 1, p, vac, system2)
    ap = AnsatzParams.from_vector(k, 1, [0.3, -0.4])
    got, acc = obj.prepared(ap)
    co = obj.coefficients(ap).entries
    s = oracles.sector(2)
    B = sum(c * oracles.meson_dense(m, n, 2) for (m, n), c in co.items())[np.ix_(s, s)]
    Theta = np.kron(oracles.SM, B)
    Theta = Theta + Theta.conj().T
    psi0 = np.concatenate([vac, np.zeros_like(vac)])
    branch = (oracles.hermitian_expm(Theta, math.pi / 2) @ psi0)[len(vac):]
    assert acc == pytest.approx(np.vdot(branch, branch).real, abs=1e-10)
    assert abs(abs(np.vdot(branch / np.linalg.norm(branch), got)) - 1) < 1e-10


def test_circuit_mode_approaches_exact(system2):
    p = LatticeParams(2)
    _, vac = system2.ground_state()
    k = brillouin_zone(p)[1]
    ap = AnsatzParams.from_vector(k, 1, [0.3, -0.4])
    exact = AnsatzObjective(k, 1, p, vac, system2).energy(ap)
    circ = AnsatzObjective(k, 1, p, vac, system2, mode="circuit", wp_steps=32).energy(ap)
    assert circ == pytest.approx(exact, abs=1e-3)
    with pytest.raises(ValueError):
        AnsatzObjective(k, 1, p, vac, system2, mode="other")


def test_optimize_ansatz_small_lattice(ground3, system3):
    vac = ground3.extra["state"]
    refs = reference_states(system3, [0.0])
    t = kinematic_factors(P3)
    rep = optimize_ansatz(0.0, 1, None, P3, vac, system3, seeds=3, table=t)
    f = abs(np.vdot(refs[0.0][1], rep.extra["state"])) ** 2
    assert f > 0.95
    assert rep.best_energy == pytest.approx(
        AnsatzObjective(0.0, 1, P3, vac, system3, t).energy(rep.extra["ansatz"]), abs=1e-10)
    with pytest.raises(KeyError):
        optimize_ansatz(0.0, 3, rep.extra["ansatz"], P3, vac, system3, seeds=1, table=t)
    rep2 = optimize_ansatz(0.0, 2, rep.extra["ansatz"], P3, vac, system3, seeds=2, table=t)
    for (lo, hi), a in zip(rep2.window_used[:2], rep.best_params):
        assert lo <= a <= hi and hi - lo == pytest.approx(0.2 * max(abs(a), 1.0))
    assert rep2.best_energy <= rep.best_energy + 1e-9
