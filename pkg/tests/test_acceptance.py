"""Acceptance checks, one per criterion.

Each check returns ``(ok, detail)``; the pytest wrappers record a PASS/FAIL
line that is printed in the terminal summary.  ``python tests/test_acceptance.py``
runs the same checks and prints only the summary lines.
"""
from __future__ import annotations

import math
import sys
import time
import warnings
from functools import lru_cache
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

import oracles  # noqa: E402
from conftest import ACCEPTANCE_LINES, small_setup  # noqa: E402
from z2scatter import analysis  # noqa: E402
from z2scatter.ansatz import periodic_distance, profile_overlap, MesonCoefficients  # noqa: E402
from z2scatter.circuits import (APPX_I, APPX_II, EvolutionPlan, GroundStateAngles, PrepScheme,  # noqa: E402
                                build_evolution, build_qgs, build_qwp, build_trotter_step,
                                count_gates, qwp_cnot_formula, term_angle, theta_terms)
from z2scatter.experiments import (Setup, diagonal_observables, evolve_states, hadamard_amplitude,  # noqa: E402
                                   noisy_field_series, prepare, sampled_observables, system_vector)
from z2scatter.model import ExactSystem, LatticeParams, brillouin_zone, reference_states  # noqa: E402
from z2scatter.simulator import NoiseModel, Statevector, run, sample  # noqa: E402
from z2scatter.vqe import AnsatzObjective, ground_state_energy_fn, optimize_ground, optimize_orders  # noqa: E402

P5 = LatticeParams(5)
GROUND_TARGET = (-8.8739, 0.9998)
# k = i*pi/5 -> (E*_k, F_k) of the order-1 ansatz
MESON_TARGETS = {0: (-6.1048, 0.9843), 1: (-6.0687, 0.9894), -1: (-6.0687, 0.9893),
               2: (-5.9780, 0.9982), -2: (-5.9779, 0.9981)}
OVERLAP = 0.0666
VIOLATION = {"appx_ii": (APPX_II, 0.0696), "appx_i": (APPX_I, 0.1325)}


@lru_cache(maxsize=None)
def system5() -> ExactSystem:
    return ExactSystem(P5)


@lru_cache(maxsize=None)
def ground5():
    t0 = time.perf_counter()
    rep = optimize_ground(P5, system=system5())
    elapsed = time.perf_counter() - t0
    _, state = ground_state_energy_fn(P5, system5())
    return rep, state(rep.best_params), elapsed


@lru_cache(maxsize=None)
def order_one5():
    """Order-1 optimum for every k, keyed by i = k*5/pi."""
    _, vac, _ = ground5()
    out = {}
    for k in brillouin_zone(P5):
        rep = optimize_orders(k, 1, P5, vac, system5())[-1]
        out[round(k * 5 / math.pi)] = (k, rep.extra["ansatz"])
    return out


def _k_label(i: int) -> str:
    return "0" if i == 0 else f"{i}pi/5"


# ---------------------------------------------------------------- criteria

def check_ground_vqe():
    rep, vac, elapsed = ground5()
    _, omega = system5().ground_state()
    f = float(abs(np.vdot(omega, vac)) ** 2)
    E = rep.best_energy
    ok = abs(E - GROUND_TARGET[0]) <= 1e-3 and abs(f - GROUND_TARGET[1]) <= 5e-4 and elapsed < 60
    return ok, f"E*={E:.5f} (target {GROUND_TARGET[0]}), F={f:.5f} (target {GROUND_TARGET[1]}), {elapsed:.1f}s"


def check_ansatz_vqe():
    _, vac, _ = ground5()
    refs = reference_states(system5(), brillouin_zone(P5))
    ok, parts = True, []
    for i, (k, ap) in sorted(order_one5().items()):
        obj = AnsatzObjective(k, 1, P5, vac, system5())
        E = obj.ansatz_energy(ap)
        f = float(abs(np.vdot(refs[k][1], obj.ansatz_state(ap))) ** 2)
        Et, ft = MESON_TARGETS[i]
        ok &= abs(E - Et) <= 2e-3 and abs(f - ft) <= 2e-3
        parts.append(f"k={_k_label(i)}: E*={E:.4f}/{Et} F={f:.4f}/{ft}")
    return ok, "; ".join(parts)


def check_order3_fidelity():
    _, vac, _ = ground5()
    refs = reference_states(system5(), brillouin_zone(P5))
    t0 = time.perf_counter()
    fids = {}
    for i, (k, ap1) in sorted(order_one5().items()):
        rep = optimize_orders(k, 3, P5, vac, system5(), start=ap1)[-1]
        obj = AnsatzObjective(k, 3, P5, vac, system5())
        fids[i] = float(abs(np.vdot(refs[k][1], obj.ansatz_state(rep.extra["ansatz"]))) ** 2)
    ok = all(f >= 0.99 for f in fids.values())
    detail = ", ".join(f"F({_k_label(i)})={f:.4f}" for i, f in fids.items())
    return ok, f"{detail}; {time.perf_counter() - t0:.0f}s"


def check_packet_overlap():
    prof = Setup.default(5).profiles()
    ov = profile_overlap(prof[1], prof[0])
    return abs(ov - OVERLAP) <= 5e-5, f"(Psi_2|Psi_1)={complex(ov).real:.6f}{complex(ov).imag:+.1e}j (target {OVERLAP})"


def check_violation_rates(shots: int = 500_000):
    ok, parts = True, []
    for i, (name, (scheme, target)) in enumerate(VIOLATION.items()):
        prep = prepare(Setup.default(5, scheme))
        counts = sample(prep.state, shots, 100 + i)
        rep = analysis.filter_ancilla(analysis.filter_q(counts, P5), prep.accept)
        n = rep.kept.total / (1 - rep.ancilla_violation_rate)
        sigma = math.sqrt(target * (1 - target) / n)
        z = (rep.ancilla_violation_rate - target) / sigma
        ok &= abs(z) <= 5 and rep.q_violation_rate == 0
        exact = 1 - system_vector(prep)[1]
        parts.append(f"{name}: {100 * rep.ancilla_violation_rate:.3f}% (exact {100 * exact:.3f}%, "
                     f"target {100 * target:.2f}%, z={z:+.1f})")
    return ok, "; ".join(parts)


def _full_table(p: LatticeParams, j: int) -> MesonCoefficients:
    N = p.n_stag
    return MesonCoefficients({(m, n): 0.3 + 0.1j for m in range(N) for n in range(N)
                              if periodic_distance(m, n, N) <= j}, j)


def check_gate_counts():
    bad = []
    for n_phys in (2, 5):
        p = LatticeParams(n_phys)
        if count_gates(build_qgs(GroundStateAngles(0.3, 0.5), p))[1] != 8 * n_phys + 4:
            bad.append(f"Q_GS N_P={n_phys}")
        if count_gates(build_trotter_step(EvolutionPlan(1.0, 1), p))[1] != 18 * n_phys + 8:
            bad.append(f"Trotter N_P={n_phys}")
        for j in range(1, min(n_phys, 3) + 1):
            for nt in (1, 2, 10):
                c = build_qwp(_full_table(p, j), PrepScheme(2, nt, 0.0, order=j), p.n_system, p)
                if count_gates(c)[1] != qwp_cnot_formula(j, n_phys, nt):
                    bad.append(f"Q_WP N_P={n_phys} j={j} nt={nt}")
    return not bad, "all formulas exact at N_P=2,5" if not bad else "mismatch: " + ", ".join(bad)


def _sector_unitary(c, states):
    n = c.n_qubits
    cols = np.zeros((len(states), 1 << n), dtype=complex)
    cols[np.arange(len(states)), states] = 1
    return run(c, Statevector(n, cols)).amplitudes[:, states].T


def check_trotter_order():
    Hs, states = oracles.sector_hamiltonian(2)
    exact = oracles.hermitian_expm(Hs, 1.0)
    p = LatticeParams(2)
    errs = [np.linalg.norm(_sector_unitary(build_evolution(EvolutionPlan(1.0 / n, n), p), states) - exact, 2)
            for n in (4, 8)]
    ratio = errs[0] / errs[1]
    return abs(ratio - 4) <= 0.8, f"err(dt=1/4)={errs[0]:.3e}, err(dt=1/8)={errs[1]:.3e}, ratio={ratio:.3f}"


def _centroids(chi):
    w = np.clip(chi - chi.min(), 0, None)
    half = len(chi) // 2
    idx = np.arange(len(chi))
    return float(idx[:half] @ w[:half] / w[:half].sum()), float(idx[half:] @ w[half:] / w[half:].sum())


def check_evolution_profile(shots: int = 100_000, t_max: int = 4):
    system = system5()
    B = system.basis
    prep = prepare(Setup.default(5, APPX_I))
    v0, _ = system_vector(prep, basis=B)
    coarse = evolve_states(prep, 1.0, t_max)
    fine = evolve_states(prep, 0.5, 2 * t_max)[::2]
    cents, heights, worst = [], [], 0.0
    for t in range(t_max + 1):
        obs = sampled_observables(coarse[t], P5, prep.accept, shots, [7, t])
        chi_c = diagonal_observables(system_vector(prep, coarse[t], B)[0], B, P5)[0]
        chi_f = diagonal_observables(system_vector(prep, fine[t], B)[0], B, P5)[0]
        chi_x = diagonal_observables(system.evolve(v0, t), B, P5)[0]
        tol = 2 * np.abs(chi_c - chi_f) + 5 * obs.chi_err + 1e-12
        worst = max(worst, float(np.max(np.abs(obs.chi - chi_x) / tol)))
        cents.append(_centroids(obs.chi))
        heights.append(float(obs.chi.max()))
    left = [c[0] for c in cents]
    right = [c[1] for c in cents]
    approach = all(np.diff(left) > 0) and all(np.diff(right) < 0)
    lower = all(h < heights[0] for h in heights[1:])
    ok = approach and lower and worst <= 1
    gap = ", ".join(f"{r - l:.3f}" for l, r in zip(left, right))
    hs = ", ".join(f"{h:.3f}" for h in heights)
    return ok, f"peak separation {gap}; peak heights {hs}; max |dev|/tol={worst:.2f}"


def check_noise_mitigation(trajectories: int = 400, noise_seed: int = 1):
    system = system5()
    B = system.basis
    prep = prepare(Setup.default(5, APPX_II))
    clean = [diagonal_observables(system_vector(prep, s, B)[0], B, P5)[1] for s in evolve_states(prep, 1.0, 4)]
    t0 = time.perf_counter()
    nf = noisy_field_series(prep, 1.0, [1, 2, 3, 4], NoiseModel(0.0, 0.005, noise_seed), trajectories, twirls=8)
    z_odr = [(v - c) / e for v, e, c in zip(nf.odr.values, nf.odr.errors, clean[1:])]
    z_raw = [(v - c) / e for v, e, c in zip(nf.raw.values, nf.raw.errors, clean[1:])]
    ok = all(abs(z) <= 2 for z in z_odr) and any(abs(z) > 2 for z in z_raw)
    fmt = lambda zs: ", ".join(f"{z:+.1f}" for z in zs)  # noqa: E731
    return ok, f"ODR z=[{fmt(z_odr)}], raw z=[{fmt(z_raw)}]; {time.perf_counter() - t0:.0f}s"


def check_return_probability(dt: float = 0.5):
    system = system5()
    B = system.basis
    preps = {}
    for name, scheme in (("I", APPX_I), ("II", APPX_II)):
        prep = prepare(Setup.default(5, scheme), extra_qubits=1)
        preps[name] = prep
    v_ref, _ = system_vector(preps["I"], basis=B)
    ok, parts = True, []
    for t in (1, 2, 3, 4):
        exact = abs(np.vdot(v_ref, system.evolve(v_ref, t))) ** 2
        r = {}
        for name, prep in preps.items():
            a = prep.n_qubits - 1
            r[name] = abs(hadamard_amplitude(prep, dt, round(t / dt), a)[0]) ** 2
        r_half = abs(hadamard_amplitude(preps["I"], dt / 2, round(2 * t / dt), preps["I"].n_qubits - 1)[0]) ** 2
        bound = 2 * abs(r["I"] - r_half)
        dev_i, dev_ii = abs(r["I"] - exact), abs(r["II"] - exact)
        ok &= dev_i <= bound and dev_ii > 3 * dev_i
        parts.append(f"t={t}: |dR_I|={dev_i:.4f}<= {bound:.4f}, |dR_II|={dev_ii:.4f}")
    return ok, "; ".join(parts)


def _dense_qgs(angles: GroundStateAngles, n_phys: int, nq: int) -> np.ndarray:
    N = 2 * n_phys
    b = N
    alpha = (-1) ** (n_phys + 1)
    U = np.eye(1 << nq, dtype=complex)

    def rot(ops, angle):
        return oracles.hermitian_expm(oracles.op_on(nq, ops), angle / 2)

    for n in reversed(range(N)):
        if n == N - 1:
            for P in (oracles.X, oracles.Y):
                U = rot({N - 1: P, b: oracles.X, 0: P}, alpha * angles.theta_h) @ U
        else:
            for P in (oracles.X, oracles.Y):
                U = rot({n: P, n + 1: P}, angles.theta_h) @ U
    for n in range(N):
        U = rot({n: oracles.Z}, (-1) ** (n + 1) * angles.theta_m) @ U
    return U


def _dense_qwp(co, scheme: PrepScheme, anc: int, n_phys: int, nq: int) -> tuple[np.ndarray, float]:
    p = LatticeParams(n_phys)
    b = 2 * n_phys
    nt = scheme.wp_trotter_steps
    theta = math.pi / (4 * nt)
    terms = [t for t in theta_terms(co, p, order=scheme.term_order) if term_angle(t, theta) > scheme.theta_cutoff]
    SP = oracles.SM.conj().T
    mats, total = [], 0
    for t in terms:
        if t.diagonal:
            piece = 0.5 * (oracles.op_on(nq, {anc: oracles.SM})
                           - oracles.op_on(nq, {t.m: oracles.Z, anc: oracles.SM}))
        else:
            ops = {q: oracles.Z for q in t.zq}
            ops.update({t.m: oracles.SM, t.n: SP, anc: oracles.SM})
            if t.wraps:
                ops[b] = oracles.X
            piece = oracles.op_on(nq, ops)
        piece = t.coeff * piece
        total = total + piece
        mats.append(oracles.hermitian_expm(piece + piece.conj().T, theta))
    U = np.eye(1 << nq, dtype=complex)
    for _ in range(nt):
        for m in mats + mats[::-1]:
            U = m @ U
    # the kept pieces must add up to the meson-operator sum
    meson = sum(C * oracles.meson_dense(m, n, n_phys) for (m, n), C in co.entries.items())
    lift = np.kron(np.kron(np.eye(1 << (nq - anc - 1)), oracles.SM), np.eye(1 << anc))
    full = lift @ np.kron(np.eye(1 << (nq - b - 1)), meson)
    return U, float(np.linalg.norm(total - full))


def check_oracle_equivalence(dt: float = 0.5, n_steps: int = 3):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        setup = small_setup()
        prep = prepare(setup)
    nq = prep.n_qubits
    n_phys = setup.params.n_phys
    N = 2 * n_phys
    scv = sum(1 << n for n in range(1, N, 2))
    psi = np.zeros(1 << nq, dtype=complex)
    psi[scv] = 1
    psi = _dense_qgs(setup.angles, n_phys, nq) @ psi
    split = 0.0
    for co, anc in zip(setup.coefficient_tables(), prep.init.ancillas):
        U, err = _dense_qwp(co, setup.scheme, anc, n_phys, nq)
        split = max(split, err)
        psi = U @ psi
    d_prep = float(np.linalg.norm(prep.state.amplitudes - psi))

    pad = np.eye(1 << (nq - N - 1))
    parts = {k: np.kron(pad, v) for k, v in oracles.hamiltonian_parts(n_phys).items()}
    half = [oracles.hermitian_expm(parts[k], dt / 2) for k in ("hop0", "hop1", "mass")]
    step = half[0] @ half[1] @ half[2] @ oracles.hermitian_expm(parts["eps"], dt) @ half[2] @ half[1] @ half[0]
    for _ in range(n_steps):
        psi = step @ psi
    got = evolve_states(prep, dt, n_steps)[-1].amplitudes
    d_evo = float(np.linalg.norm(got - psi))
    ok = d_prep < 1e-8 and d_evo < 1e-8 and split < 1e-12
    return ok, f"|prepare - dense|={d_prep:.1e}, |evolve - dense|={d_evo:.1e} ({n_steps} steps, dt={dt}), term split {split:.0e}"


CRITERIA = {
    1: ("ground-state VQE, N_P=5", check_ground_vqe),
    2: ("order-1 ansatz E*_k and F_k, N_P=5", check_ansatz_vqe),
    3: ("order-3 ansatz F_k >= 0.99 for all k", check_order3_fidelity),
    4: ("wave-packet overlap", check_packet_overlap),
    5: ("ancilla-violation rates, 5e5 shots", check_violation_rates),
    6: ("CNOT count formulas at N_P=2,5", check_gate_counts),
    7: ("second-order Trotter error ratio", check_trotter_order),
    8: ("two-packet evolution profile, dt=1", check_evolution_profile),
    9: ("twirling + ODR under p2=0.005", check_noise_mitigation),
    10: ("return probability, Appx I vs Appx II", check_return_probability),
    11: ("pipeline vs dense-matrix oracle, N_P=2", check_oracle_equivalence),
}


def run_criterion(n: int) -> tuple[bool, str]:
    title, fn = CRITERIA[n]
    with warnings.catch_warnings():
        # the default N_P=5 packets overlap by design; the warning is expected
        warnings.simplefilter("ignore")
        ok, detail = fn()
    line = f"C{n:<2} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
    ACCEPTANCE_LINES.append(line)
    return ok, line


@pytest.mark.parametrize("n", [4, 5, 6, 7, 11])
def test_fast_criteria(n):
    ok, line = run_criterion(n)
    assert ok, line


@pytest.mark.slow
@pytest.mark.parametrize("n", [1, 2, 8, 9, 10, 3])
def test_slow_criteria(n):
    ok, line = run_criterion(n)
    assert ok, line


if __name__ == "__main__":
    wanted = [int(a) for a in sys.argv[1:]] or sorted(CRITERIA)
    results = [run_criterion(n) for n in wanted]
    for _, line in results:
        print(line, flush=True)
    sys.exit(0 if all(ok for ok, _ in results) else 1)
