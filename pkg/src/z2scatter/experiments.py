"""End-to-end pipelines shared by the command line and the acceptance checks:
vacuum + wave-packet preparation, Trotter evolution, Hadamard-test return
probability and the noisy twirl + ODR path."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import analysis
from .ansatz import (AnsatzParams, KinematicTable, gaussian_profile, kinematic_factors,
                     meson_state, wavepacket_coefficients)
from .circuits import (APPX_I, APPX_II, EvolutionPlan, GroundStateAngles, InitCircuit, PrepScheme,
                       build_evolution, build_hadamard_test, build_qgs, build_qinit, decompose,
                       pauli_twirl)
from .model import LatticeParams, SectorBasis, scv_state
from .simulator import Circuit, NoiseModel, ShotCounts, Statevector, run, run_noisy, sample

# Vacuum angles and j=1 ansatz parameters for N_P=5, m_f=1, eps=-0.3.
PINNED_ANGLES = {5: (0.1705, 0.7846)}
PINNED_ALPHAS = {
    5: {0: (-0.0957, 1.1112), 1: (-3.2695, -3.0880), -1: (-1.0565, -1.0013),
        2: (-1.7754, 1.1020), -2: (-1.5139, -1.4590)},
}
DEFAULT_PACKETS = [(2.0, 7 * math.pi / 20, 2 * math.pi / 5), (7.0, 7 * math.pi / 20, -2 * math.pi / 5)]
SCHEMES = {"appx_i": APPX_I, "appx_ii": APPX_II}


def pinned_ansatz(n_phys: int) -> AnsatzParams:
    """Stored order-1 parameters, keyed by k = i*pi/N_P."""
    if n_phys not in PINNED_ALPHAS:
        raise KeyError(f"no pinned ansatz parameters for N_P={n_phys}")
    ap = AnsatzParams(1)
    for i, (a0, a1) in PINNED_ALPHAS[n_phys].items():
        k = i * math.pi / n_phys
        ap.set(k, 1, 0, a0)
        ap.set(k, 1, 1, a1)
    return ap


@dataclass
class Setup:
    params: LatticeParams
    angles: GroundStateAngles
    ansatz: AnsatzParams
    packets: list[tuple[float, float, float]] = field(default_factory=lambda: list(DEFAULT_PACKETS))
    scheme: PrepScheme = APPX_I

    @classmethod
    def default(cls, n_phys: int = 5, scheme: PrepScheme = APPX_I) -> "Setup":
        th, tm = PINNED_ANGLES[n_phys]
        return cls(LatticeParams(n_phys), GroundStateAngles(th, tm), pinned_ansatz(n_phys),
                   list(DEFAULT_PACKETS), scheme)

    @property
    def table(self) -> KinematicTable:
        return kinematic_factors(self.params)

    def profiles(self):
        return [gaussian_profile(mu, s, kb, self.params) for mu, s, kb in self.packets]

    def coefficient_tables(self):
        tab = self.table
        return [wavepacket_coefficients(p, self.ansatz, tab) for p in self.profiles()]


@dataclass
class Prepared:
    setup: Setup
    init: InitCircuit | None
    circuit: Circuit
    state: Statevector

    @property
    def n_qubits(self) -> int:
        return self.circuit.n_qubits

    @property
    def accept(self) -> dict[int, int]:
        return {} if self.init is None else dict(self.init.accept)


def prepare(setup: Setup, extra_qubits: int = 0) -> Prepared:
    """Q_GS on the SCV state followed by Q_Init for every packet.

    ``extra_qubits`` appends idle qubits after the preparation ancillas (the
    Hadamard-test ancilla, for instance).
    """
    p = setup.params
    init = None
    if setup.packets:
        init = build_qinit(setup.profiles(), setup.coefficient_tables(), setup.scheme, p)
        n = init.circuit.n_qubits + extra_qubits
    else:
        n = p.n_system + extra_qubits
    c = build_qgs(setup.angles, p, n)
    if init is not None:
        c.append(init.circuit.widened(n), segment="qinit")
    st = run(c, Statevector.basis(n, scv_state(p)))
    return Prepared(setup, init, c, st)


def system_vector(prep: Prepared, state: Statevector | None = None,
                  basis=None) -> tuple[np.ndarray, float]:
    """Accept-branch system-register vector (renormalized) and its probability.

    Returns the full 2**n_system vector, or sector components when ``basis``
    is given."""
    st = prep.state if state is None else state
    p = prep.setup.params
    ns = p.n_system
    arr = st.amplitudes.reshape(-1, 1 << ns)
    row = 0
    for q, bit in prep.accept.items():
        row |= bit << (q - ns)
    v = arr[row].copy()
    pa = float(np.vdot(v, v).real)
    v /= math.sqrt(pa)
    return (v if basis is None else basis.project(v)), pa


def ideal_packet_state(setup: Setup, vacuum: np.ndarray, basis) -> np.ndarray:
    """b^dagger_{Psi_n} ... b^dagger_{Psi_1}|vac>, normalized, in the sector basis."""
    v = vacuum
    for co in setup.coefficient_tables():
        v = meson_state(co, setup.params, v, basis)
    return v / np.linalg.norm(v)


def diagonal_observables(v: np.ndarray, basis, params: LatticeParams) -> tuple[np.ndarray, float]:
    """Exact (chi_n, E) of a sector vector."""
    prob = np.abs(v) ** 2
    prob = prob / prob.sum()
    bits = (basis.states[:, None] >> np.arange(params.n_stag)[None, :]) & 1
    occ = prob @ bits
    odd = np.arange(params.n_stag) % 2 == 1
    chi = np.where(odd, 1 - occ, occ)
    b = (basis.states >> params.boson) & 1
    return chi, float(prob @ (1 - 2 * b))


def evolve_states(prep: Prepared, dt: float, n_steps: int) -> list[Statevector]:
    """Prepared state after 0, 1, ..., n_steps Trotter steps of size dt."""
    step = build_evolution(EvolutionPlan(dt, 1), prep.setup.params, prep.n_qubits)
    out = [prep.state]
    for _ in range(n_steps):
        out.append(run(step, out[-1]))
    return out


@dataclass
class SampledObservables:
    chi: np.ndarray
    chi_err: np.ndarray
    field: float
    field_err: float
    report: analysis.FilterReport


def sampled_observables(state: Statevector, params: LatticeParams, accept: dict[int, int],
                        shots: int, seed, resamples: int = 100) -> SampledObservables:
    counts = sample(state, shots, seed)
    return observables_from_counts(counts, params, accept, seed, resamples)


def observables_from_counts(counts: ShotCounts, params: LatticeParams, accept: dict[int, int],
                            seed, resamples: int = 100) -> SampledObservables:
    rep = analysis.filter_q(counts, params)
    rep = analysis.filter_ancilla(rep, accept, raw=counts)
    kept = rep.kept
    chi = analysis.staggered_density(kept, params)
    chi_err = analysis.bootstrap_errors(kept, lambda c: analysis.staggered_density(c, params),
                                        resamples, seed)
    E = analysis.electric_field(kept, params)
    E_err = analysis.bootstrap_errors(kept, lambda c: analysis.electric_field(c, params),
                                      resamples, seed)
    return SampledObservables(chi, np.asarray(chi_err), E, float(E_err), rep)


# ---------------------------------------------------------------- return probability

def hadamard_amplitude(prep: Prepared, dt: float, n_steps: int, ancilla: int) -> tuple[complex, dict]:
    """<U_Trotter(t)> on the accepted prepared state, read off the exact
    Hadamard-test ancilla probabilities (p0 - p1 of both variants)."""
    p = prep.setup.params
    plan = EvolutionPlan(dt, n_steps, controlled=True)
    out = {}
    for variant in ("re", "im"):
        c = build_hadamard_test(plan, p, ancilla, variant, prep.n_qubits)
        st = run(c, prep.state)
        prob = np.abs(st.amplitudes) ** 2
        idx = np.arange(prob.size)
        ok = np.ones(prob.size, dtype=bool)
        for q, bit in prep.accept.items():
            ok &= ((idx >> q) & 1) == bit
        a = (idx >> ancilla) & 1
        p0, p1 = prob[ok & (a == 0)].sum(), prob[ok & (a == 1)].sum()
        out[variant] = (p0 - p1) / (p0 + p1)
        out[f"state_{variant}"] = st
    return complex(out["re"], out["im"]), out


def hadamard_counts(states: dict, shots: int, seed) -> tuple[ShotCounts, ShotCounts]:
    rng = np.random.default_rng(seed)
    s1, s2 = rng.integers(0, 2**63 - 1, size=2)
    return sample(states["state_re"], shots, int(s1)), sample(states["state_im"], shots, int(s2))


def postselect(counts: ShotCounts, params: LatticeParams, accept: dict[int, int]) -> ShotCounts:
    rep = analysis.filter_ancilla(analysis.filter_q(counts, params), accept)
    return rep.kept


# ---------------------------------------------------------------- noise + ODR

@dataclass
class NoisyField:
    times: list[float]
    raw: analysis.ObservableSeries
    identity: analysis.ObservableSeries
    odr: analysis.ObservableSeries
    e0: float


def _noisy_fields(circuit: Circuit, steps: list[int], initial: Statevector, params: LatticeParams,
                  accept: dict[int, int], noise: NoiseModel, trajectories: int, twirls: int,
                  twirl_seed: int | None, resamples: int, seed) -> list[tuple[float, float]]:
    """Electric field after each of ``steps`` Trotter steps.

    ``trajectories`` one-shot trajectories are split evenly across ``twirls``
    independently twirled copies of the circuit; every trajectory is sampled
    at the end of each requested step, so time points share noise histories.
    """
    base = decompose(circuit)
    marks = [base.segments[f"step{s - 1}"][1] if s else 0 for s in steps]
    per = max(1, trajectories // twirls)
    totals: list[ShotCounts] | None = None
    for r in range(twirls):
        c = base
        if twirl_seed is not None:
            for name in sorted(base.segments):
                if name.startswith("eps") or name.startswith("step"):
                    c = pauli_twirl(c, name, [twirl_seed, r])
            marks_r = [c.segments[f"step{s - 1}"][1] if s else 0 for s in steps]
        else:
            marks_r = marks
        nm = NoiseModel(noise.p1, noise.p2, noise.seed * 1009 + r)
        counts = run_noisy(c, initial, nm, per, checkpoints=marks_r)
        totals = counts if totals is None else [t.merged(x) for t, x in zip(totals, counts)]
    out = []
    for total in totals:
        kept = postselect(total, params, accept)
        E = analysis.electric_field(kept, params)
        err = analysis.bootstrap_errors(kept, lambda c: analysis.electric_field(c, params), resamples, seed)
        out.append((E, float(err)))
    return out


def noisy_field_series(prep: Prepared, dt: float, times: list[int], noise: NoiseModel,
                       trajectories: int, twirl: bool = True, twirls: int = 8,
                       resamples: int = 100, seed: int = 0) -> NoisyField:
    """E(t) under stochastic Pauli noise on the evolution, with and without
    ODR.  The prepared state is taken noiseless; both the evolution circuit
    and its same-shape identity counterpart run through the same noise."""
    p = prep.setup.params
    steps = sorted(set(int(n) for n in times))
    if not steps or steps[0] < 1:
        raise ValueError("times must be positive step counts")
    basis = SectorBasis.build(p)
    e0 = diagonal_observables(system_vector(prep, basis=basis)[0], basis, p)[1]
    plan = EvolutionPlan(dt, steps[-1])
    fw = build_evolution(plan, p, prep.n_qubits)
    ident = build_evolution(plan, p, prep.n_qubits, identity=True)
    tw = seed if twirl else None
    raw_pts = _noisy_fields(fw, steps, prep.state, p, prep.accept, noise, trajectories, twirls, tw,
                            resamples, seed)
    id_pts = _noisy_fields(ident, steps, prep.state, p, prep.accept,
                           NoiseModel(noise.p1, noise.p2, noise.seed + 7919), trajectories, twirls,
                           tw, resamples, seed)
    t = [dt * n for n in steps]
    raw = analysis.ObservableSeries(t, [v for v, _ in raw_pts], [e for _, e in raw_pts], "E")
    ident_s = analysis.ObservableSeries(t, [v for v, _ in id_pts], [e for _, e in id_pts], "E_identity")
    return NoisyField(t, raw, ident_s, analysis.odr_rescale(raw, ident_s, e0), e0)
