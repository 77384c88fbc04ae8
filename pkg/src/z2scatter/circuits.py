"""Protocol circuits: vacuum preparation, wave packets, Trotter evolution.

All builders return :class:`Circuit` objects over a register of
``params.n_system`` system qubits followed by ancillas.  Rotations follow the
``exp(-i angle/2 P)`` convention of the simulator.
"""
from __future__ import annotations

import fnmatch
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .ansatz import MesonCoefficients, WavePacketProfile, meson_pieces, profile_overlap
from .model import LatticeParams
from .simulator import CONTROLLED, Circuit, Gate


class AncillaError(ValueError):
    pass


BOND_ORDERS = ("descending", "ascending", "even_odd")


@dataclass(frozen=True)
class GroundStateAngles:
    theta_h: float
    theta_m: float
    n_layers: int = 1
    theta_eps: float = 0.0
    bond_order: str = "descending"

    def __post_init__(self):
        if self.bond_order not in BOND_ORDERS:
            raise ValueError(f"bond_order must be one of {BOND_ORDERS}")


@dataclass(frozen=True)
class PrepScheme:
    ancilla_mode: int = 2
    wp_trotter_steps: int = 10
    theta_cutoff: float = 0.0
    order: int = 1
    term_order: str = "magnitude"

    def __post_init__(self):
        if self.term_order not in ("magnitude", "canonical"):
            raise ValueError("term_order is 'magnitude' or 'canonical'")
        if self.wp_trotter_steps < 1:
            raise ValueError("wp_trotter_steps must be >= 1")
        if self.ancilla_mode not in (1, 2):
            raise ValueError("ancilla_mode is 1 (shared) or 2 (one per packet)")
        if self.theta_cutoff < 0:
            raise ValueError("theta_cutoff must be >= 0")


APPX_I = PrepScheme(ancilla_mode=2, wp_trotter_steps=10, theta_cutoff=0.0)
APPX_II = PrepScheme(ancilla_mode=1, wp_trotter_steps=1, theta_cutoff=0.1)


@dataclass(frozen=True)
class EvolutionPlan:
    dt: float
    n_steps: int
    controlled: bool = False

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.n_steps < 0:
            raise ValueError("n_steps must be >= 0")


# ---------------------------------------------------------------- H^h, H^m, H^eps blocks

def _emit(c: Circuit, kind: str, qubits, angle=None, control=None):
    """Add a gate, or its controlled variant when ``control`` is a qubit index."""
    if control is None:
        c.add(kind, qubits, angle)
    else:
        ck = "CNOT" if kind == "X" else "C" + kind
        if ck not in CONTROLLED:
            raise ValueError(f"no controlled form of {kind}")
        c.add(ck, (control, *qubits), angle, 1)


def _bonds(params: LatticeParams, parity: int) -> list[int]:
    return [n for n in range(params.n_stag) if n % 2 == parity]


def hopping_layer(c: Circuit, params: LatticeParams, theta: float, parity: int, control=None):
    """RXX/RYY(theta) on bonds (n, n+1) with n of the given parity; the
    boundary bond (N-1, 0) uses three-qubit rotations through the boson."""
    for n in _bonds(params, parity):
        hopping_bond(c, params, theta, n, control)


def hopping_bond(c: Circuit, params: LatticeParams, theta: float, n: int, control=None):
    N = params.n_stag
    if n == N - 1:
        a = params.alpha_n * theta
        qs = (N - 1, params.boson, 0)
        _emit(c, "R_XXX", qs, a, control)
        _emit(c, "R_YXY", qs, a, control)
    else:
        _emit(c, "RXX", (n, n + 1), theta, control)
        _emit(c, "RYY", (n, n + 1), theta, control)


def mass_layer(c: Circuit, params: LatticeParams, theta: float, control=None):
    for n in range(params.n_stag):
        _emit(c, "RZ", (n,), (-1) ** (n + 1) * theta, control)


def electric_block(c: Circuit, params: LatticeParams, angle: float, control=None):
    """exp(-i (angle/2) H^eps/eps) on the sector.

    Each parity CNOT folds one more fermion Z onto the boson (anti-controlled
    on odd sites, which supplies the gamma_n signs) and is followed by an RZ on
    the boson.  After all N CNOTs the accumulated parity is even inside the
    Q = N_P sector, so the last RZ is the bare boson term and the boson is
    restored.
    """
    b = params.boson
    for n in range(params.n_stag):
        c.add("CNOT", (n, b), None, 1 if n % 2 == 0 else 0)
        _emit(c, "RZ", (b,), angle, control)


# ---------------------------------------------------------------- Q_GS and Q_Trott

def build_qgs(angles: GroundStateAngles, params: LatticeParams, n_qubits: int | None = None) -> Circuit:
    """Hopping rotations on every bond, then the mass layer.

    Bonds run N-1 (the boundary), N-2, ..., 0 by default; ``ascending`` runs
    0, ..., N-1 and ``even_odd`` applies all even bonds before the odd ones.
    Each bond conserves Q on its own.
    """
    c = Circuit(params.n_system if n_qubits is None else n_qubits)
    for _ in range(angles.n_layers):
        if angles.bond_order == "even_odd":
            hopping_layer(c, params, angles.theta_h, 0)
            hopping_layer(c, params, angles.theta_h, 1)
        else:
            bonds = range(params.n_stag)
            for n in (reversed(bonds) if angles.bond_order == "descending" else bonds):
                hopping_bond(c, params, angles.theta_h, n)
        mass_layer(c, params, angles.theta_m)
        if angles.theta_eps:
            electric_block(c, params, angles.theta_eps)
    c.segments["qgs"] = (0, len(c))
    return c


def _trotter_step(c: Circuit, params: LatticeParams, dt: float, control=None,
                  eps: float | None = None, tail_sign: float = 1.0):
    eps = params.eps if eps is None else eps
    th, tm = dt / 4, params.mass * dt / 2
    start = len(c)
    hopping_layer(c, params, th, 0, control)
    hopping_layer(c, params, th, 1, control)
    mass_layer(c, params, tm, control)
    e0 = len(c)
    electric_block(c, params, 2 * eps * dt, control)
    e1 = len(c)
    mass_layer(c, params, tail_sign * tm, control)
    # mirrored order keeps the step symmetric (second order overall)
    hopping_layer(c, params, tail_sign * th, 1, control)
    hopping_layer(c, params, tail_sign * th, 0, control)
    return start, (e0, e1)


def build_trotter_step(plan: EvolutionPlan, params: LatticeParams, n_qubits: int | None = None) -> Circuit:
    c = Circuit(params.n_system if n_qubits is None else n_qubits)
    _, eps_span = _trotter_step(c, params, plan.dt)
    c.segments["eps"] = eps_span
    return c


def build_evolution(plan: EvolutionPlan, params: LatticeParams, n_qubits: int | None = None,
                    control: int | None = None, identity: bool = False) -> Circuit:
    """``n_steps`` second-order Trotter steps.

    ``identity=True`` gives the same-shape U(0) circuit: the last two blocks run
    with ``-dt`` and the middle block with ``eps = 0``.
    """
    n = params.n_system if n_qubits is None else n_qubits
    if control is not None and control < params.n_system:
        raise AncillaError("control qubit overlaps the system register")
    c = Circuit(n)
    for s in range(plan.n_steps):
        start, eps_span = _trotter_step(c, params, plan.dt, control,
                                        eps=0.0 if identity else None,
                                        tail_sign=-1.0 if identity else 1.0)
        c.segments[f"step{s}"] = (start, len(c))
        c.segments[f"eps{s}"] = eps_span
    return c


def build_controlled_evolution(plan: EvolutionPlan, params: LatticeParams, control: int,
                               n_qubits: int | None = None) -> Circuit:
    """Evolution with every H^h / H^m gate and every H^eps RZ controlled on ``control``."""
    n = max(params.n_system, control + 1) if n_qubits is None else n_qubits
    return build_evolution(plan, params, n, control=control)


def build_hadamard_test(plan: EvolutionPlan, params: LatticeParams, ancilla: int, variant: str,
                        n_qubits: int | None = None) -> Circuit:
    """H on the ancilla, controlled U(t), then H ("re") or RX(pi/2) ("im").

    With ancilla outcome probabilities p0, p1: p0 - p1 = Re<U> for "re" and
    Im<U> for "im".
    """
    if variant not in ("re", "im"):
        raise ValueError("variant must be 're' or 'im'")
    n = max(params.n_system, ancilla + 1) if n_qubits is None else n_qubits
    c = Circuit(n)
    c.add("H", (ancilla,))
    c.append(build_controlled_evolution(plan, params, ancilla, n), segment="controlled_u")
    if variant == "re":
        c.add("H", (ancilla,))
    else:
        c.add("RX", (ancilla,), math.pi / 2)
    return c


# ---------------------------------------------------------------- Q_WP

@dataclass(frozen=True)
class ThetaTerm:
    """One exp(-i theta Theta_{m,n}) factor: c * sigma^-_m sigma^+_n Z(zq) [X_b] (x) |1><0|_a + h.c."""

    m: int
    n: int
    coeff: complex
    length: int
    zq: tuple[int, ...]
    wraps: bool

    @property
    def diagonal(self) -> bool:
        return self.m == self.n


def theta_terms(coeffs: MesonCoefficients, params: LatticeParams, tol: float = 0.0,
                order: str = "canonical") -> list[ThetaTerm]:
    """Terms of Theta_Psi in a deterministic order.

    Canonical: diagonal terms by site, then for each length forward mesons
    (n = m + l mod N) by m, then backward ones.  ``order="magnitude"`` sorts
    by decreasing |coefficient| with the canonical order breaking ties.
    """
    N = params.n_stag
    terms = []
    for (m, n), C in coeffs.entries.items():
        if abs(C) <= tol:
            continue
        if m == n:
            terms.append(ThetaTerm(m, n, complex(C), 0, (), False))
            continue
        for sgn, length, zq, wraps in meson_pieces(m, n, params):
            terms.append(ThetaTerm(m, n, complex(C) * sgn, length, tuple(zq), wraps))

    def key(t: ThetaTerm):
        if t.diagonal:
            return (0, 0, t.m, 0)
        fwd = (t.n - t.m) % N == t.length
        return (1, t.length, 0 if fwd else 1, t.m, t.wraps)

    terms = sorted(terms, key=key)
    if order == "magnitude":
        terms = sorted(terms, key=lambda t: -round(abs(t.coeff), 12))
    return terms


def term_angle(term: ThetaTerm, theta: float) -> float:
    """Magnitude of the single-qubit rotation angle the term contributes."""
    return abs(theta * term.coeff) / 2 if not term.diagonal else abs(theta * term.coeff)


def emit_theta_term(c: Circuit, term: ThetaTerm, theta: float, ancilla: int, params: LatticeParams):
    """exp(-i theta Theta_term) via the SVD pattern U^dagger exp(-i theta D) U."""
    a = ancilla
    phi = float(np.angle(term.coeff))
    mag = abs(term.coeff)
    if term.diagonal:
        m = term.m
        c.add("RZ", (a,), -phi)
        c.add("H", (a,))
        c.add("RZ", (a,), theta * mag)
        c.add("CNOT", (m, a), None, 1)
        c.add("RZ", (a,), -theta * mag)
        c.add("CNOT", (m, a), None, 1)
        c.add("H", (a,))
        c.add("RZ", (a,), phi)
        return
    m, n = term.m, term.n
    u = Circuit(c.n_qubits)
    u.add("CNOT", (a, m), None, 1)
    u.add("CNOT", (a, n), None, 1)
    if term.wraps:
        u.add("CNOT", (a, params.boson), None, 1)
    for q in term.zq:
        u.add("CZ", (a, q), None, 1)
    beta = theta * mag / 2
    c.append(u)
    c.add("RZ", (a,), -phi)
    c.add("H", (a,))
    # exp(-i theta|c| P Z_a) with P = (1 + Z_m)(1 - Z_n)/4
    c.add("RZ", (a,), beta)
    c.add("CNOT", (m, a), None, 1)
    c.add("RZ", (a,), beta)
    c.add("CNOT", (m, a), None, 1)
    c.add("CNOT", (n, a), None, 1)
    c.add("RZ", (a,), -beta)
    c.add("CNOT", (m, a), None, 1)
    c.add("RZ", (a,), -beta)
    c.add("CNOT", (m, a), None, 1)
    c.add("CNOT", (n, a), None, 1)
    c.add("H", (a,))
    c.add("RZ", (a,), phi)
    c.append(u.inverse())


def build_qwp(coeffs: MesonCoefficients, scheme: PrepScheme, ancilla: int, params: LatticeParams,
              n_qubits: int | None = None) -> Circuit:
    """exp(-i (pi/2) Theta_Psi) by a second-order product formula with
    ``scheme.wp_trotter_steps`` steps; terms whose rotation angle does not
    exceed ``scheme.theta_cutoff`` are dropped."""
    if ancilla < params.n_system:
        raise AncillaError(f"ancilla {ancilla} collides with the system register")
    if coeffs.order > scheme.order:
        raise ValueError(f"coefficients of order {coeffs.order} exceed scheme order {scheme.order}")
    n = max(params.n_system, ancilla + 1) if n_qubits is None else n_qubits
    c = Circuit(n)
    nt = scheme.wp_trotter_steps
    theta = math.pi / (4 * nt)
    terms = [t for t in theta_terms(coeffs, params, order=scheme.term_order) if term_angle(t, theta) > scheme.theta_cutoff]
    for _ in range(nt):
        for t in terms:
            emit_theta_term(c, t, theta, ancilla, params)
        for t in reversed(terms):
            emit_theta_term(c, t, theta, ancilla, params)
    c.metadata["terms"] = len(terms)
    c.segments["qwp"] = (0, len(c))
    return c


@dataclass
class InitCircuit:
    circuit: Circuit
    ancillas: list[int]
    accept: dict[int, int] = field(default_factory=dict)
    overlaps: dict[tuple[int, int], complex] = field(default_factory=dict)


def build_qinit(profiles: list[WavePacketProfile], coeff_tables: list[MesonCoefficients],
                scheme: PrepScheme, params: LatticeParams, n_ancillas: int | None = None,
                overlap_warn: float = 0.1) -> InitCircuit:
    """Prepare several packets on top of whatever state the system holds.

    Mode 1 reuses one ancilla, flipping it back with X before every further
    packet; mode 2 gives each packet its own ancilla.  The accept pattern is
    all participating ancillas in |1>.
    """
    if len(profiles) != len(coeff_tables):
        raise ValueError("one coefficient table per profile required")
    need = 1 if scheme.ancilla_mode == 1 else len(profiles)
    have = need if n_ancillas is None else n_ancillas
    if have < need:
        raise AncillaError(f"{len(profiles)} packets need {need} ancillas, {have} available")
    N1 = params.n_system
    c = Circuit(N1 + have)
    overlaps = {}
    for i in range(len(profiles)):
        for j in range(i):
            ov = profile_overlap(profiles[i], profiles[j])
            overlaps[(i, j)] = ov
            if abs(ov) > overlap_warn:
                warnings.warn(f"packets {i} and {j} overlap: |(Psi_{i}|Psi_{j})| = {abs(ov):.3f}")
    ancillas = [N1] if scheme.ancilla_mode == 1 else [N1 + i for i in range(len(profiles))]
    for i, coeffs in enumerate(coeff_tables):
        a = ancillas[0] if scheme.ancilla_mode == 1 else ancillas[i]
        if scheme.ancilla_mode == 1 and i > 0:
            c.add("X", (a,))
        c.append(build_qwp(coeffs, scheme, a, params, c.n_qubits), segment=f"qwp{i}")
    return InitCircuit(c, ancillas, {a: 1 for a in ancillas}, overlaps)


# ---------------------------------------------------------------- twirling

TWIRLS = (
    (None, None, None, None),
    ("Z", None, "Z", None),
    ("X", None, "X", "X"),
    ("X", "Y", "Y", "Z"),
)


def twirl_variants(control: int, target: int, control_state: int = 1) -> list[list[Gate]]:
    """The four Pauli-dressed forms of a CNOT (equal to it up to global phase).

    Each tuple lists (before_c, before_t, after_c, after_t).
    """
    out = []
    for bc, bt, ac, at in TWIRLS:
        seq = []
        for k, q in ((bc, control), (bt, target)):
            if k:
                seq.append(Gate(k, (q,)))
        seq.append(Gate("CNOT", (control, target), None, control_state))
        for k, q in ((ac, control), (at, target)):
            if k:
                seq.append(Gate(k, (q,)))
        out.append(seq)
    return out


def pauli_twirl(circuit: Circuit, segment: str, seed) -> Circuit:
    """Replace each CNOT inside matching segments by a random twirl variant.

    ``segment`` is a segment name or an fnmatch pattern (e.g. ``"eps*"``).
    """
    spans = [v for k, v in circuit.segments.items() if fnmatch.fnmatchcase(k, segment)]
    if not spans:
        raise KeyError(f"no segment matches {segment!r}")
    inside = np.zeros(len(circuit), dtype=bool)
    for a, b in spans:
        inside[a:b] = True
    rng = np.random.default_rng(seed)
    gates: list[Gate] = []
    remap = []
    for i, g in enumerate(circuit.gates):
        remap.append(len(gates))
        if inside[i] and g.kind == "CNOT":
            var = twirl_variants(g.qubits[0], g.qubits[1], g.control_state)[int(rng.integers(4))]
            gates.extend(var)
        else:
            gates.append(g)
    remap.append(len(gates))
    segs = {k: (remap[a], remap[b]) for k, (a, b) in circuit.segments.items()}
    return Circuit(circuit.n_qubits, gates, segs, dict(circuit.metadata))


# ---------------------------------------------------------------- counting view

def _rz(q, a):
    return Gate("RZ", (q,), a)


def _basis_in(letter: str, q: int) -> list[Gate]:
    """Gates mapping the ``letter`` eigenbasis onto the Z basis."""
    if letter == "X":
        return [Gate("H", (q,))]
    if letter == "Y":
        return [Gate("RX", (q,), math.pi / 2)]
    return []


def _basis_out(letter: str, q: int) -> list[Gate]:
    return [g.inverse() for g in reversed(_basis_in(letter, q))]


def _crz(ctrl: int, cs: int, t: int, angle: float) -> list[Gate]:
    return [_rz(t, angle / 2), Gate("CNOT", (ctrl, t), None, cs), _rz(t, -angle / 2),
            Gate("CNOT", (ctrl, t), None, cs)]


def decompose_gate(g: Gate) -> list[Gate]:
    """Exact expansion into one-qubit gates and CNOTs."""
    from .simulator import ROTATIONS
    base = CONTROLLED.get(g.kind, g.kind)
    ctrl = g.control
    if g.kind in ("CNOT",) or (ctrl is None and len(g.qubits) == 1):
        return [g]
    if g.kind == "CZ":
        t = g.qubits[1]
        return [Gate("H", (t,)), Gate("CNOT", g.qubits, None, g.control_state), Gate("H", (t,))]
    word = ROTATIONS[base]
    qs = g.targets
    pre, post = [], []
    for letter, q in zip(word, qs):
        pre += _basis_in(letter, q)
        post = _basis_out(letter, q) + post
    pivot = qs[len(qs) // 2] if len(qs) == 3 else qs[-1]
    ladder = [Gate("CNOT", (q, pivot), None, 1) for q in qs if q != pivot]
    if ctrl is None:
        core = [_rz(pivot, g.angle)]
    else:
        core = _crz(ctrl[0], ctrl[1], pivot, g.angle)
    return pre + ladder + core + ladder[::-1] + post


def decompose(circuit: Circuit) -> Circuit:
    gates: list[Gate] = []
    remap = []
    for g in circuit.gates:
        remap.append(len(gates))
        gates.extend(decompose_gate(g))
    remap.append(len(gates))
    segs = {k: (remap[a], remap[b]) for k, (a, b) in circuit.segments.items()}
    return Circuit(circuit.n_qubits, gates, segs, dict(circuit.metadata))


def count_gates(circuit: Circuit) -> tuple[int, int]:
    """(single-qubit, CNOT) counts in the decomposed view."""
    single = cnot = 0
    for g in decompose(circuit).gates:
        if g.kind == "CNOT":
            cnot += 1
        else:
            single += 1
    return single, cnot


def gate_count_rows(experiment: str, circuit: Circuit) -> list[tuple[str, str, int, int]]:
    """CSV rows (experiment, segment, single_qubit, cnot), whole circuit first."""
    rows = [(experiment, "total", *count_gates(circuit))]
    for name, (a, b) in sorted(circuit.segments.items(), key=lambda kv: kv[1]):
        rows.append((experiment, name, *count_gates(Circuit(circuit.n_qubits, circuit.gates[a:b]))))
    return rows


def qwp_cnot_formula(j: int, n_phys: int, nt: int) -> int:
    return (4 * (j * j + 9 * j + 1) * n_phys + 2 * j * j + 2 * j) * 2 * nt
