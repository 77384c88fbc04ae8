"""Dense statevector engine, shot sampling and stochastic Pauli noise.

Amplitude index bit ``q`` is qubit ``q``.  Gate kernels act on arrays whose
last axis has length ``2**n``; any leading axes are treated as a batch, which
is how noisy trajectories are run side by side.
"""
from __future__ import annotations

import math
from collections import Counter
from collections.abc import Sequence
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .pauli import PauliSum

_I2 = np.eye(2, dtype=complex)
_X = np.array([[0, 1], [1, 0]], dtype=complex)
_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
_Z = np.array([[1, 0], [0, -1]], dtype=complex)
_H = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)
_S = np.diag([1, 1j])
_PAULI = {"I": _I2, "X": _X, "Y": _Y, "Z": _Z}

# rotation kinds: exp(-i angle/2 P) with P the listed word over the gate's qubits
ROTATIONS = {
    "RX": "X", "RY": "Y", "RZ": "Z",
    "RXX": "XX", "RYY": "YY", "RZZ": "ZZ",
    "R_XXX": "XXX", "R_YXY": "YXY",
}
FIXED = {"H": _H, "X": _X, "Y": _Y, "Z": _Z, "S": _S, "SDG": _S.conj()}
# controlled kinds: control qubit first, then the base gate's qubits
CONTROLLED = {"CNOT": "X", "CZ": "Z", "CRX": "RX", "CRY": "RY", "CRZ": "RZ",
              "CRXX": "RXX", "CRYY": "RYY", "CR_XXX": "R_XXX", "CR_YXY": "R_YXY"}
ARITY = {k: len(v) for k, v in ROTATIONS.items()}
ARITY.update({k: 1 for k in FIXED})
ARITY.update({k: 1 + ARITY[v] for k, v in CONTROLLED.items()})
ANGLED = set(ROTATIONS) | {k for k, v in CONTROLLED.items() if v in ROTATIONS}


class WidthMismatch(ValueError):
    pass


@lru_cache(maxsize=None)
def _word_matrix(word: str) -> np.ndarray:
    m = np.array([[1.0 + 0j]])
    for c in word:
        m = np.kron(m, _PAULI[c])
    return m


def rotation_matrix(word: str, angle: float) -> np.ndarray:
    """exp(-i angle/2 P); the first letter acts on the most significant index."""
    d = 1 << len(word)
    return math.cos(angle / 2) * np.eye(d, dtype=complex) - 1j * math.sin(angle / 2) * _word_matrix(word)


@dataclass(frozen=True)
class Gate:
    kind: str
    qubits: tuple[int, ...]
    angle: float | None = None
    control_state: int | None = None

    def __post_init__(self):
        if self.kind not in ARITY:
            raise ValueError(f"unknown gate kind {self.kind!r}")
        object.__setattr__(self, "qubits", tuple(int(q) for q in self.qubits))
        if len(self.qubits) != ARITY[self.kind]:
            raise ValueError(f"{self.kind} acts on {ARITY[self.kind]} qubits, got {self.qubits}")
        if len(set(self.qubits)) != len(self.qubits):
            raise ValueError(f"repeated qubit in {self.kind}{self.qubits}")
        if (self.kind in ANGLED) != (self.angle is not None):
            raise ValueError(f"{self.kind}: angle {'required' if self.kind in ANGLED else 'not allowed'}")
        if self.kind in CONTROLLED:
            if self.control_state is None:
                object.__setattr__(self, "control_state", 1)
            elif self.control_state not in (0, 1):
                raise ValueError("control_state must be 0 or 1")
        elif self.control_state is not None:
            raise ValueError(f"{self.kind} is not a controlled gate")

    @property
    def control(self) -> tuple[int, int] | None:
        if self.kind in CONTROLLED:
            return self.qubits[0], self.control_state
        return None

    @property
    def targets(self) -> tuple[int, ...]:
        return self.qubits[1:] if self.kind in CONTROLLED else self.qubits

    def target_matrix(self) -> np.ndarray:
        """Unitary applied to the targets (when the control condition holds)."""
        base = CONTROLLED.get(self.kind, self.kind)
        if base in ROTATIONS:
            return rotation_matrix(ROTATIONS[base], self.angle)
        return FIXED[base]

    def matrix(self) -> np.ndarray:
        """Full unitary over ``qubits`` (first qubit most significant)."""
        u = self.target_matrix()
        if self.control is None:
            return u
        d = u.shape[0]
        out = np.zeros((2 * d, 2 * d), dtype=complex)
        on = self.control_state
        out[on * d:(on + 1) * d, on * d:(on + 1) * d] = u
        off = 1 - on
        out[off * d:(off + 1) * d, off * d:(off + 1) * d] = np.eye(d)
        return out

    def inverse(self) -> "Gate":
        if self.kind in ANGLED:
            return Gate(self.kind, self.qubits, -self.angle, self.control_state)
        if self.kind == "S":
            return Gate("SDG", self.qubits)
        if self.kind == "SDG":
            return Gate("S", self.qubits)
        return self

    def dump(self) -> str:
        parts = [self.kind, ",".join(str(q) for q in self.qubits)]
        if self.angle is not None:
            parts.append(f"{self.angle:.17g}")
        if self.control_state is not None:
            parts.append(str(self.control_state))
        return " ".join(parts)

    @classmethod
    def parse(cls, line: str) -> "Gate":
        parts = line.split()
        kind, qubits = parts[0], tuple(int(q) for q in parts[1].split(","))
        rest = parts[2:]
        angle = float(rest.pop(0)) if kind in ANGLED else None
        cs = int(rest.pop(0)) if rest else None
        return cls(kind, qubits, angle, cs)


@dataclass
class Circuit:
    n_qubits: int
    gates: list[Gate] = field(default_factory=list)
    segments: dict[str, tuple[int, int]] = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def add(self, kind: str, qubits, angle: float | None = None, control_state: int | None = None):
        g = Gate(kind, tuple(qubits), angle, control_state)
        self._check(g)
        self.gates.append(g)
        return self

    def _check(self, g: Gate):
        if max(g.qubits) >= self.n_qubits or min(g.qubits) < 0:
            raise ValueError(f"{g.kind}{g.qubits} outside a {self.n_qubits}-qubit register")

    def append(self, other: "Circuit", segment: str | None = None) -> "Circuit":
        """Append ``other`` in place, keeping (and offsetting) its segments."""
        if other.n_qubits > self.n_qubits:
            raise WidthMismatch(f"cannot append {other.n_qubits}-qubit circuit to {self.n_qubits}")
        start = len(self.gates)
        self.gates.extend(other.gates)
        for name, (a, b) in other.segments.items():
            self.segments[name] = (a + start, b + start)
        if segment is not None:
            self.segments[segment] = (start, len(self.gates))
        return self

    def inverse(self) -> "Circuit":
        return Circuit(self.n_qubits, [g.inverse() for g in reversed(self.gates)])

    def __len__(self):
        return len(self.gates)

    def widened(self, n_qubits: int) -> "Circuit":
        return Circuit(n_qubits, list(self.gates), dict(self.segments), dict(self.metadata))

    def dump(self) -> str:
        return "".join(g.dump() + "\n" for g in self.gates)

    @classmethod
    def parse(cls, text: str, n_qubits: int) -> "Circuit":
        c = cls(n_qubits)
        for line in text.splitlines():
            line = line.strip()
            if line and not line.startswith("#"):
                g = Gate.parse(line)
                c._check(g)
                c.gates.append(g)
        return c

    def unitary(self) -> np.ndarray:
        """Dense matrix of the circuit (small registers only)."""
        if self.n_qubits > 12:
            raise ValueError("dense unitary limited to 12 qubits")
        d = 1 << self.n_qubits
        cols = np.eye(d, dtype=complex)
        return run(self, Statevector(self.n_qubits, cols)).amplitudes.T


@dataclass
class Statevector:
    n_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex)
        if self.amplitudes.shape[-1] != 1 << self.n_qubits:
            raise WidthMismatch(f"{self.amplitudes.shape[-1]} amplitudes for {self.n_qubits} qubits")

    @classmethod
    def basis(cls, n_qubits: int, index: int = 0) -> "Statevector":
        a = np.zeros(1 << n_qubits, dtype=complex)
        a[index] = 1
        return cls(n_qubits, a)

    def copy(self) -> "Statevector":
        return Statevector(self.n_qubits, self.amplitudes.copy())

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def widen(self, n_qubits: int) -> "Statevector":
        """Append |0> qubits above the current register."""
        a = np.zeros(self.amplitudes.shape[:-1] + (1 << n_qubits,), dtype=complex)
        a[..., : 1 << self.n_qubits] = self.amplitudes
        return Statevector(n_qubits, a)


@dataclass(frozen=True)
class NoiseModel:
    p1: float = 0.0
    p2: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not (0 <= self.p1 <= 1 and 0 <= self.p2 <= 1):
            raise ValueError("noise probabilities must lie in [0, 1]")


@dataclass
class ShotCounts:
    counts: dict[int, int]
    n_qubits: int
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    @property
    def total(self) -> int:
        return int(sum(self.counts.values()))

    def bitstring(self, x: int) -> str:
        """Qubit 0 first."""
        return "".join(str((x >> q) & 1) for q in range(self.n_qubits))

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        keys = np.fromiter(self.counts, dtype=np.int64, count=len(self.counts))
        vals = np.fromiter(self.counts.values(), dtype=np.int64, count=len(self.counts))
        return keys, vals

    def merged(self, other: "ShotCounts") -> "ShotCounts":
        c = Counter(self.counts)
        c.update(other.counts)
        return ShotCounts(dict(c), self.n_qubits, self.seed, dict(self.meta))


# ---------------------------------------------------------------- kernels

def _axis(arr_ndim: int, n: int, q: int) -> int:
    # tensor view has shape batch + (2,)*n; qubit n-1 is the first tensor axis
    return arr_ndim + (n - 1 - q)


def apply_gate(arr: np.ndarray, n: int, gate: Gate) -> None:
    """Apply ``gate`` in place to ``arr`` (shape ``batch + (2**n,)``)."""
    batch = arr.ndim - 1
    if not arr.flags.c_contiguous:
        raise ValueError("amplitude array must be C-contiguous")
    T = arr.reshape(arr.shape[:-1] + (2,) * n)
    sl = [slice(None)] * T.ndim
    ctrl = gate.control
    if ctrl is not None:
        sl[_axis(batch, n, ctrl[0])] = ctrl[1]
    sub = T[tuple(sl)]
    removed = [] if ctrl is None else [_axis(batch, n, ctrl[0])]
    axes = [_axis(batch, n, q) for q in gate.targets]
    axes = [a - sum(1 for r in removed if r < a) for a in axes]
    u = gate.target_matrix()
    if len(axes) == 1:
        _apply_1q(sub, axes[0], u)
    else:
        _apply_kq(sub, axes, u)


def _apply_1q(sub: np.ndarray, ax: int, u: np.ndarray) -> None:
    i0 = [slice(None)] * sub.ndim
    i1 = list(i0)
    i0[ax], i1[ax] = 0, 1
    i0, i1 = tuple(i0), tuple(i1)
    if u[0, 1] == 0 and u[1, 0] == 0:
        if u[0, 0] != 1:
            sub[i0] *= u[0, 0]
        if u[1, 1] != 1:
            sub[i1] *= u[1, 1]
        return
    a0 = sub[i0].copy()
    a1 = sub[i1]
    if u[0, 0] == 0 and u[1, 1] == 0:
        sub[i0] = u[0, 1] * a1
        sub[i1] = u[1, 0] * a0
        return
    new0 = u[0, 0] * a0 + u[0, 1] * a1
    sub[i1] = u[1, 0] * a0 + u[1, 1] * a1
    sub[i0] = new0


def _apply_kq(sub: np.ndarray, axes: list[int], u: np.ndarray) -> None:
    k = len(axes)
    moved = np.moveaxis(sub, axes, list(range(k)))
    flat = moved.reshape((1 << k, -1))
    moved[...] = (u @ flat).reshape(moved.shape)


def run(circuit: Circuit, initial: Statevector) -> Statevector:
    """Apply the circuit's gates in order to a copy of ``initial``."""
    if initial.n_qubits != circuit.n_qubits:
        raise WidthMismatch(f"circuit has {circuit.n_qubits} qubits, state has {initial.n_qubits}")
    arr = np.ascontiguousarray(initial.amplitudes, dtype=complex).copy()
    for g in circuit.gates:
        apply_gate(arr, circuit.n_qubits, g)
    return Statevector(circuit.n_qubits, arr)


def expectation(state: Statevector, obs: PauliSum, diagnostics: dict | None = None) -> float:
    if not obs.is_hermitian():
        raise ValueError("observable is not Hermitian")
    val = obs.extend(state.n_qubits).expectation(state.amplitudes) if obs.n_qubits < state.n_qubits \
        else obs.expectation(state.amplitudes)
    if diagnostics is not None:
        diagnostics["imag_residue"] = abs(val.imag)
    return float(val.real)


def sample(state: Statevector, shots: int, seed) -> ShotCounts:
    """Multinomial draw of ``shots`` computational-basis outcomes."""
    if shots < 1:
        raise ValueError("shots must be >= 1")
    rng = np.random.default_rng(seed)
    p = state.probabilities()
    p = p / p.sum()
    draws = rng.multinomial(shots, p)
    nz = np.nonzero(draws)[0]
    return ShotCounts({int(i): int(draws[i]) for i in nz}, state.n_qubits, seed)


# ---------------------------------------------------------------- noise

_PAULI_GATES = ("X", "Y", "Z")


def _error_gates(qubits: tuple[int, ...], code: int) -> list[Gate]:
    """Pauli string number ``code`` (1 .. 4**k - 1) on ``qubits``."""
    out = []
    for q in qubits:
        c = code & 3
        code >>= 2
        if c:
            out.append(Gate(_PAULI_GATES[c - 1], (q,)))
    return out


def run_noisy(circuit: Circuit, initial: Statevector, noise: NoiseModel, trajectories: int,
              shots_per_trajectory: int = 1, batch: int = 256, log: list | None = None,
              checkpoints: Sequence[int] | None = None):
    """Stochastic Pauli-injection trajectories.

    After each gate, with probability ``p1`` (one-qubit gates) or ``p2``
    (multi-qubit gates) a uniformly random non-identity Pauli string is applied
    to the gate's qubits.  Trajectory ``i`` draws from the generator seeded by
    ``(noise.seed, i)`` so results do not depend on batching.

    With ``checkpoints`` (gate counts), each trajectory is also sampled after
    that many gates and a list of counts, one per checkpoint, is returned.
    """
    if trajectories < 1:
        raise ValueError("trajectories must be >= 1")
    n = circuit.n_qubits
    marks = [len(circuit)] if checkpoints is None else sorted(set(int(c) for c in checkpoints))
    if marks and (marks[0] < 0 or marks[-1] > len(circuit)):
        raise ValueError("checkpoint outside the circuit")
    counts = [Counter() for _ in marks]
    plan = _error_plan(circuit, noise, trajectories)
    for start in range(0, trajectories, batch):
        rows = range(start, min(start + batch, trajectories))
        arr = np.repeat(initial.amplitudes[None, :], len(rows), axis=0)
        events = {}
        for i in rows:
            for gi, code in plan[i]:
                events.setdefault(gi, []).append((i - start, code))
        done = 0
        for m, mark in enumerate(marks):
            for gi in range(done, mark):
                g = circuit.gates[gi]
                apply_gate(arr, n, g)
                for r, code in events.get(gi, ()):
                    row = arr[r:r + 1]
                    for e in _error_gates(g.qubits, code):
                        apply_gate(row, n, e)
            done = mark
            for r, i in enumerate(rows):
                key = [noise.seed, i, 1] if checkpoints is None else [noise.seed, i, 1, mark]
                rng = np.random.default_rng(key)
                p = np.abs(arr[r]) ** 2
                for x in rng.choice(p.size, size=shots_per_trajectory, p=p / p.sum()):
                    counts[m][int(x)] += 1
    if log is not None:
        log.extend(plan)
    injected = sum(len(p) for p in plan)
    out = [ShotCounts(dict(c), n, noise.seed, {"trajectories": trajectories, "injected": injected,
                                               "gates": mark})
           for c, mark in zip(counts, marks)]
    return out[0] if checkpoints is None else out


def _error_plan(circuit: Circuit, noise: NoiseModel, trajectories: int) -> list[list[tuple[int, int]]]:
    probs = np.array([noise.p1 if len(g.qubits) == 1 else noise.p2 for g in circuit.gates])
    sizes = np.array([len(g.qubits) for g in circuit.gates])
    plan = []
    for i in range(trajectories):
        rng = np.random.default_rng([noise.seed, i, 0])
        hit = np.nonzero(rng.random(len(probs)) < probs)[0]
        codes = [int(rng.integers(1, 4 ** int(sizes[gi]))) for gi in hit]
        plan.append(list(zip(hit.tolist(), codes)))
    return plan
