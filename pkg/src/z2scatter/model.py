"""Lattice, minimal-gauge-link Hamiltonian and exact-diagonalization oracle.

Register layout: fermion qubits ``f_0 .. f_{N-1}`` are qubits ``0 .. N-1``,
the remnant boson link ``b_{N-1}`` is qubit ``N``; ancillas follow.  A
fermion qubit in ``|1>`` is an occupied staggered site, the boson qubit in
``|0>`` is the electric-field state ``up`` (``sigma_z = +1``).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .pauli import PauliSum

DENSE_LIMIT = 4096
MAX_SECTOR_DIM = 200_000


class DimensionError(ValueError):
    """Raised when a sector is too large for the exact solver."""

    def __init__(self, size: int, limit: int = MAX_SECTOR_DIM):
        super().__init__(f"sector dimension {size} exceeds limit {limit}")
        self.size = size
        self.limit = limit


@dataclass(frozen=True)
class LatticeParams:
    """Physical sites ``n_phys`` (N_P), fermion mass and electric coupling.

    ``hopping`` scales the hopping Hamiltonian; it is 1 for the physical model
    and only set to 0 in limit checks.
    """

    n_phys: int
    mass: float = 1.0
    eps: float = -0.3
    hopping: float = 1.0

    def __post_init__(self):
        if self.n_phys < 1:
            raise ValueError("n_phys must be >= 1")
        if self.mass < 0:
            raise ValueError("mass must be non-negative")

    @property
    def n_stag(self) -> int:
        return 2 * self.n_phys

    @property
    def n_system(self) -> int:
        return self.n_stag + 1

    @property
    def boson(self) -> int:
        return self.n_stag

    @property
    def alpha_n(self) -> int:
        return (-1) ** (self.n_phys + 1)


def gamma(n: int) -> int:
    """Sign of the n-th electric string (always real)."""
    p = n if n % 2 == 0 else n + 1
    return int(round((1j ** p).real))


def brillouin_zone(params: LatticeParams) -> list[float]:
    """Physical momenta in [-pi/2, pi/2), ascending."""
    np_ = params.n_phys
    ks = [math.pi * j / np_ for j in range(-np_, np_)]
    # integer test avoids float edge effects at -pi/2
    return [k for j, k in zip(range(-np_, np_), ks) if -np_ <= 2 * j < np_]


def wrap_momentum(k: float) -> float:
    """Map k into [-pi/2, pi/2) modulo pi."""
    return (k + math.pi / 2) % math.pi - math.pi / 2


def hopping_terms(params: LatticeParams) -> PauliSum:
    n, N = params.n_system, params.n_stag
    terms = []
    c = 0.25 * params.hopping
    for i in range(N - 1):
        for p in "XY":
            w = ["I"] * n
            w[i] = w[i + 1] = p
            terms.append((complex(c), "".join(w)))
    for p in "XY":
        w = ["I"] * n
        w[N - 1] = w[0] = p
        w[params.boson] = "X"
        terms.append((complex(c * params.alpha_n), "".join(w)))
    return PauliSum(n, terms, hermitian=True)


def mass_terms(params: LatticeParams) -> PauliSum:
    n = params.n_system
    return PauliSum(
        n,
        [(complex(0.5 * params.mass * (-1) ** (i + 1)), _word(n, {i: "Z"}))
         for i in range(params.n_stag)],
        hermitian=True,
    )


def electric_terms(params: LatticeParams, eps: float | None = None) -> PauliSum:
    n, N = params.n_system, params.n_stag
    e = params.eps if eps is None else eps
    terms = [(complex(e), _word(n, {params.boson: "Z"}))]
    for i in range(N - 1):
        letters = {j: "Z" for j in range(i + 1)}
        letters[params.boson] = "Z"
        terms.append((complex(e * gamma(i)), _word(n, letters)))
    return PauliSum(n, terms, hermitian=True)


def build_hamiltonian(params: LatticeParams) -> PauliSum:
    """H = H^h + H^m + H^eps as a Pauli sum on N+1 qubits."""
    h = hopping_terms(params) + mass_terms(params) + electric_terms(params)
    h.hermitian = True
    return h


def charge_operator(params: LatticeParams) -> PauliSum:
    """Total fermion number Q = sum (1 - Z_n)/2."""
    n = params.n_system
    terms = [(complex(params.n_stag / 2), "I" * n)]
    terms += [(-0.5 + 0j, _word(n, {i: "Z"})) for i in range(params.n_stag)]
    return PauliSum(n, terms, hermitian=True)


def scv_state(params: LatticeParams) -> int:
    """Strong-coupling vacuum as a basis index of the system register."""
    x = 0
    for i in range(1, params.n_stag, 2):
        x |= 1 << i
    if params.eps > 0:
        x |= 1 << params.boson
    return x


def _word(n: int, letters: dict[int, str]) -> str:
    w = ["I"] * n
    for q, c in letters.items():
        w[q] = c
    return "".join(w)


@dataclass(frozen=True)
class SectorBasis:
    """System basis states with exactly N_P occupied fermion sites."""

    params: LatticeParams
    states: np.ndarray = field(repr=False)

    @classmethod
    def build(cls, params: LatticeParams) -> "SectorBasis":
        N = params.n_stag
        dim = 2 * math.comb(N, params.n_phys)
        if dim > MAX_SECTOR_DIM:
            raise DimensionError(dim)
        occ = []
        for combo in combinations(range(N), params.n_phys):
            x = 0
            for i in combo:
                x |= 1 << i
            occ.append(x)
        occ.sort()
        b = 1 << params.boson
        states = np.array(sorted(occ + [x | b for x in occ]), dtype=np.int64)
        return cls(params, states)

    def __len__(self):
        return self.states.size

    @cached_property
    def index(self) -> dict[int, int]:
        return {int(x): i for i, x in enumerate(self.states)}

    def embed(self, v: np.ndarray, n_qubits: int | None = None) -> np.ndarray:
        """Sector vector -> full register vector (ancillas in |0>)."""
        n = self.params.n_system if n_qubits is None else n_qubits
        out = np.zeros(1 << n, dtype=complex)
        out[self.states] = v
        return out

    def project(self, psi: np.ndarray) -> np.ndarray:
        """Full system-register vector -> sector components."""
        return np.asarray(psi)[self.states]

    def restrict(self, op: PauliSum) -> sp.csr_matrix:
        """Matrix of a sector-preserving operator in this basis."""
        m = op.to_sparse(self.params.n_system)
        return m[self.states][:, self.states].tocsr()


@dataclass
class EigenSolution:
    energies: np.ndarray
    states: np.ndarray  # columns are eigenvectors in the sector basis
    momentum_labels: list[float] | None = None
    translation_phases: np.ndarray | None = None


def translation_operator(basis: SectorBasis) -> sp.csr_matrix:
    """Shift by one physical site (two staggered sites) in the sector basis.

    The shift is defined on the explicit-link states fixed by Gauss's law and
    mapped back to the single remnant link.
    """
    p = basis.params
    N = p.n_stag
    rows, cols, data = [], [], []
    for col, x in enumerate(basis.states):
        x = int(x)
        f = [(x >> i) & 1 for i in range(N)]
        s_last = 1 - 2 * ((x >> p.boson) & 1)
        # links from Gauss's law: s_n = s_{N-1} * (-1)^{sum_{m<=n} Qbar_m}
        links = []
        acc = 0
        for n in range(N):
            acc += f[n] - (n % 2)
            links.append(s_last * (-1) ** acc)
        f2 = [f[(n - 2) % N] for n in range(N)]
        s2_last = links[(N - 1 - 2) % N]
        y = sum(b << i for i, b in enumerate(f2))
        if s2_last < 0:
            y |= 1 << p.boson
        w = f[N - 2] + f[N - 1]
        sign = (-1) ** (w * (p.n_phys - w))
        rows.append(basis.index[y])
        cols.append(col)
        data.append(float(sign))
    d = len(basis)
    return sp.csr_matrix((data, (rows, cols)), shape=(d, d))


class ExactSystem:
    """Cached exact solver for one lattice configuration."""

    def __init__(self, params: LatticeParams):
        self.params = params
        self.hamiltonian = build_hamiltonian(params)
        self.basis = SectorBasis.build(params)
        self.matrix = self.basis.restrict(self.hamiltonian)

    @cached_property
    def translation(self) -> sp.csr_matrix:
        return translation_operator(self.basis)

    @cached_property
    def spectrum(self) -> tuple[np.ndarray, np.ndarray]:
        return la.eigh(self.matrix.toarray())

    def diagonalize(self, n_states: int = 1) -> EigenSolution:
        return diagonalize(self.hamiltonian, self.basis, n_states, translation=self.translation)

    def evolve(self, v: np.ndarray, t: float) -> np.ndarray:
        w, U = self.spectrum
        return U @ (np.exp(-1j * t * w) * (U.conj().T @ v))

    def ground_state(self) -> tuple[float, np.ndarray]:
        w, U = self.spectrum
        return float(w[0]), _fix_phase(U[:, 0])


def _fix_phase(v: np.ndarray) -> np.ndarray:
    i = int(np.argmax(np.abs(v) > np.abs(v).max() * (1 - 1e-9)))
    return v * (abs(v[i]) / v[i])


def diagonalize(
    H: PauliSum,
    basis: SectorBasis,
    n_states: int,
    translation: sp.spmatrix | None = None,
    degeneracy_tol: float = 1e-8,
) -> EigenSolution:
    """Lowest ``n_states`` eigenpairs of H restricted to the sector.

    Degenerate subspaces are rotated into eigenvectors of ``translation``
    (when given) and ordered by eigenvalue phase; every vector's largest
    component is made real and positive.
    """
    dim = len(basis)
    if dim > MAX_SECTOR_DIM:
        raise DimensionError(dim)
    M = basis.restrict(H)
    n_states = min(n_states, dim)
    if dim <= DENSE_LIMIT:
        w, U = la.eigh(M.toarray())
    else:
        k = min(dim - 2, n_states + 8)
        w, U = spla.eigsh(M, k=k, which="SA", tol=1e-13)
        order = np.argsort(w)
        w, U = w[order], U[:, order]
    # keep whole degenerate blocks that straddle the cut
    cut = n_states
    while cut < len(w) and abs(w[cut] - w[n_states - 1]) < degeneracy_tol:
        cut += 1
    w, U = w[:cut].copy(), U[:, :cut].copy()
    phases = None
    if translation is not None:
        U, phases = _resolve_blocks(w, U, translation, degeneracy_tol)
    U = np.column_stack([_fix_phase(U[:, i]) for i in range(U.shape[1])])
    return EigenSolution(w[:n_states], U[:, :n_states], None,
                         None if phases is None else phases[:n_states])


def _resolve_blocks(w, U, T, tol):
    U = U.astype(complex)
    phases = np.zeros(len(w))
    i = 0
    while i < len(w):
        j = i + 1
        while j < len(w) and abs(w[j] - w[i]) < tol:
            j += 1
        block = U[:, i:j]
        t = block.conj().T @ (T @ block)
        lam, vecs = np.linalg.eig(t)
        if np.abs(np.abs(lam) - 1).max() > 1e-8:
            raise ValueError("degenerate subspace is not translation invariant")
        ang = np.angle(lam)
        order = np.lexsort((np.round(ang, 10),))
        vecs = vecs[:, order]
        q, _ = np.linalg.qr(vecs)
        # restore exact eigenvectors when eigenvalues are distinct
        if len(set(np.round(ang, 8))) == len(ang):
            q = vecs / np.linalg.norm(vecs, axis=0)
        U[:, i:j] = block @ q
        phases[i:j] = ang[order]
        i = j
    return U, phases


def label_momenta(sol: EigenSolution, params: LatticeParams,
                  translation: sp.spmatrix | None = None) -> EigenSolution:
    """Attach a momentum k to each state from its translation eigenvalue.

    A state with momentum k picks up ``exp(-2ik)`` under a one-site shift,
    measured relative to the first (ground) state.
    """
    if translation is None:
        translation = translation_operator(SectorBasis.build(params))
    U = sol.states
    lam = np.array([np.vdot(U[:, i], translation @ U[:, i]) for i in range(U.shape[1])])
    resid = [np.linalg.norm(translation @ U[:, i] - lam[i] * U[:, i]) for i in range(U.shape[1])]
    if max(resid) > 1e-8:
        raise ValueError("states are not translation eigenvectors; resolve degeneracies first")
    ref = lam[0]
    zone = np.array(brillouin_zone(params))
    labels = []
    for l in lam:
        k = wrap_momentum(-np.angle(l / ref) / 2)
        labels.append(float(zone[np.argmin(np.abs(np.angle(np.exp(2j * (zone - k)))))]))
    return EigenSolution(sol.energies, sol.states, labels, np.angle(lam))


def exact_evolve(H: PauliSum, basis: SectorBasis, v: np.ndarray, t: float) -> np.ndarray:
    """e^{-itH} v for a sector vector, via dense eigendecomposition."""
    if len(basis) > MAX_SECTOR_DIM:
        raise DimensionError(len(basis))
    w, U = la.eigh(basis.restrict(H).toarray())
    return U @ (np.exp(-1j * t * w) * (U.conj().T @ v))


def fidelity(a: np.ndarray, b: np.ndarray) -> float:
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(abs(np.vdot(a, b)) ** 2)


def meson_reference(sol: EigenSolution, basis: SectorBasis, k: float,
                    flip_threshold: float = 0.5) -> tuple[int, np.ndarray]:
    """Lowest single-meson eigenstate with momentum ``k``.

    The vacuum (state 0) is skipped, as is any state whose weight on the
    flipped boson link (relative to the vacuum) reaches ``flip_threshold``;
    such states are flux excitations rather than mesons.
    """
    if sol.momentum_labels is None:
        raise ValueError("label momenta first")
    boson = basis.params.boson
    flipped = ((basis.states >> boson) & 1).astype(bool)
    vac = sol.states[:, 0]
    vac_up = np.sum(np.abs(vac[~flipped]) ** 2) >= 0.5
    bad = flipped if vac_up else ~flipped
    for i in range(1, len(sol.energies)):
        if abs(sol.momentum_labels[i] - k) > 1e-9:
            continue
        if np.sum(np.abs(sol.states[bad, i]) ** 2) >= flip_threshold:
            continue
        return i, sol.states[:, i]
    raise LookupError(f"no meson state with k={k} among {len(sol.energies)} levels")


def reference_states(system: ExactSystem, momenta, start: int = 16) -> dict[float, tuple[float, np.ndarray]]:
    """ED single-meson references {k: (energy, vector)}; grows the solve until all k are found."""
    n = start
    dim = len(system.basis)
    while True:
        sol = label_momenta(system.diagonalize(min(n, dim - 1)), system.params, system.translation)
        try:
            out = {}
            for k in momenta:
                i, v = meson_reference(sol, system.basis, k)
                out[k] = (float(sol.energies[i]), v)
            return out
        except LookupError:
            if n >= dim - 1:
                raise
            n *= 2
