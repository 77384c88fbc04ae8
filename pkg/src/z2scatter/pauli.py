"""Weighted sums of Pauli strings.

Words are strings over ``IXYZ`` indexed by qubit, so ``word[q]`` is the
letter on qubit ``q``.  Amplitude index bit ``q`` is qubit ``q`` (qubit 0 is
the least significant bit).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
import scipy.sparse as sp

# single-qubit products: (a, b) -> (phase, letter) with a*b = phase * letter
_MUL = {
    ("I", "I"): (1, "I"), ("I", "X"): (1, "X"), ("I", "Y"): (1, "Y"), ("I", "Z"): (1, "Z"),
    ("X", "I"): (1, "X"), ("X", "X"): (1, "I"), ("X", "Y"): (1j, "Z"), ("X", "Z"): (-1j, "Y"),
    ("Y", "I"): (1, "Y"), ("Y", "X"): (-1j, "Z"), ("Y", "Y"): (1, "I"), ("Y", "Z"): (1j, "X"),
    ("Z", "I"): (1, "Z"), ("Z", "X"): (1j, "Y"), ("Z", "Y"): (-1j, "X"), ("Z", "Z"): (1, "I"),
}


def word_product(a: str, b: str) -> tuple[complex, str]:
    phase = 1 + 0j
    out = []
    for x, y in zip(a, b):
        p, letter = _MUL[(x, y)]
        phase *= p
        out.append(letter)
    return phase, "".join(out)


def word_masks(word: str) -> tuple[int, int, int]:
    """Return (flip, zmask, ny) for a word.

    ``P|x> = i**ny * (-1)**popcount(x & zmask) |x ^ flip>`` where ``zmask``
    marks the Y and Z letters.
    """
    flip = zmask = ny = 0
    for q, c in enumerate(word):
        if c in "XY":
            flip |= 1 << q
        if c in "YZ":
            zmask |= 1 << q
        if c == "Y":
            ny += 1
    return flip, zmask, ny


def parity(x: np.ndarray, mask: int) -> np.ndarray:
    """Parity (0/1) of the bits of ``x`` selected by ``mask``."""
    v = np.bitwise_and(x, mask)
    out = np.zeros_like(v)
    while True:
        nz = v != 0
        if not nz.any():
            return out
        out[nz] ^= 1
        v[nz] &= v[nz] - 1


def apply_word(word: str, psi: np.ndarray) -> np.ndarray:
    """Apply a single Pauli word to a full-register vector."""
    flip, zmask, ny = word_masks(word)
    idx = np.arange(psi.size, dtype=np.int64)
    ph = (1j) ** ny * (1 - 2 * parity(idx, zmask))
    out = np.empty_like(psi, dtype=complex)
    out[idx ^ flip] = ph * psi
    return out


@dataclass
class PauliSum:
    """A weighted sum of Pauli words on a fixed number of qubits."""

    n_qubits: int
    terms: list[tuple[complex, str]] = field(default_factory=list)
    hermitian: bool = False

    def __post_init__(self):
        for _, w in self.terms:
            if len(w) != self.n_qubits:
                raise ValueError(f"word {w!r} does not span {self.n_qubits} qubits")
            if set(w) - set("IXYZ"):
                raise ValueError(f"bad Pauli letter in {w!r}")

    @classmethod
    def single(cls, n_qubits: int, coeff: complex, letters: dict[int, str]) -> "PauliSum":
        w = ["I"] * n_qubits
        for q, c in letters.items():
            w[q] = c
        return cls(n_qubits, [(complex(coeff), "".join(w))])

    @classmethod
    def identity(cls, n_qubits: int, coeff: complex = 1.0) -> "PauliSum":
        return cls(n_qubits, [(complex(coeff), "I" * n_qubits)])

    def __len__(self):
        return len(self.terms)

    def __add__(self, other: "PauliSum") -> "PauliSum":
        self._check(other)
        return PauliSum(self.n_qubits, self.terms + other.terms)

    def __sub__(self, other: "PauliSum") -> "PauliSum":
        return self + other * -1

    def __mul__(self, other):
        if isinstance(other, PauliSum):
            self._check(other)
            out = []
            for ca, wa in self.terms:
                for cb, wb in other.terms:
                    ph, w = word_product(wa, wb)
                    out.append((ca * cb * ph, w))
            return PauliSum(self.n_qubits, out).simplify()
        return PauliSum(self.n_qubits, [(c * other, w) for c, w in self.terms])

    __rmul__ = __mul__

    def _check(self, other: "PauliSum"):
        if other.n_qubits != self.n_qubits:
            raise ValueError("qubit count mismatch")

    def adjoint(self) -> "PauliSum":
        return PauliSum(self.n_qubits, [(np.conj(c), w) for c, w in self.terms])

    def simplify(self, tol: float = 1e-14) -> "PauliSum":
        """Merge equal words, drop vanishing terms and sort canonically."""
        acc: dict[str, complex] = {}
        for c, w in self.terms:
            acc[w] = acc.get(w, 0) + c
        terms = [(c, w) for w, c in sorted(acc.items()) if abs(c) > tol]
        return PauliSum(self.n_qubits, terms, self.hermitian)

    def commutator(self, other: "PauliSum") -> "PauliSum":
        return (self * other - other * self).simplify()

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        a = self.simplify()
        b = self.adjoint().simplify()
        if [w for _, w in a.terms] != [w for _, w in b.terms]:
            return False
        return all(abs(x - y) <= tol for (x, _), (y, _) in zip(a.terms, b.terms))

    def real_terms(self) -> "PauliSum":
        """Drop vanishing imaginary parts (raises if any are significant)."""
        out = []
        for c, w in self.terms:
            if abs(c.imag) > 1e-12:
                raise ValueError(f"coefficient of {w} is not real: {c}")
            out.append((complex(c.real), w))
        return PauliSum(self.n_qubits, out, self.hermitian)

    def to_sparse(self, n_total: int | None = None) -> sp.csr_matrix:
        """Sparse matrix on ``n_total`` qubits (extra qubits act as identity)."""
        n = self.n_qubits if n_total is None else n_total
        dim = 1 << n
        idx = np.arange(dim, dtype=np.int64)
        rows, cols, data = [], [], []
        for c, w in self.terms:
            flip, zmask, ny = word_masks(w)
            ph = c * (1j) ** ny * (1 - 2 * parity(idx, zmask))
            rows.append(idx ^ flip)
            cols.append(idx)
            data.append(ph)
        if not rows:
            return sp.csr_matrix((dim, dim), dtype=complex)
        m = sp.coo_matrix(
            (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
            shape=(dim, dim),
        )
        return m.tocsr()

    def apply(self, psi: np.ndarray) -> np.ndarray:
        n = int(np.log2(psi.size))
        out = np.zeros(psi.size, dtype=complex)
        idx = np.arange(psi.size, dtype=np.int64)
        for c, w in self.terms:
            w = w + "I" * (n - self.n_qubits)
            flip, zmask, ny = word_masks(w)
            out[idx ^ flip] += c * (1j) ** ny * (1 - 2 * parity(idx, zmask)) * psi
        return out

    def expectation(self, psi: np.ndarray) -> complex:
        return complex(np.vdot(psi, self.apply(psi)))

    def extend(self, n_qubits: int) -> "PauliSum":
        """Pad every word with identities up to ``n_qubits``."""
        pad = "I" * (n_qubits - self.n_qubits)
        return PauliSum(n_qubits, [(c, w + pad) for c, w in self.terms], self.hermitian)


def sigma_minus(n_qubits: int, q: int) -> PauliSum:
    """|1><0| on qubit q; occupied fermion sites are |1>."""
    return PauliSum(n_qubits, [(0.5, _at(n_qubits, q, "X")), (-0.5j, _at(n_qubits, q, "Y"))])


def sigma_plus(n_qubits: int, q: int) -> PauliSum:
    """|0><1| on qubit q."""
    return PauliSum(n_qubits, [(0.5, _at(n_qubits, q, "X")), (0.5j, _at(n_qubits, q, "Y"))])


def z_string(n_qubits: int, qubits: Iterable[int]) -> PauliSum:
    w = ["I"] * n_qubits
    for q in qubits:
        w[q] = "Z"
    return PauliSum(n_qubits, [(1.0, "".join(w))])


def _at(n: int, q: int, c: str) -> str:
    w = ["I"] * n
    w[q] = c
    return "".join(w)
