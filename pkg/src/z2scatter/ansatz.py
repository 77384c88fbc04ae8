"""Meson creation operators: kinematics, bare mesons and wave-packet coefficients."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import LatticeParams, brillouin_zone
from .pauli import PauliSum, sigma_minus, sigma_plus, z_string

ZERO_TOL = 1e-12
COVERAGE_TOL = 1e-12


class SingularKinematics(ValueError):
    pass


@dataclass(frozen=True)
class KinematicTable:
    params: LatticeParams
    momenta: tuple[float, ...]
    omega: dict[float, float]
    v: dict[float, float]
    cfac: dict[tuple[float, int], complex] = field(repr=False)
    dfac: dict[tuple[float, int], complex] = field(repr=False)


def kinematic_factors(params: LatticeParams, mass: float | None = None) -> KinematicTable:
    """Free staggered-fermion plane-wave factors over the Brillouin zone."""
    m = params.mass if mass is None else mass
    zone = tuple(brillouin_zone(params))
    omega, v, cfac, dfac = {}, {}, {}, {}
    for k in zone:
        w = math.sqrt(m * m + math.sin(k) ** 2)
        if w == 0:
            raise SingularKinematics(f"omega vanishes at k={k} for mass={m}")
        omega[k] = w
        v[k] = math.sin(k) / (m + w)
        amp = math.sqrt((m + w) / (2 * math.pi * w))
        for n in range(params.n_stag):
            ph = amp * np.exp(1j * k * n)
            if n % 2 == 0:
                cfac[(k, n)] = ph
                dfac[(k, n)] = -v[k] * ph
            else:
                cfac[(k, n)] = v[k] * ph
                dfac[(k, n)] = ph
    return KinematicTable(params, zone, omega, v, cfac, dfac)


def periodic_distance(m: int, n: int, N: int) -> int:
    d = abs(m - n)
    return min(d, N - d)


def meson_pieces(m: int, n: int, params: LatticeParams) -> list[tuple[float, int, list[int], bool]]:
    """Pieces of M_{m,n} (m != n) as ``(coeff, length, z_qubits, wraps)``.

    Each piece is ``coeff * sigma^-_m sigma^+_n Z(z_qubits) [X_boson]``:
    sigma^- creates at m, sigma^+ annihilates at n.  Mesons of length N_P get
    both wrappings with weight 1/sqrt(2).
    """
    N, P = params.n_stag, params.n_phys
    d = abs(m - n)
    lo, hi = min(m, n), max(m, n)
    inner = list(range(lo + 1, hi))
    outer = list(range(0, lo)) + list(range(hi + 1, N))
    short_sign = 1.0 if m < n else -1.0
    wrap_sign = float((-1) ** P if m < n else (-1) ** (P + 1))
    if d < P:
        return [(short_sign, d, inner, False)]
    if d > P:
        return [(wrap_sign, N - d, outer, True)]
    r = 1 / math.sqrt(2)
    return [(short_sign * r, d, inner, False), (wrap_sign * r, N - d, outer, True)]


def meson_operator(m: int, n: int, params: LatticeParams) -> PauliSum:
    """Jordan-Wigner form of the bare meson M_{m,n} on the system register."""
    N, nq = params.n_stag, params.n_system
    if not (0 <= m < N and 0 <= n < N):
        raise ValueError(f"site out of range: ({m}, {n})")
    if m == n:
        return PauliSum(nq, [(0.5 + 0j, "I" * nq), (-0.5 + 0j, z_string(nq, [m]).terms[0][1])])
    out = PauliSum(nq, [])
    for c, _, zs, wraps in meson_pieces(m, n, params):
        op = sigma_minus(nq, m) * sigma_plus(nq, n) * z_string(nq, zs)
        if wraps:
            op = op * PauliSum.single(nq, 1.0, {params.boson: "X"})
        out = out + op * c
    return out.simplify()


def bare_coefficients(k: float, table: KinematicTable) -> dict[tuple[int, int], complex]:
    """C-bar^k_{m,n}: momentum p imparted at m, q at n, with p + q = k exactly."""
    zone = table.momenta
    N = table.params.n_stag
    pairs = [(p, q) for p in zone for q in zone if abs(p + q - k) < 1e-9]
    out = {}
    for m in range(N):
        for n in range(N):
            out[(m, n)] = sum(table.cfac[(p, m)] * table.dfac[(q, n)] for p, q in pairs)
    return out


@dataclass
class AnsatzParams:
    """Length-suppression parameters alpha[(k, order, parity)]."""

    order: int
    alphas: dict[tuple[float, int, int], float] = field(default_factory=dict)

    def get(self, k: float, j: int, parity: int) -> float:
        key = (_kkey(k), j, parity)
        for (kk, jj, pp), val in self.alphas.items():
            if abs(kk - key[0]) < 1e-9 and jj == j and pp == parity:
                return val
        raise KeyError(f"missing alpha for k={k}, order {j}, parity {parity}")

    def set(self, k: float, j: int, parity: int, value: float):
        for key in list(self.alphas):
            if abs(key[0] - k) < 1e-9 and key[1] == j and key[2] == parity:
                del self.alphas[key]
        self.alphas[(_kkey(k), j, parity)] = float(value)

    def covers(self, k: float, order: int) -> bool:
        try:
            for j in range(1, order + 1):
                self.get(k, j, 0)
                self.get(k, j, 1)
        except KeyError:
            return False
        return True

    def vector(self, k: float, order: int) -> np.ndarray:
        return np.array([self.get(k, j, p) for j in range(1, order + 1) for p in (0, 1)])

    @classmethod
    def from_vector(cls, k: float, order: int, x) -> "AnsatzParams":
        ap = cls(order)
        it = iter(x)
        for j in range(1, order + 1):
            for p in (0, 1):
                ap.set(k, j, p, next(it))
        return ap

    def merged(self, other: "AnsatzParams") -> "AnsatzParams":
        out = AnsatzParams(max(self.order, other.order), dict(self.alphas))
        for (k, j, p), v in other.alphas.items():
            out.set(k, j, p, v)
        return out


def _kkey(k: float) -> float:
    return round(float(k), 12)


@dataclass
class MesonCoefficients:
    entries: dict[tuple[int, int], complex]
    order: int
    normalization: dict[int, float] = field(default_factory=dict)


def order_j_coefficients(k: float, ap: AnsatzParams, table: KinematicTable,
                         order: int | None = None,
                         cbar: dict | None = None) -> MesonCoefficients:
    """C^{(j),k}_{m,n} for all lengths up to ``order``.

    Entries of length ``l >= 1`` are damped by ``exp(-alpha l^2)`` (alpha picked
    by the parity of ``m``); the whole table is then normalized to unit norm.
    """
    j = ap.order if order is None else order
    N = table.params.n_stag
    if cbar is None:
        cbar = bare_coefficients(k, table)
    entries: dict[tuple[int, int], complex] = {}
    for (m, n), c in cbar.items():
        ln = periodic_distance(m, n, N)
        if ln > j:
            continue
        entries[(m, n)] = c if ln == 0 else math.exp(-ap.get(k, ln, m % 2) * ln * ln) * c
    tot = math.sqrt(sum(abs(x) ** 2 for x in entries.values()))
    if tot == 0:
        raise SingularKinematics(f"no meson amplitude at k={k}")
    entries = {key: x / tot for key, x in entries.items()}
    return MesonCoefficients(entries, j, {"total": tot})


@dataclass(frozen=True)
class WavePacketProfile:
    mu: float
    sigma: float
    kbar: float
    values: dict[float, complex]
    norm_const: float

    @property
    def momenta(self) -> list[float]:
        return sorted(self.values)

    def vector(self) -> np.ndarray:
        return np.array([self.values[k] for k in self.momenta])


def gaussian_profile(mu: float, sigma: float, kbar: float, params: LatticeParams) -> WavePacketProfile:
    """Gaussian packet centred at ``kbar`` in momentum and ``mu`` in position."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    zone = brillouin_zone(params)
    raw = {k: np.exp(-1j * k * mu) * math.exp(-((k - kbar) ** 2) / (4 * sigma ** 2)) for k in zone}
    norm = 1 / math.sqrt(sum(abs(v) ** 2 for v in raw.values()))
    return WavePacketProfile(mu, sigma, kbar, {k: v * norm for k, v in raw.items()}, norm)


def delta_profile(k: float, params: LatticeParams) -> WavePacketProfile:
    """Profile concentrated on a single momentum (used for the b_k^dagger ansatz)."""
    zone = brillouin_zone(params)
    vals = {q: (1.0 + 0j if abs(q - k) < 1e-9 else 0j) for q in zone}
    if not any(abs(v) for v in vals.values()):
        raise ValueError(f"k={k} is not in the Brillouin zone")
    return WavePacketProfile(0.0, math.inf, k, vals, 1.0)


def profile_overlap(a: WavePacketProfile, b: WavePacketProfile) -> complex:
    """(a|b) = sum_k a*(k) b(k)."""
    if len(a.values) != len(b.values) or any(
        abs(x - y) > 1e-12 for x, y in zip(a.momenta, b.momenta)
    ):
        raise ValueError("profiles live on different Brillouin zones")
    return complex(np.vdot(a.vector(), b.vector()))


def wavepacket_coefficients(profile: WavePacketProfile, ap: AnsatzParams,
                            table: KinematicTable, order: int | None = None) -> MesonCoefficients:
    """C_{m,n} = sum_k Psi(k) C^{(j),k}_{m,n} (not renormalized)."""
    j = ap.order if order is None else order
    out: dict[tuple[int, int], complex] = {}
    for k, psi in profile.values.items():
        if abs(psi) <= COVERAGE_TOL:
            continue
        if not ap.covers(k, j):
            raise KeyError(f"ansatz parameters do not cover k={k} at order {j}")
        for key, c in order_j_coefficients(k, ap, table, j).entries.items():
            out[key] = out.get(key, 0j) + psi * c
    return MesonCoefficients(out, j, {})


def meson_state(coeffs: MesonCoefficients, params: LatticeParams, vac: np.ndarray,
                basis=None) -> np.ndarray:
    """b^dagger|vac> = sum C_{m,n} M_{m,n}|vac> for a full-register or sector vector."""
    out = np.zeros_like(vac, dtype=complex)
    for (m, n), c in coeffs.entries.items():
        if c == 0:
            continue
        op = meson_operator(m, n, params)
        if basis is None:
            out += c * op.apply(vac)
        else:
            out += c * basis.project(op.apply(basis.embed(vac)))
    return out
