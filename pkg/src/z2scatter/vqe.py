"""Variational optimization of the vacuum circuit and of the meson ansatz.

Both objectives are exact statevector energies.  The optimizer is a bounded
Nelder-Mead simplex restarted from several seeded points; the best restart
wins, ties going to the lowest restart index.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import minimize

from .ansatz import (AnsatzParams, KinematicTable, MesonCoefficients, bare_coefficients,
                     kinematic_factors, meson_operator, order_j_coefficients, periodic_distance)
from .circuits import GroundStateAngles, PrepScheme, build_qgs, build_qwp
from .model import ExactSystem, LatticeParams, scv_state
from .simulator import Statevector, run

N_RESTARTS = 8
ALPHA_BOX = (-5.0, 5.0)


@dataclass
class OptimizeReport:
    best_params: np.ndarray
    best_energy: float
    evaluations: int
    trace: list[float] = field(default_factory=list)
    window_used: list[tuple[float, float]] = field(default_factory=list)
    extra: dict = field(default_factory=dict)


def _multistart(f, starts, bounds, fatol=1e-10, xatol=1e-7, maxiter=4000) -> OptimizeReport:
    trace = []
    evals = 0
    best = None

    def wrapped(x):
        nonlocal evals
        evals += 1
        v = f(x)
        trace.append(v) if not trace or v < trace[-1] else trace.append(trace[-1])
        return v

    for x0 in starts:
        r = minimize(wrapped, x0, method="Nelder-Mead", bounds=bounds,
                     options=dict(fatol=fatol, xatol=xatol, maxiter=maxiter, maxfev=maxiter,
                                  adaptive=len(x0) > 2))
        if best is None or r.fun < best.fun - 1e-13:
            best = r
    x = np.asarray(best.x, dtype=float)
    return OptimizeReport(x, float(f(x)), evals, trace, list(bounds))


# ---------------------------------------------------------------- vacuum

def ground_state_energy_fn(params: LatticeParams, system: ExactSystem | None = None,
                           bond_order: str = "descending"):
    """theta -> (energy, sector vector) of Q_GS(theta_h, theta_m)|SCV>."""
    system = ExactSystem(params) if system is None else system
    scv = Statevector.basis(params.n_system, scv_state(params))

    def state(x):
        c = build_qgs(GroundStateAngles(float(x[0]), float(x[1]), bond_order=bond_order), params)
        return system.basis.project(run(c, scv).amplitudes)

    def energy(x):
        v = state(x)
        return float(np.vdot(v, system.matrix @ v).real)

    return energy, state


def optimize_ground(params: LatticeParams, seeds: int = N_RESTARTS, seed: int = 0,
                    system: ExactSystem | None = None, bond_order: str = "descending") -> OptimizeReport:
    """Minimize <H> over (theta_h, theta_m) with bounded multi-start simplex."""
    system = ExactSystem(params) if system is None else system
    energy, state = ground_state_energy_fn(params, system, bond_order)
    rng = np.random.default_rng(seed)
    bounds = [(-math.pi, math.pi), (-math.pi, math.pi)]
    starts = [np.array([0.1, math.pi / 4])] + [rng.uniform(-1.0, 1.0, 2) for _ in range(seeds - 1)]
    rep = _multistart(energy, starts, bounds)
    v = state(rep.best_params)
    _, om = system.ground_state()
    rep.extra["fidelity"] = float(abs(np.vdot(om, v)) ** 2)
    rep.extra["state"] = v
    return rep


# ---------------------------------------------------------------- meson ansatz

class AnsatzObjective:
    """Energy of the accept branch of exp(-i pi/2 Theta_k)|vac>|0_a> versus the
    order-j alphas, with Theta_k = b_k^dagger sigma^-_a + h.c.

    ``mode="exact"`` uses the exact exponential (the Trotter limit of Q_WP) on
    the sector (x) ancilla space; ``mode="circuit"`` runs the Q_WP circuit with
    ``wp_steps`` second-order steps.  The ideal ansatz state b_k^dagger|vac>,
    normalized, is available separately through :meth:`ansatz_state`.
    """

    def __init__(self, k: float, order: int, params: LatticeParams, vacuum: np.ndarray,
                 system: ExactSystem, table: KinematicTable | None = None,
                 mode: str = "exact", wp_steps: int = 10):
        if mode not in ("exact", "circuit"):
            raise ValueError(f"unknown objective mode {mode!r}")
        self.k, self.order, self.params, self.system = k, order, params, system
        self.mode, self.wp_steps = mode, wp_steps
        self.table = kinematic_factors(params) if table is None else table
        self.cbar = bare_coefficients(k, self.table)
        N = params.n_stag
        self.pairs = [(m, n) for (m, n) in self.cbar if periodic_distance(m, n, N) <= order]
        basis = system.basis
        self.vacuum = vacuum
        ops = [basis.restrict(meson_operator(*p, params)) for p in self.pairs]
        self._stack = sp.vstack(ops, format="csr")
        self._stack_h = self._stack.conj().T.tocsr()
        self._dim = len(vacuum)
        self.vecs = {p: op @ vacuum for p, op in zip(self.pairs, ops)}
        self.H = system.matrix
        if mode == "circuit":
            n = params.n_system + 1
            full = Statevector(n, np.zeros(1 << n, dtype=complex))
            full.amplitudes[: 1 << params.n_system] = basis.embed(vacuum)
            self._full = full

    def coefficients(self, ap: AnsatzParams) -> MesonCoefficients:
        return order_j_coefficients(self.k, ap, self.table, self.order, cbar=self.cbar)

    def ansatz_state(self, ap: AnsatzParams) -> np.ndarray:
        """Normalized b_k^dagger|vac>."""
        co = self.coefficients(ap).entries
        v = sum(co[p] * self.vecs[p] for p in self.pairs)
        return v / np.linalg.norm(v)

    def prepared(self, ap: AnsatzParams) -> tuple[np.ndarray, float]:
        """(normalized accept-branch sector vector, acceptance probability)."""
        co = self.coefficients(ap)
        if self.mode == "circuit":
            scheme = PrepScheme(ancilla_mode=1, wp_trotter_steps=self.wp_steps, theta_cutoff=0.0,
                                order=self.order)
            c = build_qwp(co, scheme, self.params.n_system, self.params)
            out = run(c, self._full).amplitudes.reshape(2, -1)[1]
            v = self.system.basis.project(out)
        else:
            c = np.array([co.entries[p] for p in self.pairs])
            v = self._accept_branch(c)
        pa = float(np.vdot(v, v).real)
        return v / math.sqrt(pa), pa

    def _B(self, c, x):
        return c @ (self._stack @ x).reshape(len(c), self._dim)

    def _Bh(self, c, y):
        return self._stack_h @ np.outer(c.conj(), y).ravel()

    def _accept_branch(self, c: np.ndarray, krylov: int = 14, tol: float = 1e-13) -> np.ndarray:
        """Ancilla-|1> part of exp(-i pi/2 Theta)|vac>|0>, up to a global phase.

        With Theta = B (x) sigma^- + h.c. that part is
        B sin(pi/2 sqrt(A)) / sqrt(A) |vac>, A = B^dagger B, evaluated in a
        Lanczos basis of A.
        """
        q = self.vacuum / np.linalg.norm(self.vacuum)
        V, alpha, beta = [q], [], []
        for i in range(krylov):
            w = self._Bh(c, self._B(c, V[-1]))
            a = float(np.vdot(V[-1], w).real)
            alpha.append(a)
            for u in V:
                w = w - np.vdot(u, w) * u
            b = np.linalg.norm(w)
            if b < tol or i == krylov - 1:
                break
            beta.append(b)
            V.append(w / b)
        T = np.diag(alpha) + np.diag(beta[:len(alpha) - 1], 1) + np.diag(beta[:len(alpha) - 1], -1)
        lam, S = np.linalg.eigh(T)
        r = np.sqrt(np.clip(lam, 0, None))
        f = np.where(r > 1e-12, np.sin(0.5 * math.pi * r) / np.where(r > 1e-12, r, 1), 0.5 * math.pi)
        coef = S @ (f * S[0].conj())
        x = np.column_stack(V[:len(alpha)]) @ coef * np.linalg.norm(self.vacuum)
        return self._B(c, x)

    def energy(self, ap: AnsatzParams) -> float:
        v, _ = self.prepared(ap)
        return float(np.vdot(v, self.H @ v).real)

    def ansatz_energy(self, ap: AnsatzParams) -> float:
        v = self.ansatz_state(ap)
        return float(np.vdot(v, self.H @ v).real)


def optimize_ansatz(k: float, j: int, prev: AnsatzParams | None, params: LatticeParams,
                    vacuum: np.ndarray, system: ExactSystem | None = None, seeds: int = N_RESTARTS,
                    seed: int = 0, table: KinematicTable | None = None,
                    objective: AnsatzObjective | None = None) -> OptimizeReport:
    """Optimize order-j alphas for momentum k.

    Lower-order alphas stay within w = 0.1 max(|alpha|, 1) of their previous
    optimum; the new order-j pair is searched in [-5, 5].
    """
    system = ExactSystem(params) if system is None else system
    prev = AnsatzParams(0) if prev is None else prev
    if j > 1 and not prev.covers(k, j - 1):
        raise KeyError(f"previous parameters incomplete below order {j} at k={k}")
    obj = AnsatzObjective(k, j, params, vacuum, system, table) if objective is None else objective
    bounds, centre = [], []
    for jp in range(1, j + 1):
        for par in (0, 1):
            if jp < j:
                a = prev.get(k, jp, par)
                w = 0.1 * max(abs(a), 1.0)
                bounds.append((a - w, a + w))
                centre.append(a)
            else:
                bounds.append(ALPHA_BOX)
                centre.append(0.0)

    def f(x):
        return obj.energy(AnsatzParams.from_vector(k, j, x))

    rng = np.random.default_rng(seed)
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])
    starts = [np.array(centre)] + [rng.uniform(lo, hi) for _ in range(seeds - 1)]
    rep = _multistart(f, starts, bounds, fatol=1e-9, xatol=1e-6, maxiter=2000)
    best = AnsatzParams.from_vector(k, j, rep.best_params)
    rep.extra["ansatz"] = prev.merged(best)
    rep.extra["state"] = obj.ansatz_state(best)
    rep.extra["ansatz_energy"] = obj.ansatz_energy(best)
    rep.extra["prepared"], rep.extra["accept"] = obj.prepared(best)
    return rep


def optimize_orders(k: float, max_order: int, params: LatticeParams, vacuum: np.ndarray,
                    system: ExactSystem | None = None, seed: int = 0,
                    start: AnsatzParams | None = None) -> list[OptimizeReport]:
    """Order-by-order optimization 1..max_order (or from ``start``'s order + 1)."""
    system = ExactSystem(params) if system is None else system
    table = kinematic_factors(params)
    prev = AnsatzParams(0) if start is None else start
    first = 1 if start is None else start.order + 1
    out = []
    for j in range(first, max_order + 1):
        rep = optimize_ansatz(k, j, prev, params, vacuum, system, seed=seed, table=table)
        prev = rep.extra["ansatz"]
        out.append(rep)
    return out
