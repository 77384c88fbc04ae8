"""Shot post-processing: symmetry and ancilla filters, observables, bootstrap
errors, return probability and operator decoherence renormalization."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .model import LatticeParams
from .simulator import ShotCounts


class EmptySample(ValueError):
    pass


@dataclass
class FilterReport:
    kept: ShotCounts
    q_violation_rate: float
    ancilla_violation_rate: float = 0.0
    input_total: int = 0
    raw_ancilla_violation_rate: float | None = None


def _subset(counts: ShotCounts, keep: np.ndarray, keys: np.ndarray, vals: np.ndarray) -> ShotCounts:
    kept = {int(k): int(v) for k, v in zip(keys[keep], vals[keep])}
    return ShotCounts(kept, counts.n_qubits, counts.seed, dict(counts.meta))


def fermion_weight(keys: np.ndarray, params: LatticeParams) -> np.ndarray:
    mask = (1 << params.n_stag) - 1
    x = keys & mask
    w = np.zeros_like(x)
    for q in range(params.n_stag):
        w += (x >> q) & 1
    return w


def filter_q(counts: ShotCounts, params: LatticeParams) -> FilterReport:
    """Keep shots whose fermion register holds exactly N_P particles."""
    keys, vals = counts.arrays()
    total = counts.total
    keep = fermion_weight(keys, params) == params.n_phys
    kept = _subset(counts, keep, keys, vals)
    rate = 1 - kept.total / total if total else 0.0
    return FilterReport(kept, rate, 0.0, total)


def _accept_mask(keys: np.ndarray, accept: Mapping[int, int]) -> np.ndarray:
    ok = np.ones(len(keys), dtype=bool)
    for q, bit in accept.items():
        ok &= ((keys >> q) & 1) == bit
    return ok


def filter_ancilla(report: FilterReport, accept: Mapping[int, int],
                   raw: ShotCounts | None = None) -> FilterReport:
    """Keep shots matching the accept pattern {qubit: bit}.

    The rate is taken over the shots that survived the previous filter; when
    ``raw`` is given the rate over the unfiltered sample is reported too.
    """
    keys, vals = report.kept.arrays()
    ok = _accept_mask(keys, accept)
    kept = _subset(report.kept, ok, keys, vals)
    base = report.kept.total
    rate = 1 - kept.total / base if base else 0.0
    raw_rate = None
    if raw is not None and raw.total:
        rk, rv = raw.arrays()
        raw_rate = 1 - rv[_accept_mask(rk, accept)].sum() / raw.total
    return FilterReport(kept, report.q_violation_rate, rate, report.input_total, raw_rate)


def _require(counts: ShotCounts):
    if counts.total == 0:
        raise EmptySample("no shots left to estimate from")


def occupations(counts: ShotCounts, n_sites: int) -> np.ndarray:
    _require(counts)
    keys, vals = counts.arrays()
    bits = (keys[:, None] >> np.arange(n_sites)[None, :]) & 1
    return (bits * vals[:, None]).sum(axis=0) / vals.sum()


def staggered_density(counts: ShotCounts, params: LatticeParams) -> np.ndarray:
    """chi_n: occupation on even sites, vacancy on odd sites (zero on the Dirac sea)."""
    occ = occupations(counts, params.n_stag)
    odd = np.arange(params.n_stag) % 2 == 1
    return np.where(odd, 1 - occ, occ)


def electric_field(counts: ShotCounts, params: LatticeParams | None = None, boson: int | None = None) -> float:
    """Mean of +1 (boson |0>, up) / -1 (|1>, down)."""
    _require(counts)
    if boson is None:
        if params is None:
            raise ValueError("need params or boson index")
        boson = params.boson
    keys, vals = counts.arrays()
    b = (keys >> boson) & 1
    return float(((1 - 2 * b) * vals).sum() / vals.sum())


def bootstrap_errors(counts: ShotCounts, statistic: Callable[[ShotCounts], float | np.ndarray],
                     resamples: int = 100, seed=0) -> float | np.ndarray:
    """Standard deviation of ``statistic`` over multinomial resamples of the counts."""
    if resamples < 2:
        raise ValueError("need at least two resamples")
    _require(counts)
    keys, vals = counts.arrays()
    n = int(vals.sum())
    rng = np.random.default_rng(seed)
    p = vals / n
    out = []
    for _ in range(resamples):
        draw = rng.multinomial(n, p)
        nz = draw > 0
        out.append(statistic(ShotCounts(dict(zip(keys[nz].tolist(), draw[nz].tolist())),
                                        counts.n_qubits)))
    return np.std(np.asarray(out, dtype=float), axis=0, ddof=1)


def ancilla_expectation(counts: ShotCounts, ancilla: int) -> float:
    """p0 - p1 on one qubit."""
    _require(counts)
    keys, vals = counts.arrays()
    b = (keys >> ancilla) & 1
    return float(((1 - 2 * b) * vals).sum() / vals.sum())


def return_probability(re_counts: ShotCounts, im_counts: ShotCounts, ancilla: int) -> tuple[float, float, float]:
    """(Re A, Im A, |A|^2) from the two Hadamard-test variants."""
    re = ancilla_expectation(re_counts, ancilla)
    im = ancilla_expectation(im_counts, ancilla)
    return re, im, re * re + im * im


def return_probability_error(re_counts: ShotCounts, im_counts: ShotCounts, ancilla: int,
                             resamples: int = 100, seed=0) -> float:
    """Bootstrap error of R, resampling both variants independently."""
    rng = np.random.default_rng(seed)
    seeds = rng.integers(0, 2**63 - 1, size=2)
    vals = []
    for c in (re_counts, im_counts):
        keys, v = c.arrays()
        n = int(v.sum())
        b = 1 - 2 * ((keys >> ancilla) & 1)
        r = np.random.default_rng(seeds[len(vals)])
        vals.append(r.multinomial(n, v / n, size=resamples) @ b / n)
    R = vals[0] ** 2 + vals[1] ** 2
    return float(np.std(R, ddof=1))


@dataclass
class ObservableSeries:
    times: list[float]
    values: list[float]
    errors: list[float]
    label: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (len(self.times) == len(self.values) == len(self.errors)):
            raise ValueError("times, values and errors must have equal lengths")
        if any(e < 0 for e in self.errors):
            raise ValueError("errors must be non-negative")


def odr_rescale(series: ObservableSeries, identity: ObservableSeries, e0: float,
                e0_err: float = 0.0) -> ObservableSeries:
    """E_ODR(t) = E(t) / (1 - rho(t)), rho(t) = 1 - E'(t)/E0.

    Errors from E, E' and E0 combine in quadrature.
    """
    if len(series.times) != len(identity.times) or any(
        abs(a - b) > 1e-12 for a, b in zip(series.times, identity.times)
    ):
        raise ValueError("time grids differ")
    if e0 == 0:
        raise ZeroDivisionError("e0 must be non-zero")
    vals, errs = [], []
    for E, dE, Ep, dEp in zip(series.values, series.errors, identity.values, identity.errors):
        scale = Ep / e0  # = 1 - rho
        if abs(scale) < 1e-6:
            raise ZeroDivisionError("1 - rho too small to rescale")
        v = E / scale
        err = math.sqrt((dE / scale) ** 2 + (v * dEp / Ep) ** 2 + (v * e0_err / e0) ** 2)
        vals.append(v)
        errs.append(err)
    return ObservableSeries(list(series.times), vals, errs, series.label + "_odr")


# ---------------------------------------------------------------- CSV

def _open(path: Path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return open(path, "w", newline="", encoding="utf-8")


def _fmt(x: float) -> str:
    return repr(float(x))


def write_density_csv(path, chi: Sequence[float], err: Sequence[float]):
    with _open(path) as fh:
        w = csv.writer(fh)
        w.writerow(["site", "chi", "err"])
        for n, (c, e) in enumerate(zip(chi, err)):
            w.writerow([n, _fmt(c), _fmt(e)])


def write_field_csv(path, series: ObservableSeries, odr: ObservableSeries | None = None):
    with _open(path) as fh:
        w = csv.writer(fh)
        w.writerow(["t", "E", "err", "E_odr", "err_odr"])
        for i, t in enumerate(series.times):
            row = [_fmt(t), _fmt(series.values[i]), _fmt(series.errors[i])]
            row += [_fmt(odr.values[i]), _fmt(odr.errors[i])] if odr else ["", ""]
            w.writerow(row)


def write_return_csv(path, rows: Sequence[tuple[float, float, float, float, float]]):
    with _open(path) as fh:
        w = csv.writer(fh)
        w.writerow(["t", "re", "im", "R", "err"])
        for row in rows:
            w.writerow([_fmt(x) for x in row])
