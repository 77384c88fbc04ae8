"""Command-line experiment runner.

Every command validates its configuration, computes everything in memory,
then writes CSV tables, PNG figures and a ``manifest.json`` into the output
directory.  Exit codes: 0 success, 2 configuration error, 3 resource guard.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import platform
import shutil
import sys
import tempfile
from pathlib import Path

import numpy as np
import scipy
import yaml

from . import __version__, analysis, experiments, plotting
from .ansatz import AnsatzParams
from .circuits import EvolutionPlan, GroundStateAngles, build_hadamard_test, build_qwp, gate_count_rows
from .config import ConfigError, RunConfig, dump_alphas, load_config, parse_config
from .model import DimensionError, ExactSystem, brillouin_zone, label_momenta, reference_states
from .simulator import NoiseModel, run
from .vqe import AnsatzObjective, ground_state_energy_fn, optimize_ground, optimize_orders

log = logging.getLogger("z2scatter")

MAX_QUBITS = 20


class ResourceGuard(RuntimeError):
    pass


def seed_for(seed: int, *tags: int) -> int:
    return int(np.random.SeedSequence([seed, *tags]).generate_state(1)[0])


# ---------------------------------------------------------------- output staging

class Outputs:
    """Collects files in a staging directory; ``commit`` moves them into place."""

    def __init__(self, directory: Path):
        self.directory = Path(directory)
        self.stage = Path(tempfile.mkdtemp(prefix="z2scatter-"))
        self.files: list[str] = []

    def path(self, name: str) -> Path:
        self.files.append(name)
        return self.stage / name

    def csv(self, name: str, header, rows):
        with open(self.path(name), "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for r in rows:
                w.writerow([_cell(x) for x in r])

    def commit(self, manifest: dict):
        self.directory.mkdir(parents=True, exist_ok=True)
        digests = {}
        for name in self.files:
            src = self.stage / name
            digests[name] = hashlib.sha256(src.read_bytes()).hexdigest()
            shutil.move(str(src), self.directory / name)
        manifest["outputs"] = digests
        (self.directory / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                                                      encoding="utf-8")
        shutil.rmtree(self.stage, ignore_errors=True)

    def discard(self):
        shutil.rmtree(self.stage, ignore_errors=True)


def _cell(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (np.integer,)):
        return int(x)
    return x


# ---------------------------------------------------------------- shared resolution

def _guard(cfg: RunConfig, extra: int = 0):
    p = cfg.lattice
    anc = 0
    if cfg.packets:
        anc = 1 if cfg.scheme.ancilla_mode == 1 else len(cfg.packets)
    n = p.n_system + anc + extra
    if n > MAX_QUBITS:
        raise ResourceGuard(f"{n} qubits exceed the statevector limit of {MAX_QUBITS}")
    return n


def _system(cfg: RunConfig) -> ExactSystem:
    try:
        return ExactSystem(cfg.lattice)
    except DimensionError as e:
        raise ResourceGuard(f"sector dimension {e} too large for exact methods") from None


def resolve_angles(cfg: RunConfig, system: ExactSystem | None) -> tuple[GroundStateAngles, dict]:
    p = cfg.lattice
    if cfg.theta is not None:
        return GroundStateAngles(*cfg.theta, bond_order=cfg.bond_order), {"source": "config"}
    default = (p.mass, p.eps, p.hopping) == (1.0, -0.3, 1.0) and p.n_phys in experiments.PINNED_ANGLES
    if default and cfg.bond_order == "descending":
        return GroundStateAngles(*experiments.PINNED_ANGLES[p.n_phys]), {"source": "pinned"}
    system = _system(cfg) if system is None else system
    rep = optimize_ground(p, seed=cfg.seed, system=system, bond_order=cfg.bond_order)
    th, tm = rep.best_params
    return GroundStateAngles(th, tm, bond_order=cfg.bond_order), {"source": "vqe", "energy": rep.best_energy}


def resolve_alphas(cfg: RunConfig, angles: GroundStateAngles, system: ExactSystem | None) -> AnsatzParams:
    p = cfg.lattice
    if cfg.alphas is not None:
        return cfg.alphas
    default = (p.mass, p.eps, p.hopping) == (1.0, -0.3, 1.0) and p.n_phys in experiments.PINNED_ALPHAS
    if default and cfg.order == 1:
        return experiments.pinned_ansatz(p.n_phys)
    system = _system(cfg) if system is None else system
    _, state = ground_state_energy_fn(p, system, angles.bond_order)
    vac = state([angles.theta_h, angles.theta_m])
    ap = AnsatzParams(cfg.order)
    for k in brillouin_zone(p):
        reps = optimize_orders(k, cfg.order, p, vac, system, seed=cfg.seed)
        ap = ap.merged(reps[-1].extra["ansatz"])
    return ap


def build_setup(cfg: RunConfig, system: ExactSystem | None = None) -> experiments.Setup:
    angles, _ = resolve_angles(cfg, system)
    ap = resolve_alphas(cfg, angles, system) if cfg.packets else AnsatzParams(cfg.order)
    return experiments.Setup(cfg.lattice, angles, ap, list(cfg.packets), cfg.scheme)


# ---------------------------------------------------------------- commands

def cmd_vqe(cfg: RunConfig, out: Outputs) -> dict:
    p = cfg.lattice
    _guard(cfg)
    system = _system(cfg)
    e_exact, omega = system.ground_state()
    energy, state = ground_state_energy_fn(p, system, cfg.bond_order)
    if cfg.theta is not None:
        x = np.array(cfg.theta)
        gs = {"theta": x, "energy": energy(x), "evaluations": 1}
    else:
        rep = optimize_ground(p, seed=cfg.seed, system=system, bond_order=cfg.bond_order)
        x = rep.best_params
        gs = {"theta": x, "energy": rep.best_energy, "evaluations": rep.evaluations}
    vac = state(x)
    f_gs = float(abs(np.vdot(omega, vac)) ** 2)
    out.csv("table6.csv", ["n_phys", "theta_h", "theta_m", "E_star", "E_exact", "F"],
            [[p.n_phys, x[0], x[1], gs["energy"], e_exact, f_gs]])

    zone = brillouin_zone(p)
    refs = reference_states(system, zone)
    rows, fids = [], {f"j={j}": [] for j in range(1, cfg.order + 1)}
    pinned = cfg.alphas
    result = AnsatzParams(cfg.order)
    for k in zone:
        e_k, ref = refs[k]
        if pinned is not None:
            per_order = []
            for j in range(1, cfg.order + 1):
                obj = AnsatzObjective(k, j, p, vac, system)
                per_order.append((j, pinned, obj))
        else:
            reps = optimize_orders(k, cfg.order, p, vac, system, seed=cfg.seed)
            per_order = [(j, r.extra["ansatz"], AnsatzObjective(k, j, p, vac, system))
                         for j, r in zip(range(1, cfg.order + 1), reps)]
        for j, ap, obj in per_order:
            if not ap.covers(k, j):
                continue
            psi = obj.ansatz_state(ap)
            prep, acc = obj.prepared(ap)
            f = float(abs(np.vdot(ref, psi)) ** 2)
            fids[f"j={j}"].append(f)
            alphas = [ap.get(k, jj, par) for jj in range(1, j + 1) for par in (0, 1)]
            rows.append([k, j, " ".join(repr(float(a)) for a in alphas), obj.ansatz_energy(ap), e_k, f,
                         float(abs(np.vdot(ref, prep)) ** 2), acc])
        result = result.merged(per_order[-1][1]) if per_order[-1][1].covers(k, cfg.order) else result
    out.csv("table7.csv", ["k", "order", "alphas", "E_star", "E_k", "F_k", "F_prepared", "accept"], rows)
    pin = {"ground": {"theta_h": float(x[0]), "theta_m": float(x[1]), "bond_order": cfg.bond_order},
           "ansatz": {"order": cfg.order, "alphas": dump_alphas(result, p, cfg.order)}}
    out.path("pinned.yaml").write_text(yaml.safe_dump(pin, sort_keys=True), encoding="utf-8")
    if all(len(v) == len(zone) for v in fids.values()):
        plotting.fidelity_plot(out.path("fidelity.png"), zone, fids)
    log.info("ground state E*=%.6f (exact %.6f) F=%.6f", gs["energy"], e_exact, f_gs)
    return {"ground_energy": gs["energy"], "ground_fidelity": f_gs}


def _prepare(cfg: RunConfig, extra: int = 0):
    _guard(cfg, extra)
    system = _system(cfg)
    setup = build_setup(cfg, system)
    prep = experiments.prepare(setup, extra)
    return system, setup, prep


def _exact_reference(system, prep):
    v, pa = experiments.system_vector(prep, basis=system.basis)
    return v, pa


def _density_rows(chi, err):
    return [[n, c, e] for n, (c, e) in enumerate(zip(chi, err))]


def cmd_prepare(cfg: RunConfig, out: Outputs) -> dict:
    p = cfg.lattice
    system, setup, prep = _prepare(cfg)
    v, pa = _exact_reference(system, prep)
    chi_x, e_x = experiments.diagonal_observables(v, system.basis, p)
    obs = experiments.sampled_observables(prep.state, p, prep.accept, cfg.shots, seed_for(cfg.seed, 0),
                                          cfg.resamples)
    out.csv("density.csv", ["site", "chi", "err"], _density_rows(obs.chi, obs.chi_err))
    out.csv("density_exact.csv", ["site", "chi"], [[n, c] for n, c in enumerate(chi_x)])
    out.csv("field.csv", ["t", "E", "err", "E_odr", "err_odr"], [[0.0, obs.field, obs.field_err, "", ""]])
    rep = obs.report
    summary = [["q_violation", rep.q_violation_rate],
               ["ancilla_violation", rep.ancilla_violation_rate],
               ["ancilla_violation_raw", rep.raw_ancilla_violation_rate if rep.raw_ancilla_violation_rate is not None else 0.0],
               ["ancilla_violation_exact", 1 - pa],
               ["shots", cfg.shots],
               ["kept", rep.kept.total],
               ["field_exact", e_x]]
    if prep.init is not None:
        summary.append(["terms_per_packet", " ".join(str(g) for g in _terms(prep))])
        for (i, j), ov in sorted(prep.init.overlaps.items()):
            summary.append([f"overlap_{i}_{j}", abs(ov)])
    out.csv("summary.csv", ["quantity", "value"], summary)
    out.csv("gate_counts.csv", ["experiment", "segment", "single_qubit", "cnot"],
            gate_count_rows("prepare", prep.circuit))
    plotting.density_plot(out.path("density.png"), obs.chi, obs.chi_err, chi_x)
    return {"ancilla_violation": rep.ancilla_violation_rate, "q_violation": rep.q_violation_rate}


def _terms(prep) -> list[int]:
    tabs = prep.setup.coefficient_tables()
    return [build_qwp(t, prep.setup.scheme, prep.setup.params.n_system, prep.setup.params).metadata["terms"]
            for t in tabs]


def cmd_evolve(cfg: RunConfig, out: Outputs) -> dict:
    p = cfg.lattice
    system, setup, prep = _prepare(cfg)
    states = experiments.evolve_states(prep, cfg.dt, cfg.n_steps)
    v0, _ = _exact_reference(system, prep)
    rows, heat, heat_exact = [], [], []
    times = [n * cfg.dt for n in range(cfg.n_steps + 1)]
    E_ex = []
    for n, st in enumerate(states):
        obs = experiments.sampled_observables(st, p, prep.accept, cfg.shots, seed_for(cfg.seed, n),
                                              cfg.resamples)
        out.csv(f"density_t{n}.csv", ["site", "chi", "err"], _density_rows(obs.chi, obs.chi_err))
        chi_x, e_x = experiments.diagonal_observables(system.evolve(v0, times[n]), system.basis, p)
        heat.append(obs.chi)
        heat_exact.append(chi_x)
        E_ex.append(e_x)
        rows.append([times[n], obs.field, obs.field_err])
    odr = None
    if cfg.noise.enabled and cfg.n_steps > 0:
        odr = _noisy(cfg, prep, list(range(1, cfg.n_steps + 1))).odr
    # the noisy path starts after the first step; t=0 has no ODR value
    out.csv("field.csv", ["t", "E", "err", "E_odr", "err_odr"],
            [r + ([odr.values[i - 1], odr.errors[i - 1]] if odr and i else ["", ""])
             for i, r in enumerate(rows)])
    out.csv("density_exact.csv", ["t"] + [f"chi_{n}" for n in range(p.n_stag)],
            [[t] + list(c) for t, c in zip(times, heat_exact)])
    plotting.density_heatmap(out.path("density.png"), times, heat)
    plotting.series_plot(out.path("field.png"),
                         {"sampled": (times, [r[1] for r in rows], [r[2] for r in rows]),
                          "exact": (times, E_ex, None)}, "E", ylim=(-1, 1))
    return {"steps": cfg.n_steps}


def cmd_return_prob(cfg: RunConfig, out: Outputs) -> dict:
    p = cfg.lattice
    system, setup, prep = _prepare(cfg, extra=1)
    a_t = prep.n_qubits - 1
    v0, _ = _exact_reference(system, prep)
    rows, exact_rows = [], []
    for n in range(cfg.n_steps + 1):
        if n == 0:
            st = {"state_re": run(_h_only(prep, a_t, "re"), prep.state),
                  "state_im": run(_h_only(prep, a_t, "im"), prep.state)}
            amp = 1.0 + 0j
        else:
            amp, st = experiments.hadamard_amplitude(prep, cfg.dt, n, a_t)
        cre, cim = experiments.hadamard_counts(st, cfg.shots, seed_for(cfg.seed, n))
        kre = experiments.postselect(cre, p, prep.accept)
        kim = experiments.postselect(cim, p, prep.accept)
        re, im, R = analysis.return_probability(kre, kim, a_t)
        err = analysis.return_probability_error(kre, kim, a_t, cfg.resamples, seed_for(cfg.seed, n, 1))
        t = n * cfg.dt
        rows.append([t, re, im, R, err])
        exact = abs(np.vdot(v0, system.evolve(v0, t))) ** 2
        exact_rows.append([t, abs(amp) ** 2, exact])
    out.csv("return_probability.csv", ["t", "re", "im", "R", "err"], rows)
    out.csv("return_probability_exact.csv", ["t", "R_trotter", "R_exact"], exact_rows)
    ts = [r[0] for r in rows]
    plotting.series_plot(out.path("return_probability.png"),
                         {"sampled": (ts, [r[3] for r in rows], [r[4] for r in rows]),
                          "exact": (ts, [r[2] for r in exact_rows], None)}, "R(t)", ylim=(0, 1.05))
    return {"points": len(rows)}


def _h_only(prep, a_t, variant):
    return build_hadamard_test(EvolutionPlan(1.0, 0, True), prep.setup.params, a_t, variant, prep.n_qubits)


def cmd_oracle(cfg: RunConfig, out: Outputs) -> dict:
    p = cfg.lattice
    _guard(cfg)
    system = _system(cfg)
    n = min(len(system.basis) - 1, max(16, 4 * p.n_stag))
    sol = label_momenta(system.diagonalize(n), p, system.translation)
    out.csv("spectrum.csv", ["index", "energy", "k"],
            [[i, e, k] for i, (e, k) in enumerate(zip(sol.energies, sol.momentum_labels))])
    e0, om = system.ground_state()
    chi, E = experiments.diagonal_observables(om, system.basis, p)
    out.csv("vacuum_density.csv", ["site", "chi"], [[i, c] for i, c in enumerate(chi)])
    rows = [["ground_energy", e0], ["vacuum_field", E], ["sector_dim", len(system.basis)]]
    if cfg.packets:
        setup = build_setup(cfg, system)
        _, state = ground_state_energy_fn(p, system, setup.angles.bond_order)
        vac = state([setup.angles.theta_h, setup.angles.theta_m])
        ideal = experiments.ideal_packet_state(setup, vac, system.basis)
        chi_i, E_i = experiments.diagonal_observables(ideal, system.basis, p)
        out.csv("packet_density.csv", ["site", "chi"], [[i, c] for i, c in enumerate(chi_i)])
        rows += [["packet_field", E_i], ["packet_energy", float(np.vdot(ideal, system.matrix @ ideal).real)]]
    out.csv("oracle.csv", ["quantity", "value"], rows)
    plotting.density_plot(out.path("vacuum_density.png"), chi)
    return {"ground_energy": e0}


def _noisy(cfg: RunConfig, prep, steps, twirl=None):
    nc = cfg.noise
    noise = NoiseModel(nc.p1, nc.p2, seed_for(cfg.seed, 99))
    return experiments.noisy_field_series(prep, cfg.dt, steps, noise, nc.trajectories,
                                          twirl=nc.twirl if twirl is None else twirl, twirls=nc.twirls,
                                          resamples=cfg.resamples, seed=cfg.seed)


def cmd_twirl_odr(cfg: RunConfig, out: Outputs) -> dict:
    p = cfg.lattice
    if not cfg.noise.enabled:
        raise ConfigError("twirl-odr needs noise.p1 or noise.p2 > 0", None, "<config>")
    if cfg.n_steps < 1:
        raise ConfigError("twirl-odr needs evolution.n_steps >= 1", None, "<config>")
    system, setup, prep = _prepare(cfg)
    steps = list(range(1, cfg.n_steps + 1))
    nf = _noisy(cfg, prep, steps)
    clean = experiments.evolve_states(prep, cfg.dt, cfg.n_steps)
    E_clean = [experiments.diagonal_observables(experiments.system_vector(prep, s, system.basis)[0],
                                                system.basis, p)[1] for s in clean[1:]]
    out.csv("field.csv", ["t", "E", "err", "E_odr", "err_odr"],
            [[t, nf.raw.values[i], nf.raw.errors[i], nf.odr.values[i], nf.odr.errors[i]]
             for i, t in enumerate(nf.times)])
    out.csv("field_identity.csv", ["t", "E_identity", "err", "E0"],
            [[t, nf.identity.values[i], nf.identity.errors[i], nf.e0] for i, t in enumerate(nf.times)])
    out.csv("field_noiseless.csv", ["t", "E"], [[t, e] for t, e in zip(nf.times, E_clean)])
    plotting.series_plot(out.path("field.png"),
                         {"unmitigated": (nf.times, nf.raw.values, nf.raw.errors),
                          "ODR": (nf.times, nf.odr.values, nf.odr.errors),
                          "noiseless": (nf.times, E_clean, None)}, "E")
    return {"points": len(steps)}


COMMANDS = {
    "vqe": cmd_vqe,
    "prepare": cmd_prepare,
    "evolve": cmd_evolve,
    "return-prob": cmd_return_prob,
    "oracle": cmd_oracle,
    "twirl-odr": cmd_twirl_odr,
}


# ---------------------------------------------------------------- entry point

def _load(args) -> RunConfig:
    text, source = None, None
    seed, shots = args.seed, args.shots
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise ConfigError("file not found", None, str(path))
        raw = path.read_text(encoding="utf-8")
        source = str(path)
        if path.suffix == ".json":
            try:
                man = json.loads(raw)
                text = man["config"]
            except (json.JSONDecodeError, KeyError, TypeError):
                raise ConfigError("not a run manifest", None, source) from None
            seed = man.get("seed") if seed is None else seed
            shots = man.get("shots") if shots is None else shots
        else:
            text = raw
    cfg = parse_config(text, source) if text is not None else load_config()
    if seed is not None:
        cfg.seed = seed
    if shots is not None:
        if shots < 1:
            raise ConfigError("--shots must be >= 1")
        cfg.shots = shots
    if args.out:
        cfg.outputs = args.out
    return cfg


def manifest(command: str, cfg: RunConfig, info: dict) -> dict:
    return {
        "command": command,
        "config": cfg.text,
        "config_sha256": cfg.digest,
        "seed": cfg.seed,
        "shots": cfg.shots,
        "versions": {"z2scatter": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__,
                     "matplotlib": plotting.matplotlib.__version__, "pyyaml": yaml.__version__},
        "result": {k: (float(v) if isinstance(v, (float, np.floating)) else v) for k, v in info.items()},
    }


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="z2scatter", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="YAML run configuration (or a manifest.json to replay)")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--shots", type=int)
        sp.add_argument("--out", help="output directory")
        sp.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = _load(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    out = Outputs(Path(cfg.outputs))
    try:
        info = COMMANDS[args.command](cfg, out)
    except ConfigError as e:
        out.discard()
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except ResourceGuard as e:
        out.discard()
        print(f"resource guard: {e}", file=sys.stderr)
        return 3
    except BaseException:
        out.discard()
        raise
    out.commit(manifest(args.command, cfg, info))
    print(f"wrote {len(out.files)} files to {out.directory}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
