"""Run configuration: a YAML key-value tree with line-precise validation."""
from __future__ import annotations

import ast
import hashlib
import json
import math
import operator
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .ansatz import AnsatzParams
from .circuits import APPX_I, APPX_II, BOND_ORDERS, PrepScheme
from .model import LatticeParams, brillouin_zone


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None, source: str = "<config>"):
        self.line = line
        where = f"{source}:{line}" if line is not None else source
        super().__init__(f"{where}: {message}")


_OPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
        ast.Div: operator.truediv, ast.USub: operator.neg, ast.UAdd: operator.pos}


def parse_number(text) -> float:
    """Float from a number or a small arithmetic expression in ``pi``."""
    if isinstance(text, bool):
        raise ValueError("boolean is not a number")
    if isinstance(text, (int, float)):
        return float(text)

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.Name) and node.id == "pi":
            return math.pi
        if isinstance(node, ast.BinOp) and type(node.op) in _OPS:
            return _OPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and type(node.op) in _OPS:
            return _OPS[type(node.op)](ev(node.operand))
        raise ValueError(f"unsupported expression {text!r}")

    return ev(ast.parse(str(text), mode="eval"))


# ---------------------------------------------------------------- YAML with line numbers

class _Node:
    """Mapping/sequence/scalar view over a composed YAML node."""

    def __init__(self, node, path: str, source: str):
        self.node, self.path, self.source = node, path, source

    @property
    def line(self) -> int:
        return self.node.start_mark.line + 1

    def error(self, msg: str) -> ConfigError:
        return ConfigError(f"{self.path}: {msg}", self.line, self.source)

    def mapping(self) -> dict[str, "_Node"]:
        if not isinstance(self.node, yaml.MappingNode):
            raise self.error("expected a mapping")
        out = {}
        for k, v in self.node.value:
            key = str(k.value)
            if key in out:
                raise ConfigError(f"{self.path}.{key}: duplicate key", k.start_mark.line + 1, self.source)
            out[key] = _Node(v, f"{self.path}.{key}" if self.path else key, self.source)
        return out

    def sequence(self) -> list["_Node"]:
        if not isinstance(self.node, yaml.SequenceNode):
            raise self.error("expected a list")
        return [_Node(v, f"{self.path}[{i}]", self.source) for i, v in enumerate(self.node.value)]

    def scalar(self):
        if not isinstance(self.node, yaml.ScalarNode):
            raise self.error("expected a scalar")
        return yaml.safe_load(yaml.serialize(self.node))

    def number(self, lo=None, hi=None, lo_open=False) -> float:
        try:
            x = parse_number(self.scalar())
        except (ValueError, SyntaxError, ZeroDivisionError) as e:
            raise self.error(f"expected a number ({e})") from None
        if not math.isfinite(x):
            raise self.error("must be finite")
        if lo is not None and (x < lo or (lo_open and x == lo)):
            raise self.error(f"must be {'>' if lo_open else '>='} {lo}")
        if hi is not None and x > hi:
            raise self.error(f"must be <= {hi}")
        return x

    def integer(self, lo=None) -> int:
        v = self.scalar()
        if isinstance(v, bool) or not isinstance(v, int):
            raise self.error("expected an integer")
        if lo is not None and v < lo:
            raise self.error(f"must be >= {lo}")
        return v

    def boolean(self) -> bool:
        v = self.scalar()
        if not isinstance(v, bool):
            raise self.error("expected true or false")
        return v

    def string(self, choices=None) -> str:
        v = self.scalar()
        if not isinstance(v, str):
            raise self.error("expected a string")
        if choices is not None and v not in choices:
            raise self.error(f"must be one of {', '.join(choices)}")
        return v


def _check_keys(section: dict[str, _Node], allowed: set[str], parent: _Node):
    for k, v in section.items():
        if k not in allowed:
            raise ConfigError(f"{v.path}: unknown key (allowed: {', '.join(sorted(allowed))})",
                              v.node.start_mark.line + 1, parent.source)


# ---------------------------------------------------------------- config

@dataclass
class NoiseConfig:
    p1: float = 0.0
    p2: float = 0.0
    trajectories: int = 400
    twirl: bool = True
    twirls: int = 8

    @property
    def enabled(self) -> bool:
        return self.p1 > 0 or self.p2 > 0


@dataclass
class RunConfig:
    lattice: LatticeParams = field(default_factory=lambda: LatticeParams(5))
    theta: tuple[float, float] | None = None
    bond_order: str = "descending"
    order: int = 1
    alphas: AnsatzParams | None = None
    packets: list[tuple[float, float, float]] = field(default_factory=list)
    scheme: PrepScheme = APPX_I
    ancillas: int | None = None
    dt: float = 1.0
    n_steps: int = 0
    shots: int = 3000
    seed: int = 0
    resamples: int = 100
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    outputs: str = "out"
    text: str = ""

    @property
    def digest(self) -> str:
        return hashlib.sha256(self.text.encode()).hexdigest()


DEFAULT_TEXT = """\
lattice: {n_phys: 5, mass: 1.0, eps: -0.3}
wavepackets:
  - {mu: 2, sigma: 7*pi/20, kbar: 2*pi/5}
  - {mu: 7, sigma: 7*pi/20, kbar: -2*pi/5}
scheme: {preset: appx_i}
evolution: {dt: 1.0, n_steps: 4}
shots: 3000
seed: 0
"""

SECTIONS = {"lattice", "ground", "ansatz", "wavepackets", "scheme", "evolution", "shots", "seed",
            "noise", "outputs", "bootstrap"}


def load_config(path: str | Path | None = None, text: str | None = None) -> RunConfig:
    if text is None:
        text = DEFAULT_TEXT if path is None else Path(path).read_text(encoding="utf-8")
    source = "<default>" if path is None else str(path)
    return parse_config(text, source)


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.MarkedYAMLError as e:
        line = e.problem_mark.line + 1 if e.problem_mark is not None else None
        raise ConfigError(f"YAML syntax: {e.problem}", line, source) from None
    cfg = RunConfig(text=text)
    if root is None:
        return cfg
    top = _Node(root, "", source)
    sec = top.mapping()
    _check_keys(sec, SECTIONS, top)

    if "lattice" in sec:
        m = sec["lattice"].mapping()
        _check_keys(m, {"n_phys", "mass", "eps"}, sec["lattice"])
        n = m["n_phys"].integer(lo=1) if "n_phys" in m else 5
        mass = m["mass"].number(lo=0) if "mass" in m else 1.0
        eps = m["eps"].number() if "eps" in m else -0.3
        cfg.lattice = LatticeParams(n, mass, eps)
    p = cfg.lattice

    if "ground" in sec:
        m = sec["ground"].mapping()
        _check_keys(m, {"theta_h", "theta_m", "bond_order"}, sec["ground"])
        if ("theta_h" in m) != ("theta_m" in m):
            raise sec["ground"].error("give both theta_h and theta_m, or neither")
        if "theta_h" in m:
            cfg.theta = (m["theta_h"].number(), m["theta_m"].number())
        if "bond_order" in m:
            cfg.bond_order = m["bond_order"].string(BOND_ORDERS)

    if "ansatz" in sec:
        m = sec["ansatz"].mapping()
        _check_keys(m, {"order", "alphas"}, sec["ansatz"])
        if "order" in m:
            cfg.order = m["order"].integer(lo=1)
        if "alphas" in m:
            cfg.alphas = _parse_alphas(m["alphas"], p, cfg.order)

    if "wavepackets" in sec:
        zone = brillouin_zone(p)
        for node in sec["wavepackets"].sequence():
            m = node.mapping()
            _check_keys(m, {"mu", "sigma", "kbar"}, node)
            for key in ("mu", "sigma", "kbar"):
                if key not in m:
                    raise node.error(f"missing '{key}'")
            mu = m["mu"].number()
            sigma = m["sigma"].number(lo=0, lo_open=True)
            kbar = m["kbar"].number()
            if not any(abs(kbar - k) < 1e-9 for k in zone):
                raise m["kbar"].error(f"kbar={kbar:.6g} is not a lattice momentum i*pi/{p.n_phys}")
            cfg.packets.append((mu, sigma, kbar))

    if "scheme" in sec:
        m = sec["scheme"].mapping()
        _check_keys(m, {"preset", "ancilla_mode", "wp_trotter_steps", "theta_cutoff", "term_order",
                        "ancillas"}, sec["scheme"])
        if "ancillas" in m:
            cfg.ancillas = m["ancillas"].integer(lo=1)
        base = APPX_I
        if "preset" in m:
            base = {"appx_i": APPX_I, "appx_ii": APPX_II}[m["preset"].string(("appx_i", "appx_ii"))]
        kw = dict(ancilla_mode=base.ancilla_mode, wp_trotter_steps=base.wp_trotter_steps,
                  theta_cutoff=base.theta_cutoff, order=cfg.order, term_order=base.term_order)
        if "ancilla_mode" in m:
            kw["ancilla_mode"] = m["ancilla_mode"].integer(lo=1)
            if kw["ancilla_mode"] > 2:
                raise m["ancilla_mode"].error("must be 1 or 2")
        if "wp_trotter_steps" in m:
            kw["wp_trotter_steps"] = m["wp_trotter_steps"].integer(lo=1)
        if "theta_cutoff" in m:
            kw["theta_cutoff"] = m["theta_cutoff"].number(lo=0)
        if "term_order" in m:
            kw["term_order"] = m["term_order"].string(("magnitude", "canonical"))
        cfg.scheme = PrepScheme(**kw)
    else:
        cfg.scheme = PrepScheme(APPX_I.ancilla_mode, APPX_I.wp_trotter_steps, APPX_I.theta_cutoff, cfg.order)

    if "evolution" in sec:
        m = sec["evolution"].mapping()
        _check_keys(m, {"dt", "n_steps"}, sec["evolution"])
        if "dt" in m:
            cfg.dt = m["dt"].number(lo=0, lo_open=True)
        if "n_steps" in m:
            cfg.n_steps = m["n_steps"].integer(lo=0)

    if "shots" in sec:
        cfg.shots = sec["shots"].integer(lo=1)
    if "seed" in sec:
        cfg.seed = sec["seed"].integer(lo=0)
    if "bootstrap" in sec:
        cfg.resamples = sec["bootstrap"].integer(lo=2)
    if "outputs" in sec:
        m = sec["outputs"].mapping()
        _check_keys(m, {"directory"}, sec["outputs"])
        if "directory" in m:
            cfg.outputs = m["directory"].string()

    if "noise" in sec:
        m = sec["noise"].mapping()
        _check_keys(m, {"p1", "p2", "trajectories", "twirl", "twirls"}, sec["noise"])
        nc = NoiseConfig()
        if "p1" in m:
            nc.p1 = m["p1"].number(lo=0, hi=1)
        if "p2" in m:
            nc.p2 = m["p2"].number(lo=0, hi=1)
        if "trajectories" in m:
            nc.trajectories = m["trajectories"].integer(lo=1)
        if "twirl" in m:
            nc.twirl = m["twirl"].boolean()
        if "twirls" in m:
            nc.twirls = m["twirls"].integer(lo=1)
        cfg.noise = nc

    need = 1 if cfg.scheme.ancilla_mode == 1 else len(cfg.packets)
    if cfg.ancillas is not None and cfg.packets and need > cfg.ancillas:
        raise sec["scheme"].error(f"{len(cfg.packets)} packets need {need} ancillas, budget is {cfg.ancillas}")
    return cfg


def _parse_alphas(node: _Node, p: LatticeParams, order: int) -> AnsatzParams:
    """``{i: [a0, a1, ...]}`` with k = i*pi/N_P and two entries per order."""
    ap = AnsatzParams(order)
    zone = {round(k * p.n_phys / math.pi): k for k in brillouin_zone(p)}
    for key, v in node.mapping().items():
        try:
            i = int(key)
        except ValueError:
            raise v.error("momentum keys are integers i for k = i*pi/N_P") from None
        if i not in zone:
            raise v.error(f"k = {i}*pi/{p.n_phys} is outside the Brillouin zone")
        vals = [x.number() for x in v.sequence()]
        if len(vals) != 2 * order:
            raise v.error(f"expected {2 * order} values (alpha_0, alpha_1 per order)")
        for j in range(order):
            ap.set(zone[i], j + 1, 0, vals[2 * j])
            ap.set(zone[i], j + 1, 1, vals[2 * j + 1])
    return ap


def dump_alphas(ap: AnsatzParams, p: LatticeParams, order: int) -> dict:
    out = {}
    for k in brillouin_zone(p):
        if ap.covers(k, order):
            i = round(k * p.n_phys / math.pi)
            out[i] = [float(ap.get(k, j, par)) for j in range(1, order + 1) for par in (0, 1)]
    return out


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, default=str)
