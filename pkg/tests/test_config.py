import math

import pytest
from hypothesis import given, strategies as st

from z2scatter.circuits import APPX_I, APPX_II
from z2scatter.config import ConfigError, dump_alphas, load_config, parse_config, parse_number


def test_defaults():
    cfg = load_config()
    assert cfg.lattice.n_phys == 5
    assert cfg.packets[1] == pytest.approx((7, 7 * math.pi / 20, -2 * math.pi / 5))
    assert cfg.scheme == APPX_I
    assert cfg.n_steps == 4 and not cfg.noise.enabled


def test_full_config():
    cfg = parse_config("""
lattice: {n_phys: 3, mass: 0.8, eps: 0.2}
ground: {theta_h: 0.1, theta_m: pi/4, bond_order: even_odd}
ansatz:
  order: 2
  alphas: {-1: [0.1, 0.2, 0.3, 0.4], 0: [1, 2, 3, 4], 1: [0, 0, 0, 0]}
wavepackets:
  - {mu: 1, sigma: 0.5, kbar: pi/3}
scheme: {preset: appx_ii, wp_trotter_steps: 3}
evolution: {dt: 0.5, n_steps: 2}
noise: {p2: 0.01, trajectories: 40, twirl: false}
bootstrap: 50
outputs: {directory: results}
""")
    assert cfg.lattice.eps == 0.2 and cfg.theta == pytest.approx((0.1, math.pi / 4))
    assert cfg.bond_order == "even_odd"
    assert cfg.alphas.get(math.pi / 3, 2, 1) == 0.0 and cfg.alphas.get(0.0, 2, 0) == 3
    assert cfg.scheme.ancilla_mode == APPX_II.ancilla_mode and cfg.scheme.wp_trotter_steps == 3
    assert cfg.scheme.order == 2
    assert cfg.noise.enabled and not cfg.noise.twirl
    assert (cfg.resamples, cfg.outputs, cfg.dt) == (50, "results", 0.5)
    assert dump_alphas(cfg.alphas, cfg.lattice, 2)[0] == [1, 2, 3, 4]


@pytest.mark.parametrize("text,line,fragment", [
    ("lattice: {n_phys: 0}\n", 1, ">= 1"),
    ("shots: 10\nlattce: {n_phys: 2}\n", 2, "unknown key"),
    ("lattice:\n  n_phys: 2\n  n_phys: 3\n", 3, "duplicate"),
    ("wavepackets:\n  - {mu: 0, sigma: 1, kbar: 0.3}\n", 2, "lattice momentum"),
    ("wavepackets:\n  - {mu: 0, sigma: -1, kbar: 0}\n", 2, "sigma"),
    ("wavepackets:\n  - {mu: 0, kbar: 0}\n", 2, "missing 'sigma'"),
    ("ground: {theta_h: 0.1}\n", 1, "both"),
    ("noise: {p2: 1.5}\n", 1, "p2"),
    ("evolution: {dt: 0}\n", 1, "dt"),
    ("shots: [1, 2]\n", 1, "shots"),
    ("lattice: {n_phys: 2}\nansatz:\n  alphas: {5: [0, 0]}\n", 3, "Brillouin"),
    ("ansatz:\n  alphas: {0: [0]}\n", 2, "expected 2 values"),
    ("scheme: {preset: appx_iii}\n", 1, "preset"),
    ("lattice: {n_phys: 2\n", 2, "YAML"),
    ("seed: 1e400x\n", 1, "seed"),
    ("lattice: {n_phys: 2}\nwavepackets:\n  - {mu: 0, sigma: 1, kbar: 0}\n"
     "  - {mu: 2, sigma: 1, kbar: 0}\nscheme: {preset: appx_i, ancillas: 1}\n", 5, "ancillas"),
])
def test_config_errors_carry_line_numbers(text, line, fragment):
    with pytest.raises(ConfigError) as e:
        parse_config(text, "run.yaml")
    assert e.value.line == line
    assert f"run.yaml:{line}" in str(e.value)
    assert fragment.lower() in str(e.value).lower()


def test_parse_number():
    assert parse_number("7*pi/20") == pytest.approx(7 * math.pi / 20)
    assert parse_number("-2*pi/5") == pytest.approx(-2 * math.pi / 5)
    assert parse_number(3) == 3.0
    for bad in ("__import__('os')", "pi**pi**pi**pi", True, "x+1"):
        with pytest.raises((ValueError, OverflowError)):
            parse_number(bad)


@given(st.floats(-1e6, 1e6, allow_nan=False))
def test_parse_number_roundtrip(x):
    assert parse_number(repr(x)) == x


def test_digest_tracks_text():
    a = parse_config("shots: 10\n")
    b = parse_config("shots: 11\n")
    assert a.digest != b.digest and a.digest == parse_config("shots: 10\n").digest
