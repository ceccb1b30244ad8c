from pathlib import Path

import pytest

from cutfeec.config import ExperimentConfig, load_config, parse_config
from cutfeec.model.enums import FacetSet, GeometryKind
from cutfeec.util import ConfigError

ANNULUS = """
# harmonic 1-forms on the annulus
[geometry]
kind = annulus
center = 0, 0
r_inner = 0.375
r_outer = 0.875

[problem]
name = annulus_harmonic
k = 1

[discretization]
m = 8, 16, 32
eta = 1
delta = 0.25   # macro patch threshold
facet_set = full
stabilize = off

[sweep]
epsilon = 0, 1e-3, 1e-6

[output]
path = out/annulus.csv
grid_points = 11
"""


def test_parse_full_config():
    cfg = parse_config(ANNULUS)
    assert cfg.geometry == GeometryKind.ANNULUS
    assert cfg.center == (0.0, 0.0)
    assert (cfg.r_inner, cfg.r_outer) == (0.375, 0.875)
    assert cfg.problem == "annulus_harmonic"
    assert cfg.k == 1
    assert cfg.m_list == (8, 16, 32)
    assert cfg.eta == 1.0 and isinstance(cfg.eta, float)
    assert cfg.delta == 0.25
    assert cfg.facet_set == FacetSet.FULL
    assert cfg.stabilize is False
    assert cfg.epsilon_list == (0.0, 1e-3, 1e-6)
    assert cfg.output == Path("out/annulus.csv")
    assert cfg.grid_points == 11
    assert cfg.mesh_dump is None


@pytest.mark.parametrize("text", ["", "\n\n", "# nothing here\n"])
def test_defaults(text: str):
    cfg = parse_config(text)
    assert cfg == ExperimentConfig()
    assert cfg.geometry == GeometryKind.DISK
    assert cfg.k == 2
    assert cfg.eta == 1.0
    assert cfg.delta == 0.25
    assert cfg.facet_set == FacetSet.MACRO
    assert cfg.stabilize


@pytest.mark.parametrize("word,expected", [("on", True), ("ON", True), ("yes", True), ("true", True), ("off", False), ("no", False)])
def test_booleans(word: str, expected: bool):
    assert parse_config(f"[discretization]\nstabilize = {word}\n").stabilize is expected


@pytest.mark.parametrize(
    "text",
    [
        pytest.param("[solver]\ntol = 1\n", id="unknown-section"),
        pytest.param("[problem]\norder = 1\n", id="unknown-key"),
        pytest.param("[problem]\nk = 5\n", id="degree"),
        pytest.param("[problem]\nk = 1.5\n", id="degree-float"),
        pytest.param("[problem]\nk = 1, 2\n", id="degree-list"),
        pytest.param("[discretization]\nm = 8, 2\n", id="coarse-mesh"),
        pytest.param("[discretization]\ndelta = 0\n", id="delta-zero"),
        pytest.param("[discretization]\ndelta = 1.5\n", id="delta-large"),
        pytest.param("[discretization]\neta = -1\n", id="eta"),
        pytest.param("[discretization]\neta = big\n", id="eta-word"),
        pytest.param("[discretization]\nstabilize = maybe\n", id="bool"),
        pytest.param("[discretization]\nfacet_set = some\n", id="facet-set"),
        pytest.param("[discretization]\nquad_degree_volume = 7\n", id="volume-degree"),
        pytest.param("[geometry]\nkind = torus\n", id="geometry"),
        pytest.param("[geometry]\nkind = annulus\nr_inner = 0.9\nr_outer = 0.5\n", id="radii"),
        pytest.param("[geometry]\ncenter = 1\n", id="center"),
        pytest.param("[output]\ngrid_points = 1\n", id="grid"),
        pytest.param("[problem]\nk = 1\n[problem]\nk = 2\n", id="duplicate-section"),
        pytest.param("[problem]\nk = 1\nk = 2\n", id="duplicate-key"),
        pytest.param("k = 1\n", id="no-section"),
        pytest.param("[problem\nk = 1\n", id="bad-header"),
        pytest.param("[problem]\nk 1\n", id="missing-equals"),
    ],
)
def test_invalid(text: str):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_render_round_trip():
    cfg = parse_config(ANNULUS)
    assert parse_config(cfg.render()) == cfg
    assert parse_config(ExperimentConfig().render()) == ExperimentConfig()


def test_with_overrides():
    cfg = parse_config(ANNULUS)
    assert cfg.with_overrides(m=64).m_list == (64,)
    assert cfg.with_overrides(k=2).k == 2
    assert cfg.with_overrides() == cfg
    with pytest.raises(ConfigError):
        cfg.with_overrides(k=5)
    with pytest.raises(ConfigError):
        cfg.with_overrides(m=2)


def test_level_set_from_config():
    cfg = parse_config(ANNULUS)
    phi = cfg.level_set(0.1)
    assert phi.kind == GeometryKind.ANNULUS
    assert phi.center == pytest.approx((-0.1, 0.0))
    assert cfg.box().area == pytest.approx(4.0)


def test_load_config(tmp_path):
    path = tmp_path / "annulus.cfg"
    path.write_text(ANNULUS)
    assert load_config(path) == parse_config(ANNULUS)
    assert load_config(str(path)).k == 1
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.cfg")
