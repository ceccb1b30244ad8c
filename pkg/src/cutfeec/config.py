from typing import Any, Callable, Generator, Optional, Self
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
import importlib.resources
import enum
import re

import lark

from cutfeec.geometry import DELTA_DEFAULT, N_MAX_DEFAULT, LevelSet
from cutfeec.model.enums import FacetSet, GeometryKind
from cutfeec.model.util import Box
from cutfeec.util import ConfigError

Scalar = int | float | str


def get_parser():
    grammar = importlib.resources.files("cutfeec").joinpath("config.lark").read_text()
    return lark.Lark(grammar, start="config", parser="earley")


PARSER = get_parser()


class Rules(enum.StrEnum):
    config = enum.auto()
    section = enum.auto()
    header = enum.auto()
    entry = enum.auto()
    value = enum.auto()
    number = enum.auto()
    word = enum.auto()


class Tokens(enum.StrEnum):
    @staticmethod
    def _generate_next_value_(name, start, count, last_values) -> str:
        return name

    NAME = enum.auto()
    NUMBER = enum.auto()
    WORD = enum.auto()


def parse_config_tree(text: str) -> lark.Tree:
    try:
        return PARSER.parse(text if text.endswith("\n") else text + "\n")
    except lark.LarkError as e:
        raise ConfigError(f"malformed config: {e}")


class SubtreeProcessor:
    def __init__(self, tree: lark.Tree, expect: Optional[Rules] = None) -> None:
        if expect is not None and tree.data != expect:
            raise ConfigError(f"Grammar error: expected {expect}; got {tree.data}")
        self.tree = tree
        self.offset = 0

    def get_subtree(self, rule: Rules) -> lark.Tree:
        i = self.offset
        while i < len(self.tree.children):
            child = self.tree.children[i]
            i += 1
            if isinstance(child, lark.Tree) and child.data == rule:
                self.offset = i
                return child
        raise ConfigError(f"{self.tree.data} has no {rule}")

    def iter_subtree(self, rule: Optional[Rules] = None) -> Generator[lark.Tree]:
        i = self.offset
        while i < len(self.tree.children):
            child = self.tree.children[i]
            i += 1
            if isinstance(child, lark.Tree) and (rule is None or child.data == rule):
                self.offset = i
                yield child

    def get_token(self, token: Tokens) -> str:
        i = self.offset
        while i < len(self.tree.children):
            child = self.tree.children[i]
            i += 1
            if isinstance(child, lark.Token) and child.type == token:
                self.offset = i
                return child.value
        raise ConfigError(f"{self.tree.data} has no {token}")

    def unexpected_token(self, token: Optional[str]) -> Exception:
        if token is None:
            return ConfigError(f"Grammar error: {self.tree.data} empty")
        return ConfigError(f"Grammar error: found {token} inside of {self.tree.data}")


_INT = re.compile(r"[+-]?\d+")


def build_number(tree: lark.Tree) -> int | float:
    text = SubtreeProcessor(tree, Rules.number).get_token(Tokens.NUMBER)
    if _INT.fullmatch(text):
        return int(text)
    return float(text)


def build_value(tree: lark.Tree) -> list[Scalar]:
    proc = SubtreeProcessor(tree, Rules.value)
    res: list[Scalar] = []
    for child in proc.iter_subtree():
        match child.data:
            case Rules.number:
                res.append(build_number(child))
            case Rules.word:
                res.append(SubtreeProcessor(child).get_token(Tokens.WORD))
            case _:
                raise proc.unexpected_token(child.data)
    return res


def build_sections(tree: lark.Tree) -> dict[str, dict[str, list[Scalar]]]:
    assert tree.data == Rules.config
    res: dict[str, dict[str, list[Scalar]]] = {}
    for section in SubtreeProcessor(tree).iter_subtree(Rules.section):
        proc = SubtreeProcessor(section, Rules.section)
        name = SubtreeProcessor(proc.get_subtree(Rules.header)).get_token(Tokens.NAME)
        if name in res:
            raise ConfigError(f"duplicate section [{name}]")
        entries = res[name] = {}
        for entry in proc.iter_subtree(Rules.entry):
            ep = SubtreeProcessor(entry)
            key = ep.get_token(Tokens.NAME)
            if key in entries:
                raise ConfigError(f"duplicate key {key} in [{name}]")
            entries[key] = build_value(ep.get_subtree(Rules.value))
    return res


def _scalar(key: str, values: list[Scalar]) -> Scalar:
    if len(values) != 1:
        raise ConfigError(f"{key} expects a single value, got {len(values)}")
    return values[0]


def to_int(key: str, values: list[Scalar]) -> int:
    val = _scalar(key, values)
    if not isinstance(val, int):
        raise ConfigError(f"{key} expects an integer, got {val!r}")
    return val


def to_float(key: str, values: list[Scalar]) -> float:
    val = _scalar(key, values)
    if isinstance(val, str):
        raise ConfigError(f"{key} expects a number, got {val!r}")
    return float(val)


def to_str(key: str, values: list[Scalar]) -> str:
    val = _scalar(key, values)
    return str(val)


def to_bool(key: str, values: list[Scalar]) -> bool:
    val = _scalar(key, values)
    match str(val).lower():
        case "on" | "true" | "yes":
            return True
        case "off" | "false" | "no":
            return False
        case _:
            raise ConfigError(f"{key} expects on/off, got {val!r}")


def to_enum[E: enum.StrEnum](kind: type[E]) -> Callable[[str, list[Scalar]], E]:
    def convert(key: str, values: list[Scalar]) -> E:
        val = str(_scalar(key, values)).lower()
        try:
            return kind(val)
        except ValueError:
            raise ConfigError(f"{key} expects one of {', '.join(kind)}, got {val!r}")

    return convert


def to_int_list(key: str, values: list[Scalar]) -> tuple[int, ...]:
    return tuple(to_int(key, [v]) for v in values)


def to_float_list(key: str, values: list[Scalar]) -> tuple[float, ...]:
    return tuple(to_float(key, [v]) for v in values)


def to_point(key: str, values: list[Scalar]) -> tuple[float, float]:
    if len(values) != 2:
        raise ConfigError(f"{key} expects two coordinates, got {len(values)}")
    x, y = to_float_list(key, values)
    return x, y


def to_path(key: str, values: list[Scalar]) -> Path:
    return Path(to_str(key, values))


# section -> key -> (field, converter)
SCHEMA: dict[str, dict[str, tuple[str, Callable[[str, list[Scalar]], Any]]]] = {
    "geometry": {
        "kind": ("geometry", to_enum(GeometryKind)),
        "center": ("center", to_point),
        "radius": ("radius", to_float),
        "r_inner": ("r_inner", to_float),
        "r_outer": ("r_outer", to_float),
        "half_width": ("half_width", to_float),
    },
    "problem": {
        "name": ("problem", to_str),
        "k": ("k", to_int),
    },
    "discretization": {
        "m": ("m_list", to_int_list),
        "eta": ("eta", to_float),
        "delta": ("delta", to_float),
        "facet_set": ("facet_set", to_enum(FacetSet)),
        "stabilize": ("stabilize", to_bool),
        "quad_degree_volume": ("quad_degree_volume", to_int),
        "quad_degree_facet": ("quad_degree_facet", to_int),
        "n_max": ("n_max", to_int),
    },
    "sweep": {
        "epsilon": ("epsilon_list", to_float_list),
    },
    "output": {
        "path": ("output", to_path),
        "grid_points": ("grid_points", to_int),
        "mesh_dump": ("mesh_dump", to_path),
    },
}


@dataclass(frozen=True)
class ExperimentConfig:
    geometry: GeometryKind = GeometryKind.DISK
    center: tuple[float, float] = (0.0, 0.0)
    radius: float = 0.75
    r_inner: float = 0.375
    r_outer: float = 0.875
    half_width: float = 1.0
    problem: str = "disk_poisson"
    k: int = 2
    m_list: tuple[int, ...] = (8, 16, 32)
    eta: float = 1.0
    delta: float = DELTA_DEFAULT
    facet_set: FacetSet = FacetSet.MACRO
    stabilize: bool = True
    quad_degree_volume: int = 2
    quad_degree_facet: int = 2
    n_max: int = N_MAX_DEFAULT
    epsilon_list: tuple[float, ...] = (0.0,)
    output: Optional[Path] = None
    grid_points: int = 21
    mesh_dump: Optional[Path] = field(default=None)

    @classmethod
    def from_sections(cls, sections: dict[str, dict[str, list[Scalar]]]) -> Self:
        kwargs = {}
        for name, entries in sections.items():
            if name not in SCHEMA:
                raise ConfigError(f"unknown section [{name}]")
            for key, values in entries.items():
                if key not in SCHEMA[name]:
                    raise ConfigError(f"unknown key {key} in [{name}]")
                attr, convert = SCHEMA[name][key]
                kwargs[attr] = convert(key, values)
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self.geometry == GeometryKind.DISK and self.radius <= 0:
            raise ConfigError(f"radius must be positive, got {self.radius}")
        if self.geometry == GeometryKind.ANNULUS and not 0 < self.r_inner < self.r_outer:
            raise ConfigError(f"annulus needs 0 < r_inner < r_outer, got {self.r_inner}, {self.r_outer}")
        if self.half_width <= 0:
            raise ConfigError(f"half_width must be positive, got {self.half_width}")
        if self.k not in (0, 1, 2):
            raise ConfigError(f"form degree k must be 0, 1 or 2, got {self.k}")
        if not self.m_list:
            raise ConfigError("at least one mesh resolution m is required")
        for m in self.m_list:
            if m < 4:
                raise ConfigError(f"mesh resolution m must be at least 4, got {m}")
        if self.eta <= 0:
            raise ConfigError(f"eta must be positive, got {self.eta}")
        if not 0 < self.delta <= 1:
            raise ConfigError(f"delta must lie in (0, 1], got {self.delta}")
        if not 1 <= self.quad_degree_volume <= 4:
            raise ConfigError(f"quad_degree_volume must lie in 1..4, got {self.quad_degree_volume}")
        if not 0 <= self.quad_degree_facet <= 9:
            raise ConfigError(f"quad_degree_facet must lie in 0..9, got {self.quad_degree_facet}")
        if self.n_max < 1:
            raise ConfigError(f"n_max must be positive, got {self.n_max}")
        if not self.epsilon_list:
            raise ConfigError("epsilon list is empty")
        if self.grid_points < 2:
            raise ConfigError(f"grid_points must be at least 2, got {self.grid_points}")

    def with_overrides(self, m: Optional[int] = None, k: Optional[int] = None) -> "ExperimentConfig":
        cfg = self
        if m is not None:
            cfg = replace(cfg, m_list=(m,))
        if k is not None:
            cfg = replace(cfg, k=k)
        cfg.validate()
        return cfg

    def box(self) -> Box:
        return Box.square(self.half_width)

    def level_set(self, epsilon: float = 0.0) -> LevelSet:
        match self.geometry:
            case GeometryKind.DISK:
                phi = LevelSet.circle(self.center, self.radius)
            case GeometryKind.ANNULUS:
                phi = LevelSet.annulus(self.center, self.r_inner, self.r_outer)
            case _:
                raise ConfigError(f"unknown geometry {self.geometry}")
        return phi.shifted((epsilon, 0.0))

    def render(self) -> str:
        values = {f.name: getattr(self, f.name) for f in fields(self)}
        lines = []
        for section, keys in SCHEMA.items():
            lines.append(f"[{section}]")
            for key, (attr, _) in keys.items():
                val = values[attr]
                if val is None:
                    continue
                lines.append(f"{key} = {_render_value(val)}")
        return "\n".join(lines) + "\n"


def _render_value(val: Any) -> str:
    match val:
        case bool():
            return "on" if val else "off"
        case tuple():
            return ", ".join(_render_value(v) for v in val)
        case float():
            return repr(val)
        case _:
            return str(val)


def parse_config(text: str) -> ExperimentConfig:
    return ExperimentConfig.from_sections(build_sections(parse_config_tree(text)))


def load_config(path: Path | str) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}")
    return parse_config(text)
