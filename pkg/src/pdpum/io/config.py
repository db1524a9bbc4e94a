"""YAML experiment configuration with schema validation.

Every block is checked for unknown keys and wrong types; errors carry the
dotted field path and, where available, the line and column in the file.
"""

from __future__ import annotations

import dataclasses
import hashlib
import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Any, Optional

import yaml

from pdpum.geometry import CrackPolyline
from pdpum.materials import Material

log = logging.getLogger(__name__)

EDGES = ("bottom", "right", "top", "left")


class ConfigError(ValueError):
    """Parse or validation error, formatted as ``path (line L, column C): message``."""

    def __init__(self, message: str, path: str = "", mark=None):
        where = path
        if mark is not None:
            where = f"{path} " if path else ""
            where += f"(line {mark.line + 1}, column {mark.column + 1})"
        super().__init__(f"{where}: {message}" if where else message)
        self.path = path
        self.mark = mark


# ------------------------------------------------------------------ schema

@dataclass
class MaterialConfig:
    rho: float = 1200.0
    E: float = 3.25e9
    nu: float = 1.0 / 3.0
    Gc: float = 500.0

    def build(self) -> Material:
        return Material(self.rho, self.E, self.nu, self.Gc)


@dataclass
class CrackConfig:
    """Either explicit ``points`` or ``center`` + ``length`` + ``angle`` (degrees from x)."""

    points: Optional[list] = None
    center: Optional[list] = None
    length: Optional[float] = None
    angle: Optional[float] = None

    def build(self) -> CrackPolyline:
        if self.points is not None:
            return CrackPolyline(self.points)
        return CrackPolyline.from_center(self.center, self.length, self.angle)


@dataclass
class GeometryConfig:
    domain: list = field(default_factory=lambda: [0.0, 0.0, 0.1, 0.1])
    crack: Optional[CrackConfig] = None


@dataclass
class LoadConfig:
    """A condition on one edge, optionally restricted to ``interval``.

    ``kind`` is ``traction`` [N/m^2], ``fixed`` or ``displacement`` [m].
    """

    kind: str = "traction"
    edge: str = "bottom"
    value: list = field(default_factory=lambda: [0.0, 0.0])
    interval: Optional[list] = None


@dataclass
class PDConfig:
    h: float = 0.0005
    delta: float = 0.002
    dt: float = 2e-8
    n_steps: int = 50000
    T: float = 0.001
    snapshot_stride: int = 250


@dataclass
class DynamicConfig:
    T: float = 0.001
    dt: Optional[float] = None
    safety: float = 0.5


@dataclass
class PUMConfig:
    level: int = 6
    alpha: float = 1.25
    degree: int = 1
    order: int = 6
    tip_radius: float = 2.0
    rtol: float = 1e-10
    eps: float = 1e-10
    dynamic: DynamicConfig = field(default_factory=DynamicConfig)


@dataclass
class CouplingBlock:
    box: list = field(default_factory=lambda: [0.04, 0.01, 0.06, 0.03])
    cells: int = 65
    horizon_factor: float = 4.0
    T: float = 0.001
    n_steps: int = 10000
    N: int = 1
    snapshot_stride: int = 250

    @property
    def h_pd(self) -> float:
        return (self.box[2] - self.box[0]) / self.cells

    @property
    def delta(self) -> float:
        return self.horizon_factor * self.h_pd


@dataclass
class ExtractionConfig:
    stride: int = 250
    first_step: int = 0


@dataclass
class OutputConfig:
    dir: str = "output"
    vtk_stride: int = 0
    sample_spacing: Optional[float] = None
    figures: bool = True


@dataclass
class SimulationConfig:
    name: str = "experiment"
    material: MaterialConfig = field(default_factory=MaterialConfig)
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    loads: list = field(default_factory=list)
    pd: PDConfig = field(default_factory=PDConfig)
    pum: PUMConfig = field(default_factory=PUMConfig)
    coupling: Optional[CouplingBlock] = None
    extraction: ExtractionConfig = field(default_factory=ExtractionConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    source: str = ""

    @property
    def sample_spacing(self) -> float:
        return self.output.sample_spacing or self.pd.h

    def hash(self) -> str:
        """SHA-256 of the normalized configuration (independent of formatting)."""
        doc = dataclasses.asdict(self)
        doc.pop("source", None)
        text = yaml.safe_dump(doc, sort_keys=True)
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def to_dict(self) -> dict:
        doc = dataclasses.asdict(self)
        doc.pop("source", None)
        return doc


REQUIRED = ("material", "geometry", "loads")
BLOCKS = {
    "material": MaterialConfig,
    "geometry": GeometryConfig,
    "pd": PDConfig,
    "pum": PUMConfig,
    "coupling": CouplingBlock,
    "extraction": ExtractionConfig,
    "output": OutputConfig,
}


# ------------------------------------------------------------------ parsing

def _collect_marks(node: yaml.Node, marks: dict, path: str) -> None:
    marks[path] = node.start_mark
    if isinstance(node, yaml.MappingNode):
        seen = set()
        for k, v in node.value:
            if not isinstance(k, yaml.ScalarNode):
                raise ConfigError("mapping keys must be scalars", path, k.start_mark)
            if k.value in seen:
                raise ConfigError(f"duplicate key {k.value!r}", path, k.start_mark)
            seen.add(k.value)
            _collect_marks(v, marks, f"{path}.{k.value}" if path else k.value)
    elif isinstance(node, yaml.SequenceNode):
        for i, v in enumerate(node.value):
            _collect_marks(v, marks, f"{path}[{i}]")


def _parse(text: str, source: str):
    loader = yaml.SafeLoader(text)
    try:
        node = loader.get_single_node()
        if node is None:
            return {}, {}
        marks: dict = {}
        _collect_marks(node, marks, "")
        data = loader.construct_document(node)
    except yaml.MarkedYAMLError as exc:
        raise ConfigError(f"{source}: {exc.problem}", "", exc.problem_mark) from exc
    finally:
        loader.dispose()
    return data, marks


def _number(v, path, marks, integer=False, positive=False, allow_none=False):
    if v is None and allow_none:
        return None
    if isinstance(v, str):
        # YAML 1.1 reads exponents without a dot ("2e-8") as strings
        try:
            v = float(v)
        except ValueError:
            pass
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"expected a number, got {v!r}", path, marks.get(path))
    if integer:
        if int(v) != v:
            raise ConfigError(f"expected an integer, got {v!r}", path, marks.get(path))
        v = int(v)
    else:
        v = float(v)
    if positive and not v > 0:
        raise ConfigError(f"must be positive, got {v}", path, marks.get(path))
    return v


def _vector(v, n, path, marks, allow_none=False):
    if v is None and allow_none:
        return None
    if not isinstance(v, list) or len(v) != n:
        raise ConfigError(f"expected a list of {n} numbers, got {v!r}", path, marks.get(path))
    return [_number(x, f"{path}[{i}]", marks) for i, x in enumerate(v)]


def _block(cls, doc, path, marks):
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ConfigError(f"expected a mapping, got {type(doc).__name__}", path, marks.get(path))
    names = {f.name: f for f in dataclasses.fields(cls)}
    for k in doc:
        if k not in names:
            raise ConfigError(f"unknown key {k!r} (allowed: {', '.join(sorted(names))})", f"{path}.{k}", marks.get(f"{path}.{k}"))
    kwargs = {}
    defaults = cls()
    for name, f in names.items():
        if name not in doc:
            continue
        v = doc[name]
        sub = f"{path}.{name}"
        default = getattr(defaults, name)
        if cls is CouplingBlock and name == "box" or cls is GeometryConfig and name == "domain":
            kwargs[name] = _vector(v, 4, sub, marks)
        elif cls is CrackConfig and name == "points":
            if not isinstance(v, list) or len(v) < 2:
                raise ConfigError("expected at least two points", sub, marks.get(sub))
            kwargs[name] = [_vector(p, 2, f"{sub}[{i}]", marks) for i, p in enumerate(v)]
        elif cls is CrackConfig and name == "center":
            kwargs[name] = _vector(v, 2, sub, marks)
        elif cls is GeometryConfig and name == "crack":
            kwargs[name] = None if v is None else _block(CrackConfig, v, sub, marks)
        elif cls is PUMConfig and name == "dynamic":
            kwargs[name] = _block(DynamicConfig, v, sub, marks)
        elif isinstance(default, bool):
            if not isinstance(v, bool):
                raise ConfigError(f"expected true/false, got {v!r}", sub, marks.get(sub))
            kwargs[name] = v
        elif isinstance(default, str):
            if not isinstance(v, str):
                raise ConfigError(f"expected a string, got {v!r}", sub, marks.get(sub))
            kwargs[name] = v
        elif isinstance(default, int):
            kwargs[name] = _number(v, sub, marks, integer=True)
        else:
            kwargs[name] = _number(v, sub, marks, allow_none=True)
    return cls(**kwargs)


def _loads(doc, marks) -> list[LoadConfig]:
    if not isinstance(doc, list):
        raise ConfigError("expected a list of load conditions", "loads", marks.get("loads"))
    out = []
    for i, item in enumerate(doc):
        path = f"loads[{i}]"
        if not isinstance(item, dict):
            raise ConfigError("expected a mapping", path, marks.get(path))
        allowed = {"kind", "edge", "value", "interval"}
        for k in item:
            if k not in allowed:
                raise ConfigError(f"unknown key {k!r} (allowed: {', '.join(sorted(allowed))})", f"{path}.{k}", marks.get(f"{path}.{k}"))
        kind = item.get("kind", "traction")
        if kind not in ("traction", "fixed", "displacement"):
            raise ConfigError(f"kind must be traction, fixed or displacement, got {kind!r}", f"{path}.kind", marks.get(f"{path}.kind"))
        edge = item.get("edge")
        if edge not in EDGES:
            raise ConfigError(f"edge must be one of {', '.join(EDGES)}, got {edge!r}", f"{path}.edge", marks.get(f"{path}.edge", marks.get(path)))
        value = _vector(item.get("value", [0.0, 0.0]), 2, f"{path}.value", marks)
        interval = _vector(item.get("interval"), 2, f"{path}.interval", marks, allow_none=True)
        if interval is not None and not interval[0] < interval[1]:
            raise ConfigError("interval must be increasing", f"{path}.interval", marks.get(f"{path}.interval"))
        out.append(LoadConfig(kind, edge, value, interval))
    return out


def parse_config(text: str, source: str = "<string>") -> SimulationConfig:
    doc, marks = _parse(text, source)
    if not isinstance(doc, dict) or not doc:
        raise ConfigError(f"{source}: empty configuration; required blocks: {', '.join(REQUIRED)}")
    allowed = set(BLOCKS) | {"name", "loads"}
    for k in doc:
        if k not in allowed:
            raise ConfigError(f"unknown block {k!r} (allowed: {', '.join(sorted(allowed))})", k, marks.get(k))
    missing = [b for b in REQUIRED if b not in doc]
    if missing:
        raise ConfigError(f"{source}: missing required block(s): {', '.join(missing)}")
    kwargs: dict[str, Any] = {}
    for name, cls in BLOCKS.items():
        if name in doc:
            kwargs[name] = _block(cls, doc[name], name, marks)
    kwargs["loads"] = _loads(doc["loads"], marks)
    if "name" in doc:
        if not isinstance(doc["name"], str):
            raise ConfigError("expected a string", "name", marks.get("name"))
        kwargs["name"] = doc["name"]
    cfg = SimulationConfig(**kwargs, source=source)
    validate(cfg, marks)
    return cfg


def validate(cfg: SimulationConfig, marks: Optional[dict] = None) -> None:
    """Cross-field checks."""
    marks = marks or {}
    m = cfg.material
    try:
        m.build()
    except ValueError as exc:
        raise ConfigError(str(exc), "material", marks.get("material")) from exc
    d = cfg.geometry.domain
    if not (d[2] > d[0] and d[3] > d[1]):
        raise ConfigError("domain must be [xmin, ymin, xmax, ymax] with positive extent", "geometry.domain", marks.get("geometry.domain"))
    c = cfg.geometry.crack
    if c is not None:
        explicit = c.points is not None
        param = [c.center is not None, c.length is not None, c.angle is not None]
        if explicit == any(param) or (not explicit and not all(param)):
            raise ConfigError("give either points or center, length and angle", "geometry.crack", marks.get("geometry.crack"))
    pd = cfg.pd
    for name in ("h", "delta", "dt", "T"):
        if not getattr(pd, name) > 0:
            raise ConfigError("must be positive", f"pd.{name}", marks.get(f"pd.{name}"))
    if pd.n_steps < 1:
        raise ConfigError("must be at least 1", "pd.n_steps", marks.get("pd.n_steps"))
    if not math.isclose(pd.n_steps * pd.dt, pd.T, rel_tol=1e-9):
        raise ConfigError(f"n_steps * dt = {pd.n_steps * pd.dt:.6g} differs from T = {pd.T:.6g}", "pd", marks.get("pd"))
    ratio = pd.delta / pd.h
    if abs(ratio - round(ratio)) > 1e-9 * ratio:
        warnings.warn(f"pd.delta = {pd.delta} is not a multiple of pd.h = {pd.h}", stacklevel=2)
    p = cfg.pum
    if p.level < 0:
        raise ConfigError("must be non-negative", "pum.level", marks.get("pum.level"))
    if not 1.0 < p.alpha < 2.0:
        raise ConfigError("must lie in (1, 2)", "pum.alpha", marks.get("pum.alpha"))
    if p.degree != 1:
        raise ConfigError("only linear local spaces (degree 1) are implemented", "pum.degree", marks.get("pum.degree"))
    if p.order < 1:
        raise ConfigError("must be at least 1", "pum.order", marks.get("pum.order"))
    if cfg.coupling is not None:
        cb = cfg.coupling
        if cb.N < 1:
            raise ConfigError("must be at least 1", "coupling.N", marks.get("coupling.N"))
        if cb.cells < 1 or cb.n_steps < 1:
            raise ConfigError("cells and n_steps must be at least 1", "coupling", marks.get("coupling"))
    if cfg.extraction.stride < 1:
        raise ConfigError("must be at least 1", "extraction.stride", marks.get("extraction.stride"))


def load_config(path: str) -> SimulationConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from exc
    return parse_config(text, path)


def scaled(cfg: SimulationConfig, scale: float) -> SimulationConfig:
    """Desk-scale copy: ``h_pd``, ``delta`` and ``dt`` times ``scale``, step count divided.

    The PUM level is left alone: the PUM solves already run in seconds at
    full resolution.
    """
    if scale == 1:
        return cfg
    if not scale > 0:
        raise ConfigError(f"scale must be positive, got {scale}")
    pd = dataclasses.replace(cfg.pd)
    pd.h *= scale
    pd.delta *= scale
    n = max(1, int(round(pd.n_steps / scale)))
    pd.n_steps = n
    pd.dt = pd.T / n
    pd.snapshot_stride = max(1, int(round(pd.snapshot_stride / scale)))
    ext = dataclasses.replace(cfg.extraction)
    ext.stride = max(1, int(round(ext.stride / scale)))
    ext.first_step = int(round(ext.first_step / scale))
    return dataclasses.replace(cfg, pd=pd, extraction=ext)


def bundled_config_path(name: str) -> str:
    """Path of a configuration shipped with the package (``bar``, ``mode1``, ``inclined``)."""
    from importlib import resources

    fname = name if name.endswith(".cfg") else f"{name}.cfg"
    ref = resources.files("pdpum.configs") / fname
    if not ref.is_file():
        raise ConfigError(f"no bundled configuration {name!r}")
    return str(ref)
