"""Simulation configuration: TOML parsing, validation and canonical output."""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, fields, replace

from .errors import ConfigError

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

DEFAULT_R_INNER = 1.0 / math.sqrt(math.pi)  # unit-area body, so mass 1 means density 1

# (section, key) -> (attribute, type, default)
SCHEMA = {
    ("geometry", "r_inner"): ("r_inner", float, DEFAULT_R_INNER),
    ("geometry", "r_outer"): ("r_outer", float, 1.5),
    ("physics", "mu"): ("mu", float, 0.1),
    ("physics", "beta"): ("beta", float, 1.0),
    ("physics", "no_slip"): ("no_slip", bool, False),
    ("grid", "n_r"): ("n_r", int, 32),
    ("grid", "n_theta"): ("n_theta", int, 64),
    ("time", "dt"): ("dt", float, 0.0),
    ("time", "t_end"): ("t_end", float, 0.5),
    ("time", "cfl"): ("cfl", float, 0.9),
    ("run", "seed"): ("seed", int, 0),
    ("run", "delta0"): ("delta0", float, 0.0),
    ("solver", "proj_tol"): ("proj_tol", float, 1e-10),
    ("solver", "newton_tol"): ("newton_tol", float, 1e-12),
    ("body", "motion"): ("body_motion", str, "free"),
    ("body", "mass"): ("body_mass", float, 1.0),
    ("body", "a0"): ("a0", list, [0.0, 0.0]),
    ("body", "omega0"): ("omega0", float, 0.0),
    ("initial", "kind"): ("initial", str, "swirl"),
    ("initial", "amplitude"): ("amplitude", float, 1.0),
    ("initial", "perturbation"): ("perturbation", float, 0.0),
    ("output", "dump_every"): ("dump_every", int, 0),
}

BODY_MOTIONS = ("free", "pinned")
INITIAL_KINDS = ("rest", "rigid-rotation", "swirl", "bump")


@dataclass(frozen=True)
class SimConfig:
    r_inner: float = DEFAULT_R_INNER
    r_outer: float = 1.5
    mu: float = 0.1
    beta: float = 1.0
    no_slip: bool = False
    n_r: int = 32
    n_theta: int = 64
    dt: float = 0.0
    t_end: float = 0.5
    cfl: float = 0.9
    seed: int = 0
    delta0: float = 0.0
    proj_tol: float = 1e-10
    newton_tol: float = 1e-12
    body_motion: str = "free"
    body_mass: float = 1.0
    a0: tuple = (0.0, 0.0)
    omega0: float = 0.0
    initial: str = "swirl"
    amplitude: float = 1.0
    perturbation: float = 0.0
    dump_every: int = 0

    def __post_init__(self):
        object.__setattr__(self, "a0", tuple(float(v) for v in self.a0))
        if self.delta0 <= 0:
            object.__setattr__(self, "delta0", 0.1 * (self.r_outer - self.r_inner))
        validate(self)

    @property
    def R_s(self):
        return self.r_inner

    @property
    def R_Omega(self):
        return self.r_outer

    @property
    def body_free(self):
        return self.body_motion == "free"

    def with_(self, **kw):
        return replace(self, **kw)


def validate(cfg: SimConfig):
    checks = [
        (cfg.mu > 0, "mu > 0"),
        (cfg.beta > 0, "β > 0 (beta > 0)"),
        (cfg.r_inner > 0, "r_inner > 0"),
        (cfg.r_outer > cfg.r_inner, "r_inner < r_outer"),
        (cfg.n_r >= 8 and cfg.n_theta >= 8, "n_r, n_theta >= 8"),
        (cfg.dt >= 0, "dt >= 0 (0 selects the stability limit)"),
        (cfg.t_end >= 0, "t_end >= 0"),
        (0 < cfg.cfl <= 1, "0 < cfl <= 1"),
        (cfg.proj_tol > 0 and cfg.newton_tol > 0, "solver tolerances > 0"),
        (cfg.body_mass > 0, "body mass > 0"),
        (cfg.body_motion in BODY_MOTIONS, f"body.motion in {BODY_MOTIONS}"),
        (cfg.initial in INITIAL_KINDS, f"initial.kind in {INITIAL_KINDS}"),
        (len(cfg.a0) == 2, "body.a0 has two components"),
        (cfg.delta0 < cfg.r_outer - cfg.r_inner, "delta0 < r_outer - r_inner"),
        (cfg.dump_every >= 0, "dump_every >= 0"),
        (cfg.seed >= 0, "seed >= 0"),
        (not cfg.no_slip or cfg.body_motion == "pinned", "no_slip only with body.motion = pinned"),
    ]
    for ok, msg in checks:
        if not ok:
            raise ConfigError(f"invalid configuration: requires {msg}")


def _line_of(text, section, key):
    cur = None
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if line.startswith("[") and line.endswith("]"):
            cur = line[1:-1].strip()
        elif cur == section and line.split("=", 1)[0].strip() == key:
            return n
    return None


def parse_config_text(text: str) -> SimConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        line = getattr(exc, "lineno", None)
        if line is None:
            import re

            m = re.search(r"line (\d+)", str(exc))
            line = int(m.group(1)) if m else None
        raise ConfigError(f"parse error: {exc}", line=line) from None
    kw = {}
    for section, body in data.items():
        if not isinstance(body, dict):
            raise ConfigError(f"top-level key {section!r} is not a section",
                              line=_line_of(text, None, section))
        for key, value in body.items():
            spec = SCHEMA.get((section, key))
            if spec is None:
                raise ConfigError(f"unknown key {section}.{key}", line=_line_of(text, section, key))
            attr, typ, _ = spec
            try:
                if typ is bool:
                    if not isinstance(value, bool):
                        raise TypeError
                    kw[attr] = value
                elif typ is list:
                    kw[attr] = tuple(float(v) for v in value)
                elif typ is float:
                    if isinstance(value, bool):
                        raise TypeError
                    kw[attr] = float(value)
                elif typ is int:
                    if isinstance(value, bool) or int(value) != value:
                        raise TypeError
                    kw[attr] = int(value)
                else:
                    kw[attr] = str(value)
            except (TypeError, ValueError):
                raise ConfigError(f"{section}.{key} must be {typ.__name__}",
                                  line=_line_of(text, section, key)) from None
    return SimConfig(**kw)


def parse_config(path) -> SimConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config_text(fh.read())


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else ("inf" if v > 0 else "-inf")
    if isinstance(v, (tuple, list)):
        return "[" + ", ".join(_fmt(float(x)) for x in v) + "]"
    return '"' + str(v).replace("\\", "\\\\").replace('"', '\\"') + '"'


def serialize_config(cfg: SimConfig) -> str:
    """Canonical TOML text: every key, sections and keys in schema order."""
    out = []
    section = None
    for (sec, key), (attr, _, _) in SCHEMA.items():
        if sec != section:
            if out:
                out.append("")
            out.append(f"[{sec}]")
            section = sec
        out.append(f"{key} = {_fmt(getattr(cfg, attr))}")
    return "\n".join(out) + "\n"


def config_dict(cfg: SimConfig):
    return {f.name: getattr(cfg, f.name) for f in fields(cfg)}
