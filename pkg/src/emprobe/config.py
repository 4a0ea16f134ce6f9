"""Experiment configuration: flat INI blocks parsed into built objects.

The file format is `[block]` sections of `key = value` lines, chosen so
experiment archives diff cleanly.  Parsing is strict: unknown blocks or
keys are rejected, every physical parameter must be positive, and the
obstacle / source pair is validated before any stage runs.  SCHEMA below
is the published contract; README documents it line by line.
"""

import configparser
from dataclasses import dataclass

import numpy as np

from .errors import InvalidConfig
from .fdtd import GridSpec, causal_extent
from .geometry import Ellipsoid, Sphere, SphereUnion
from .source import Pulse, SourceSpec, validate_source

# block -> {key: (type, default)}; REQUIRED marks keys that must appear.
REQUIRED = object()
SCHEMA = {
    "obstacle": {"kind": (str, REQUIRED), "center": ("vec", None),
                 "radius": (float, None), "semiaxes": ("vec", None),
                 "members": (str, None)},
    "source": {"p": ("vec", REQUIRED), "eta": (float, REQUIRED),
               "a": ("vec", REQUIRED), "T": (float, 4.0),
               "eps": (float, 1.0), "mu": (float, 1.0),
               "omega": (float, 1.0), "cutoff": (float, 1.0),
               "blend": (float, 0.2), "amplitude": (float, 1.0)},
    "grid": {"lo": ("vec", None), "hi": ("vec", None),
             "h": (float, REQUIRED), "cfl": (float, 0.5),
             "boundary": (str, "mur"), "strict": (bool, True)},
    "tau": {"min": (float, 4.0), "max": (float, 12.0),
            "count": (int, 9), "spacing": (str, "log")},
    "pipeline": {"mode": (str, "semianalytic")},
    "output": {"dir": (str, "out")},
    "recovery": {"s1": (float, REQUIRED), "s2": (float, REQUIRED)},
    "reflectcheck": {"samples": (int, 12), "h_fd": (float, 1e-3),
                     "tau": (float, 12.0), "seed": (int, 0)},
    "probe": {"level": (int, 2), "s": (float, 0.5), "tol": (float, 1e-6)},
}
# member sub-blocks of a union obstacle, named [obstacle.<label>]
MEMBER_KEYS = {"kind": (str, REQUIRED), "center": ("vec", REQUIRED),
               "radius": (float, REQUIRED)}

PIPELINES = ("fdtd", "semianalytic", "both")


@dataclass(frozen=True)
class TauBlock:
    lo: float
    hi: float
    count: int
    spacing: str

    def grid(self):
        if self.spacing == "log":
            return np.exp(np.linspace(np.log(self.lo), np.log(self.hi),
                                      self.count))
        return np.linspace(self.lo, self.hi, self.count)


@dataclass(frozen=True)
class ExperimentConfig:
    obstacle: object
    spec: SourceSpec
    grid: object          # GridSpec, or None when no [grid] block
    grid_strict: bool
    tau: TauBlock
    pipeline: str
    out_dir: str
    recovery: tuple       # (s1, s2) or None
    reflectcheck: dict    # block values or None
    probe: dict


def _convert(block, key, kind, raw):
    where = f"[{block}] {key}"
    try:
        if kind == "vec":
            v = np.array([float(t) for t in raw.split()], dtype=float)
            if v.shape != (3,):
                raise ValueError
            return v
        if kind is bool:
            low = raw.strip().lower()
            if low in ("true", "yes", "1"):
                return True
            if low in ("false", "no", "0"):
                return False
            raise ValueError
        return kind(raw)
    except (ValueError, TypeError):
        raise InvalidConfig(f"{where}: cannot parse {raw!r}",
                            block=block, key=key) from None


def _read_block(cp, name, schema, required_block=False):
    if name not in cp:
        if required_block:
            raise InvalidConfig(f"missing [{name}] block", block=name)
        return None
    out = {}
    for key in cp[name]:
        if key not in schema:
            raise InvalidConfig(f"unknown key [{name}] {key}",
                                block=name, key=key)
        out[key] = _convert(name, key, schema[key][0], cp[name][key])
    for key, (_, default) in schema.items():
        if key in out:
            continue
        if default is REQUIRED:
            raise InvalidConfig(f"missing key [{name}] {key}",
                                block=name, key=key)
        if default is not None:
            out[key] = default
    return out


def _require_positive(block, values, keys):
    for key in keys:
        if key in values and not values[key] > 0:
            raise InvalidConfig(f"[{block}] {key} must be positive",
                                block=block, key=key,
                                value=values[key])


def _build_obstacle(cp):
    ob = _read_block(cp, "obstacle", SCHEMA["obstacle"],
                     required_block=True)
    kind = ob["kind"]
    if kind == "sphere":
        if ob.get("center") is None or ob.get("radius") is None:
            raise InvalidConfig("sphere needs center and radius",
                                block="obstacle")
        _require_positive("obstacle", ob, ("radius",))
        return Sphere(ob["center"], ob["radius"])
    if kind == "ellipsoid":
        if ob.get("center") is None or ob.get("semiaxes") is None:
            raise InvalidConfig("ellipsoid needs center and semiaxes",
                                block="obstacle")
        if not np.all(ob["semiaxes"] > 0):
            raise InvalidConfig("[obstacle] semiaxes must be positive",
                                block="obstacle", key="semiaxes")
        return Ellipsoid(ob["center"], ob["semiaxes"])
    if kind == "union":
        labels = (ob.get("members") or "").split()
        if not labels:
            raise InvalidConfig("union needs a members list",
                                block="obstacle", key="members")
        spheres = []
        for label in labels:
            sub = _read_block(cp, f"obstacle.{label}", MEMBER_KEYS)
            if sub is None:
                raise InvalidConfig(
                    f"missing [obstacle.{label}] block for member",
                    block=f"obstacle.{label}")
            if sub["kind"] != "sphere":
                raise InvalidConfig("union members must be spheres",
                                    block=f"obstacle.{label}")
            _require_positive(f"obstacle.{label}", sub, ("radius",))
            spheres.append(Sphere(sub["center"], sub["radius"]))
        return SphereUnion(spheres)
    raise InvalidConfig(f"unknown obstacle kind {kind!r}",
                        block="obstacle", key="kind")


def _known_sections(cp):
    for name in cp.sections():
        if name in SCHEMA:
            continue
        if name.startswith("obstacle."):
            continue
        raise InvalidConfig(f"unknown block [{name}]", block=name)


def load_config(path, overrides=None):
    """Parse, validate and build an ExperimentConfig.

    overrides maps dotted keys ("tau.min", "pipeline.mode",
    "output.dir") to raw string values, applied before validation; the
    CLI feeds its flag values through here so a flag and a config line
    are interchangeable.
    """
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str  # keys are case-sensitive ("T" stays "T")
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except OSError as e:
        raise InvalidConfig(f"cannot read config: {e}", path=str(path))
    except configparser.Error as e:
        raise InvalidConfig(f"malformed config: {e}", path=str(path))

    for dotted, raw in (overrides or {}).items():
        block, key = dotted.split(".", 1)
        if block not in cp:
            cp.add_section(block)
        cp[block][key] = str(raw)

    _known_sections(cp)

    obstacle = _build_obstacle(cp)

    src = _read_block(cp, "source", SCHEMA["source"], required_block=True)
    _require_positive("source", src,
                      ("eta", "T", "eps", "mu", "omega", "cutoff",
                       "amplitude"))
    if not 0.0 <= src["blend"] < 1.0:
        raise InvalidConfig("[source] blend must lie in [0, 1)",
                            block="source", key="blend")
    pulse = Pulse(variant="ramped-sine", omega=src["omega"],
                  cutoff=src["cutoff"], blend=src["blend"],
                  amplitude=src["amplitude"])
    spec = SourceSpec(p=tuple(src["p"]), eta=src["eta"],
                      a=tuple(src["a"]), pulse=pulse, T=src["T"],
                      eps=src["eps"], mu=src["mu"])
    validate_source(spec, obstacle)

    gr = _read_block(cp, "grid", SCHEMA["grid"])
    grid, grid_strict = None, True
    if gr is not None:
        _require_positive("grid", gr, ("h", "cfl"))
        if (gr.get("lo") is None) != (gr.get("hi") is None):
            raise InvalidConfig("grid lo and hi come as a pair",
                                block="grid")
        if gr.get("lo") is None:
            lo, hi = causal_extent(spec, obstacle)
        else:
            lo, hi = gr["lo"], gr["hi"]
        try:
            grid = GridSpec(extent=(lo, hi), h=gr["h"], cfl=gr["cfl"],
                            boundary=gr["boundary"])
        except ValueError as e:
            raise InvalidConfig(f"[grid]: {e}", block="grid") from None
        grid_strict = gr["strict"]

    ta = _read_block(cp, "tau", SCHEMA["tau"]) or \
        {k: d for k, (_, d) in SCHEMA["tau"].items()}
    _require_positive("tau", ta, ("min", "max"))
    if not ta["min"] < ta["max"]:
        raise InvalidConfig("[tau] needs min < max", block="tau")
    if ta["count"] < 2:
        raise InvalidConfig("[tau] count must be at least 2",
                            block="tau", key="count")
    if ta["spacing"] not in ("log", "linear"):
        raise InvalidConfig("[tau] spacing must be log or linear",
                            block="tau", key="spacing")
    tau = TauBlock(lo=ta["min"], hi=ta["max"], count=ta["count"],
                   spacing=ta["spacing"])

    pl = _read_block(cp, "pipeline", SCHEMA["pipeline"]) or \
        {"mode": "semianalytic"}
    if pl["mode"] not in PIPELINES:
        raise InvalidConfig(
            f"pipeline mode must be one of {PIPELINES}",
            block="pipeline", key="mode")
    if pl["mode"] in ("fdtd", "both") and grid is None:
        raise InvalidConfig("fdtd pipeline needs a [grid] block",
                            block="grid")

    out = _read_block(cp, "output", SCHEMA["output"]) or {"dir": "out"}

    rec = _read_block(cp, "recovery", SCHEMA["recovery"])
    recovery = None
    if rec is not None:
        _require_positive("recovery", rec, ("s1", "s2"))
        if not rec["s1"] < rec["s2"]:
            raise InvalidConfig("[recovery] needs s1 < s2",
                                block="recovery")
        recovery = (rec["s1"], rec["s2"])

    rc = _read_block(cp, "reflectcheck", SCHEMA["reflectcheck"])
    if rc is not None:
        _require_positive("reflectcheck", rc,
                          ("samples", "h_fd", "tau"))

    pr = _read_block(cp, "probe", SCHEMA["probe"]) or \
        {k: d for k, (_, d) in SCHEMA["probe"].items()}
    if not 0.0 < pr["s"] < 1.0:
        raise InvalidConfig("[probe] s must lie in (0, 1)",
                            block="probe", key="s")
    if pr["level"] not in (0, 1, 2, 3):
        raise InvalidConfig("[probe] level must be 0..3",
                            block="probe", key="level")

    return ExperimentConfig(obstacle=obstacle, spec=spec, grid=grid,
                            grid_strict=grid_strict, tau=tau,
                            pipeline=pl["mode"], out_dir=out["dir"],
                            recovery=recovery, reflectcheck=rc,
                            probe=pr)
