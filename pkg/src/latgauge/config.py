"""Run configuration: YAML files checked against a versioned JSON schema.

A configuration names the group, the geometry, the boundary condition, one
or more inverse couplings and the observables. :func:`resolve` fills every
default so that the resolved dictionary, stored in the run manifest,
validates again and rebuilds exactly the same run.
"""
from __future__ import annotations

import copy
import hashlib
import json

import jsonschema
import numpy as np
import yaml

from .groups import GroupSpec, parse_rep
from .lattice import Geometry, plaquette_loop, rect_loop, vertical_chain
from .model import BoundaryCondition, SamplerParams, center_twisted

SCHEMA_VERSION = "latgauge/1"


class ConfigError(ValueError):
    """Configuration does not match the schema; ``path`` locates the offending key."""

    def __init__(self, message: str, path: str = ""):
        super().__init__(f"{path or '<root>'}: {message}")
        self.path = path


_int = {"type": "integer"}
_nonneg = {"type": "integer", "minimum": 0}
_pos = {"type": "integer", "minimum": 1}
_num = {"type": "number"}
_ivec = {"type": "array", "items": _int, "minItems": 2}
_edge = {
    "type": "object",
    "properties": {"base": _ivec, "axis": _nonneg},
    "required": ["base", "axis"],
    "additionalProperties": False,
}
_boundary = {
    "type": "object",
    "properties": {
        "type": {"enum": ["free", "fixed", "random"]},
        "on": {"enum": ["all", "temporal", "spatial"]},
        "seed": _nonneg,
        "twist": {
            "type": ["object", "null"],
            "properties": {"element": {}, "faces": {"enum": ["all", "upper"]}},
            "required": ["element"],
            "additionalProperties": False,
        },
    },
    "additionalProperties": False,
}
_observable = {
    "type": "object",
    "properties": {
        "name": {"type": "string"},
        "type": {"enum": ["wilson", "plaquette", "chain", "link"]},
        "R": _pos,
        "T": _pos,
        "plane": {"type": "array", "items": _nonneg, "minItems": 2, "maxItems": 2},
        "anchor": {"type": ["array", "null"], "items": _int},
        "rep": {"type": "string"},
        "index": {"type": ["integer", "null"], "minimum": 0},
        "spatial": {"type": ["array", "null"], "items": _int},
        "indices": {"type": "array", "items": {"type": "array", "items": _nonneg, "minItems": 2, "maxItems": 2}},
        "edge": _edge,
    },
    "required": ["type"],
    "additionalProperties": False,
}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "properties": {
        "schema": {"const": SCHEMA_VERSION},
        "seed": _nonneg,
        "group": {"type": "string", "pattern": r"^(Z[1-9][0-9]*|U1|SU2)$"},
        "beta": {"type": "array", "items": _num, "minItems": 1},
        "mode": {"enum": ["mc", "exact"]},
        "cap_states": _pos,
        "threads": _pos,
        "geometry": {
            "type": "object",
            "properties": {
                "kind": {"enum": ["box", "cube", "slab"]},
                "lo": _ivec, "hi": _ivec,
                "d": {"type": "integer", "minimum": 2},
                "N": _pos, "M": _pos,
                "centered": {"type": "boolean"},
            },
            "required": ["kind"],
            "additionalProperties": False,
        },
        "boundary": _boundary,
        "sampler": {
            "type": "object",
            "properties": {
                "sweeps": _pos, "therm": _nonneg, "stride": _pos,
                "algorithm": {"enum": ["auto", "heatbath", "metropolis"]},
                "proposal_width": {"type": "number", "exclusiveMinimum": 0},
                "init": {"enum": ["identity", "random"]},
                "chains": _pos,
                "batches": {"type": "integer", "minimum": 2},
            },
            "additionalProperties": False,
        },
        "observables": {"type": "array", "items": _observable},
        "wilson": {
            "type": "object",
            "properties": {
                "loops": {"type": "array", "items": {"type": "array", "items": _pos, "minItems": 2, "maxItems": 2}},
                "rep": {"type": "string"},
                "plane": {"type": "array", "items": _nonneg, "minItems": 2, "maxItems": 2},
                "table": {"type": ["array", "null"], "items": {
                    "type": "array", "items": _num, "minItems": 4, "maxItems": 4}},
            },
            "additionalProperties": False,
        },
        "center_test": {
            "type": "object",
            "properties": {
                "rep": {"type": "string"},
                "spatial": {"type": ["array", "null"], "items": _int},
                "indices": {"type": ["array", "null"], "items": {"type": "array", "items": {
                    "type": "array", "items": _nonneg, "minItems": 2, "maxItems": 2}}},
                "ensembles": {"type": "array", "items": _boundary, "minItems": 1},
            },
            "additionalProperties": False,
        },
        "couple": {
            "type": "object",
            "properties": {
                "r": {"type": "number", "exclusiveMinimum": 0},
                "twist": {},
                "n_max": _pos,
                "tol": {"type": "number", "exclusiveMinimum": 0},
                "min_iter": _nonneg,
            },
            "additionalProperties": False,
        },
        "corr": {
            "type": "object",
            "properties": {
                "kind": {"enum": ["plaquette", "link"]},
                "f": _edge,
                "g": {"type": ["array", "null"], "items": _edge},
                "batches": {"type": "integer", "minimum": 2},
            },
            "additionalProperties": False,
        },
    },
    "required": ["schema", "group", "geometry"],
    "additionalProperties": False,
}

DEFAULTS = {
    "seed": 0,
    "beta": [1.0],
    "mode": "mc",
    "cap_states": 1 << 24,
    "threads": 1,
    "boundary": {"type": "free", "on": "all", "seed": 0, "twist": None},
    "sampler": {"sweeps": 1000, "therm": 100, "stride": 1, "algorithm": "auto",
                "proposal_width": 0.5, "init": "identity", "chains": 1, "batches": 50},
    "observables": [],
}


def _path(err) -> str:
    return "/" + "/".join(str(p) for p in err.absolute_path)


def validate(cfg: dict) -> None:
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        raise ConfigError(e.message, _path(e))


def resolve(cfg: dict) -> dict:
    """Validate ``cfg`` and return a copy with every default filled in."""
    if not isinstance(cfg, dict):
        raise ConfigError("configuration must be a mapping")
    out = copy.deepcopy(cfg)
    if isinstance(out.get("beta"), (int, float)):
        out["beta"] = [out["beta"]]
    validate(out)
    for k, v in DEFAULTS.items():
        if isinstance(v, dict):
            out[k] = {**v, **out.get(k, {})}
        else:
            out.setdefault(k, copy.deepcopy(v))
    out["beta"] = [float(b) for b in out["beta"]]
    geo = out["geometry"]
    kind = geo["kind"]
    need = {"box": ("lo", "hi"), "cube": ("d", "N"), "slab": ("d", "M", "N")}[kind]
    for key in need:
        if key not in geo:
            raise ConfigError(f"'{key}' is required for a {kind} geometry", f"/geometry/{key}")
    if kind == "slab":
        geo.setdefault("centered", True)
    group = GroupSpec.parse(out["group"])
    for i, ob in enumerate(out["observables"]):
        ob.setdefault("rep", "fund")
        ob.setdefault("name", f"{ob['type']}{i}")
        try:
            parse_rep(group, ob["rep"])
        except ValueError as exc:
            raise ConfigError(str(exc), f"/observables/{i}/rep") from None
    validate(out)
    return out


def load(path) -> dict:
    """Read and resolve a YAML configuration file."""
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise ConfigError(f"YAML parse error: {exc}") from None
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    return resolve(raw)


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


# ---------------------------------------------------------------- builders
def build_group(cfg: dict) -> GroupSpec:
    return GroupSpec.parse(cfg["group"])


def build_geometry(cfg: dict) -> Geometry:
    geo = cfg["geometry"]
    try:
        if geo["kind"] == "box":
            return Geometry.box(tuple(geo["lo"]), tuple(geo["hi"]))
        if geo["kind"] == "cube":
            return Geometry.cube(geo["d"], geo["N"])
        return Geometry.slab(geo["d"], geo["M"], geo["N"], centered=geo.get("centered", True))
    except ValueError as exc:
        raise ConfigError(str(exc), "/geometry") from None


def build_edge(geom: Geometry, spec: dict, where: str) -> int:
    try:
        return geom.edge_id(spec["base"], spec["axis"])
    except (ValueError, IndexError, KeyError):
        raise ConfigError(f"no edge with base {spec['base']} along axis {spec['axis']}", where) from None


def _element(group: GroupSpec, raw):
    if group.kind == "su2":
        return np.asarray(raw, dtype=float)
    if group.kind == "circle":
        return float(raw)
    return int(raw)


def build_boundary(geom: Geometry, group: GroupSpec, spec: dict, where: str = "/boundary") -> BoundaryCondition:
    spec = {**DEFAULTS["boundary"], **spec}
    if spec["type"] == "free":
        bc = BoundaryCondition.free(geom, group)
    elif spec["type"] == "fixed":
        bc = BoundaryCondition.fixed_to(geom, group, on=spec["on"])
    else:
        bc = BoundaryCondition.random(geom, group, spec["seed"], on=spec["on"])
    if spec.get("twist"):
        tw = spec["twist"]
        try:
            bc = center_twisted(bc, _element(group, tw["element"]), tw.get("faces", "all"))
        except ValueError as exc:
            raise ConfigError(str(exc), where + "/twist") from None
    return bc


def build_sampler(cfg: dict, beta: float, chain: int = 0) -> SamplerParams:
    s = cfg["sampler"]
    return SamplerParams(beta=beta, sweeps=s["sweeps"], therm=s["therm"], stride=s["stride"],
                         seed=cfg["seed"], chain=chain, algorithm=s["algorithm"],
                         proposal_width=s["proposal_width"], init=s["init"])


def build_observable(geom: Geometry, group: GroupSpec, ob: dict, where: str):
    """Return a batched function ``values (B, E) -> (B,)`` for one observable entry."""
    from .model import plaquette_traces
    from .observables import ChainVariableSpec, chain_variable_values, wilson_loop_values

    rep = parse_rep(group, ob.get("rep", "fund"))
    kind = ob["type"]
    try:
        if kind == "wilson":
            loop = rect_loop(geom, ob.get("R", 1), ob.get("T", 1), plane=tuple(ob.get("plane", (0, 1))),
                             anchor=ob.get("anchor"))
            return lambda v: wilson_loop_values(group, v, loop, rep)
        if kind == "plaquette":
            if ob.get("index") is None:
                m = group.matrix_dim
                return lambda v: plaquette_traces(group, geom, v).mean(axis=-1) / m
            loop = plaquette_loop(geom, ob["index"])
            return lambda v: wilson_loop_values(group, v, loop, rep)
        if kind == "chain":
            edges = vertical_chain(geom, ob.get("spatial"))
            idx = ob.get("indices") or [[0, 0]] * len(edges)
            spec = ChainVariableSpec(tuple(edges), tuple(tuple(p) for p in idx))
            spec.validate(rep)
            return lambda v: chain_variable_values(group, v, spec, rep)
        e = build_edge(geom, ob["edge"], where + "/edge")
        if group.kind == "su2":
            return lambda v: rep.character(np.asarray(v)[..., e, :])
        return lambda v: rep.character(np.asarray(v)[..., e])
    except ConfigError:
        raise
    except (ValueError, IndexError, KeyError) as exc:
        raise ConfigError(str(exc), where) from None
