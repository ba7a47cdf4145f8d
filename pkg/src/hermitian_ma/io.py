"""Field files, configuration documents and report documents.

Field file: one UTF-8 JSON header line followed by the raw little-endian
float64 payload (m^{2n} values, row-major over (x_1, y_1, ..., x_n, y_n)).
"""

import copy
import csv
import json
import math
from pathlib import Path

import jsonschema
import numpy as np

from .functions import FUNCTION_NAMES, box_bump, make_function
from .geom import CHI_NAMES, METRIC_NAMES, make_builtin_metric, make_chi
from .grid import GridSpec, ScalarField
from .solver import ProblemSpec, SolveOptions, mms_generate

__all__ = [
    "FORMAT_VERSION",
    "FieldFormatError",
    "MalformedHeaderError",
    "UnsupportedVersionError",
    "PayloadSizeError",
    "ConfigError",
    "write_field",
    "read_field",
    "CONFIG_SCHEMA",
    "load_config",
    "validate_config",
    "apply_overrides",
    "build_problem",
    "solve_options",
    "write_report",
    "write_csv",
]

FORMAT_VERSION = 1
_HEADER_LIMIT = 1 << 16


class FieldFormatError(ValueError):
    pass


class MalformedHeaderError(FieldFormatError):
    pass


class UnsupportedVersionError(FieldFormatError):
    pass


class PayloadSizeError(FieldFormatError):
    pass


class ConfigError(ValueError):
    """Configuration rejected; ``errors`` lists every violation found."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.errors))


def write_field(field, path):
    spec = field.spec
    header = {
        "format_version": FORMAT_VERSION,
        "n": spec.n,
        "m": spec.m,
        "lo": list(spec.lo),
        "hi": list(spec.hi),
        "field_name": field.name,
        "dtype": "f64le",
        "layout": "row-major",
    }
    payload = np.ascontiguousarray(field.values, dtype="<f8").tobytes(order="C")
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode("utf-8") + b"\n")
        fh.write(payload)


def read_field(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    end = raw.find(b"\n", 0, _HEADER_LIMIT)
    if end < 0:
        raise MalformedHeaderError(f"{path}: no header line terminator found")
    try:
        header = json.loads(raw[:end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedHeaderError(f"{path}: header is not valid JSON ({exc})") from None
    if not isinstance(header, dict):
        raise MalformedHeaderError(f"{path}: header must be a JSON object")
    missing = [k for k in ("format_version", "n", "m", "lo", "hi", "field_name", "dtype", "layout")
               if k not in header]
    if missing:
        raise MalformedHeaderError(f"{path}: header lacks {', '.join(missing)}")
    if header["format_version"] != FORMAT_VERSION:
        raise UnsupportedVersionError(f"{path}: format_version {header['format_version']!r} is not supported")
    if header["dtype"] != "f64le" or header["layout"] != "row-major":
        raise UnsupportedVersionError(
            f"{path}: dtype {header['dtype']!r} / layout {header['layout']!r} not supported (need f64le, row-major)")
    try:
        spec = GridSpec(int(header["n"]), tuple(header["lo"]), tuple(header["hi"]), int(header["m"]))
    except (TypeError, ValueError) as exc:
        raise MalformedHeaderError(f"{path}: invalid grid in header ({exc})") from None
    payload = raw[end + 1:]
    expected = 8 * spec.size
    if len(payload) != expected:
        kind = "truncated" if len(payload) < expected else "oversized"
        raise PayloadSizeError(f"{path}: {kind} payload, {len(payload)} bytes instead of {expected}")
    values = np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(spec.shape)
    return ScalarField(spec, values, str(header["field_name"]))


_NUM = {"type": "number"}
_PARAMS = {"type": "array", "items": _NUM}
_NAMED = {
    "type": "object",
    "properties": {"name": {"type": "string"}, "params": _PARAMS},
    "required": ["name"],
    "additionalProperties": False,
}
_VEC = {"oneOf": [_NUM, {"type": "array", "items": _NUM, "minItems": 4, "maxItems": 6}]}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "properties": {
        "problem": {
            "type": "object",
            "properties": {
                "n": {"type": "integer", "enum": [2, 3]},
                "box": {
                    "type": "object",
                    "properties": {"lo": _VEC, "hi": _VEC},
                    "required": ["lo", "hi"],
                    "additionalProperties": False,
                },
                "m": {"type": "integer", "minimum": 5},
                "metric": _NAMED,
                "chi": _NAMED,
                "psi": {
                    "type": "object",
                    "properties": {
                        "kind": {"enum": ["constant", "file", "mms"]},
                        "value": _NUM,
                        "path": {"type": "string"},
                        "u_star": _NAMED,
                    },
                    "required": ["kind"],
                    "additionalProperties": False,
                },
                "phi": {
                    "type": "object",
                    "properties": {"kind": {"enum": ["subsolution", "mms"]}},
                    "required": ["kind"],
                    "additionalProperties": False,
                },
                "subsolution": {
                    "type": "object",
                    "properties": {
                        "kind": {"enum": ["mms", "analytic", "file"]},
                        "name": {"type": "string"},
                        "params": _PARAMS,
                        "bump": {"type": "number", "minimum": 0},
                        "path": {"type": "string"},
                    },
                    "required": ["kind"],
                    "additionalProperties": False,
                },
            },
            "required": ["n", "box", "m", "metric", "chi", "psi"],
            "additionalProperties": False,
        },
        "solver": {
            "type": "object",
            "properties": {
                "tol_residual": {"type": "number", "exclusiveMinimum": 0},
                "max_newton": {"type": "integer", "minimum": 1},
                "damping": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "min_step": {"type": "number", "exclusiveMinimum": 0},
                "continuation_steps": {"type": "integer", "minimum": 1},
                "max_continuation_steps": {"type": "integer", "minimum": 1},
            },
            "additionalProperties": False,
        },
        "verify": {
            "type": "object",
            "properties": {
                "theta": {"type": "number", "minimum": 0},
                "N": {"type": "number", "minimum": 0},
                "barrier": {
                    "type": "object",
                    "properties": {
                        "t": {"type": "number", "minimum": 0},
                        "T": {"type": "number", "minimum": 0},
                        "delta": {"type": "number", "exclusiveMinimum": 0},
                    },
                    "required": ["t", "T", "delta"],
                    "additionalProperties": False,
                },
            },
            "additionalProperties": False,
        },
        "mms": {
            "type": "object",
            "properties": {
                "refinements": {"type": "array", "items": {"type": "integer", "minimum": 5}, "minItems": 1},
                "min_order": {"type": "number"},
            },
            "additionalProperties": False,
        },
        "lemma": {
            "type": "object",
            "properties": {
                "n": {"type": "integer", "enum": [2, 3, 4]},
                "epsilon": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "sup_psi": {"type": "number", "exclusiveMinimum": 0},
                "samples": {"type": "integer", "minimum": 1},
                "pilot_size": {"type": "integer", "minimum": 1},
                "theta": {"type": "number"},
                "N": {"type": "number", "minimum": 0},
            },
            "additionalProperties": False,
        },
        "output_dir": {"type": "string"},
    },
    "additionalProperties": False,
}


def _semantic_errors(doc):
    errors = []
    prob = doc.get("problem")
    if not isinstance(prob, dict):
        return errors
    n = prob.get("n", 2)
    m = prob.get("m")
    if isinstance(m, int) and m % 2 == 0:
        errors.append(f"problem.m: points per axis must be odd, got {m}")
    box = prob.get("box", {})
    for key in ("lo", "hi"):
        v = box.get(key)
        if isinstance(v, list) and len(v) != 2 * n:
            errors.append(f"problem.box.{key}: expected {2 * n} values for n = {n}, got {len(v)}")
    if "lo" in box and "hi" in box:
        try:
            lo = np.broadcast_to(box["lo"], (2 * n,))
            hi = np.broadcast_to(box["hi"], (2 * n,))
            if not np.all(hi > lo):
                errors.append("problem.box: hi must exceed lo componentwise")
        except ValueError:
            pass
    metric = prob.get("metric")
    if isinstance(metric, dict) and isinstance(metric.get("name"), str):
        if metric["name"] not in METRIC_NAMES:
            errors.append(f"problem.metric.name: unknown metric {metric['name']!r}; "
                          f"supported: {', '.join(METRIC_NAMES)}")
        elif n in (2, 3):
            try:
                make_builtin_metric(metric["name"], metric.get("params", []), n)
            except ValueError as exc:
                errors.append(f"problem.metric: {exc}")
    chi = prob.get("chi")
    if isinstance(chi, dict) and isinstance(chi.get("name"), str):
        if chi["name"] not in CHI_NAMES:
            errors.append(f"problem.chi.name: unknown chi {chi['name']!r}; supported: {', '.join(CHI_NAMES)}")
        else:
            try:
                make_chi(chi["name"], chi.get("params", []), n=n)
            except ValueError as exc:
                errors.append(f"problem.chi: {exc}")
    psi = prob.get("psi")
    if isinstance(psi, dict):
        kind = psi.get("kind")
        if kind == "constant":
            if "value" not in psi:
                errors.append("problem.psi: constant kind needs 'value'")
            elif isinstance(psi["value"], (int, float)) and not psi["value"] > 0:
                errors.append(f"problem.psi.value = {psi['value']}: degenerate ψ not supported "
                              "(ellipticity of the equation requires ψ > 0)")
        elif kind == "file" and "path" not in psi:
            errors.append("problem.psi: file kind needs 'path'")
        elif kind == "mms":
            u_star = psi.get("u_star")
            if u_star is None:
                errors.append("problem.psi: mms kind needs 'u_star'")
            elif isinstance(u_star.get("name"), str) and u_star["name"] not in FUNCTION_NAMES:
                errors.append(f"problem.psi.u_star.name: unknown function {u_star['name']!r}; "
                              f"supported: {', '.join(FUNCTION_NAMES)}")
    sub = prob.get("subsolution", {"kind": "mms"})
    if isinstance(sub, dict):
        kind = sub.get("kind")
        psi_kind = psi.get("kind") if isinstance(psi, dict) else None
        if kind == "mms" and psi_kind != "mms":
            errors.append("problem.subsolution: mms kind requires psi.kind = 'mms'")
        if kind == "analytic":
            if "name" not in sub:
                errors.append("problem.subsolution: analytic kind needs 'name'")
            elif sub["name"] not in FUNCTION_NAMES:
                errors.append(f"problem.subsolution.name: unknown function {sub['name']!r}; "
                              f"supported: {', '.join(FUNCTION_NAMES)}")
        if kind == "file" and "path" not in sub:
            errors.append("problem.subsolution: file kind needs 'path'")
    phi = prob.get("phi", {})
    if isinstance(phi, dict) and phi.get("kind") == "mms" and isinstance(psi, dict) and psi.get("kind") != "mms":
        errors.append("problem.phi: mms kind requires psi.kind = 'mms'")
    return errors


def validate_config(doc):
    """Return the list of all schema and semantic violations (empty when valid)."""
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errors = []
    for err in sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path)):
        where = ".".join(str(p) for p in err.absolute_path) or "<root>"
        errors.append(f"{where}: {err.message}")
    if not errors:
        errors.extend(_semantic_errors(doc))
    return errors


def _parse_override(text):
    if "=" not in text:
        raise ConfigError([f"override {text!r} must have the form key=value"])
    key, value = text.split("=", 1)
    try:
        parsed = json.loads(value)
    except json.JSONDecodeError:
        parsed = value
    return key.strip().split("."), parsed


def apply_overrides(doc, overrides):
    """Set dotted-path keys (``problem.m=13``); values are parsed as JSON when possible."""
    doc = copy.deepcopy(doc)
    for text in overrides or ():
        path, value = _parse_override(text)
        node = doc
        for key in path[:-1]:
            if not isinstance(node.setdefault(key, {}), dict):
                raise ConfigError([f"override {text!r}: {key!r} is not an object"])
            node = node[key]
        node[path[-1]] = value
    return doc


def load_config(path, overrides=()):
    """Read, override and validate a configuration; raises ConfigError listing every problem."""
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"{path}: JSON syntax error at line {exc.lineno}, column {exc.colno}: {exc.msg}"]) from None
    doc = apply_overrides(doc, overrides)
    errors = validate_config(doc)
    if errors:
        raise ConfigError(errors)
    return doc


def solve_options(doc):
    return SolveOptions(**doc.get("solver", {}))


def build_problem(doc, m=None, base_dir="."):
    """ProblemSpec from a validated configuration; ``m`` overrides the resolution."""
    prob = doc["problem"]
    n = prob["n"]
    grid = GridSpec(n, tuple(np.broadcast_to(prob["box"]["lo"], (2 * n,))),
                    tuple(np.broadcast_to(prob["box"]["hi"], (2 * n,))), prob["m"] if m is None else m)
    metric = make_builtin_metric(prob["metric"]["name"], prob["metric"].get("params", []), n)
    chi = make_chi(prob["chi"]["name"], prob["chi"].get("params", []), metric)
    psi_cfg = prob["psi"]
    sub_cfg = prob.get("subsolution", {"kind": "mms"})
    phi_kind = prob.get("phi", {"kind": "subsolution"})["kind"]
    base = Path(base_dir)

    if psi_cfg["kind"] == "mms":
        u_star = make_function(psi_cfg["u_star"]["name"], psi_cfg["u_star"].get("params", []), n)
        bump = sub_cfg.get("bump", 0.0) if sub_cfg["kind"] == "mms" else 0.0
        problem = mms_generate(metric, chi, u_star, grid, bump=bump, name="mms")
        if sub_cfg["kind"] == "mms":
            return problem
        usub = _subsolution_field(sub_cfg, grid, base)
        phi = problem.phi if phi_kind == "mms" else usub
        return ProblemSpec(grid, metric, chi, problem.psi, phi, usub, exact=u_star, name="mms")

    if psi_cfg["kind"] == "constant":
        psi = ScalarField(grid, np.full(grid.shape, float(psi_cfg["value"])), "psi")
    else:
        psi = _read_on_grid(base / psi_cfg["path"], grid, "psi")
    usub = _subsolution_field(sub_cfg, grid, base)
    return ProblemSpec(grid, metric, chi, psi, usub, usub, name="dirichlet")


def _read_on_grid(path, grid, what):
    field = read_field(path)
    if field.spec != grid:
        raise ConfigError([f"{what} field {path} has grid {field.spec}, expected {grid}"])
    return field


def _subsolution_field(cfg, grid, base):
    if cfg["kind"] == "file":
        return _read_on_grid(base / cfg["path"], grid, "subsolution")
    fn = make_function(cfg["name"], cfg.get("params", []), grid.n)
    pts = grid.points()
    values = fn.value(pts) - cfg.get("bump", 0.0) * box_bump(pts, grid.lo, grid.hi)
    return ScalarField(grid, values, "usub")


def _finite(obj):
    if isinstance(obj, dict):
        return {str(k): _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _finite(obj.tolist())
    return obj


def write_report(doc, path):
    """Write a report document; non-finite numbers become null so the file stays valid JSON."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_finite(doc), fh, indent=2, allow_nan=False)
        fh.write("\n")
    return path


def write_csv(rows, header, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    return path
