"""JSON configuration documents: schema, loading, building and serialization.

A document describes one sequence either by explicit levels or by a builder
block.  Explicit levels shorter than ``depth`` repeat cyclically.  Face-keyed
maps use keys such as ``"1,2"`` (1-based coordinates).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import jsonschema
import numpy as np

from .margins import MarginSpec
from .nesting import SCHEMES, NestSequence, SequenceError
from .tail_shaper import (
    Built,
    TailSpec,
    build_degree_one,
    build_eventually_constant,
    build_increasing,
    build_pareto,
    build_subsequence_targets,
    degree_one_spec,
    face_vertex,
    parse_face,
    validate_nc_k,
)
from .vertex_algebra import DEFAULT_MAX_DIM, VertexCopula, check_order

METHODS = ("increasing", "subsequence", "eventually_constant", "degree_one", "pareto")

_num = {"type": "number"}
_numlist = {"type": "array", "items": _num, "minItems": 1}
_facemap = {
    "type": "object",
    "patternProperties": {r"^\s*\d+(\s*,\s*\d+)*\s*$": _num},
    "additionalProperties": False,
}

SCHEMA: dict[str, Any] = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "properties": {
        "dimension": {"type": "integer", "minimum": 1, "maximum": DEFAULT_MAX_DIM},
        "order": {"type": "integer", "minimum": 0},
        "scheme": {"enum": list(SCHEMES)},
        "depth": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "levels": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "properties": {"u": _numlist, "x": _numlist},
                "required": ["u", "x"],
                "additionalProperties": False,
            },
        },
        "builder": {
            "type": "object",
            "properties": {
                "method": {"enum": list(METHODS)},
                "a": _facemap,
                "b": _facemap,
                "t": _num,
                "t1": _num,
                "s": _numlist,
                "a_seq": {"type": "array", "items": _facemap, "minItems": 1},
                "alpha": _numlist,
                "delta": {"type": "array", "items": _numlist},
            },
            "required": ["method"],
            "additionalProperties": False,
        },
        "margins": {
            "type": "array",
            "items": {
                "type": "object",
                "properties": {
                    "kind": {"enum": ["uniform", "pareto", "scipy"]},
                    "alpha": _num,
                    "name": {"type": "string"},
                    "params": {"type": "object"},
                },
                "required": ["kind"],
                "additionalProperties": False,
            },
        },
    },
    "required": ["dimension", "order"],
    "oneOf": [{"required": ["levels"]}, {"required": ["builder"]}],
    "additionalProperties": False,
}


class ConfigError(ValueError):
    """Document could not be parsed or does not match the schema."""


@dataclass
class ConfigDocument:
    r: int
    k: int
    raw: dict[str, Any]
    scheme: str = "tail"
    depth: int | None = None
    seed: int = 0
    margins: MarginSpec | None = None

    @property
    def method(self) -> str | None:
        b = self.raw.get("builder")
        return None if b is None else b["method"]


@dataclass
class Loaded:
    doc: ConfigDocument
    seq: NestSequence
    built: Built | None = None
    notes: list[str] = field(default_factory=list)


def parse(data: dict[str, Any]) -> ConfigDocument:
    try:
        jsonschema.validate(data, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(map(str, exc.absolute_path)) or "<root>"
        raise ConfigError(f"{where}: {exc.message}") from None
    r, k = data["dimension"], data["order"]
    if k > r:
        raise ConfigError(f"order {k} exceeds dimension {r}")
    margins = None
    if "margins" in data:
        try:
            margins = MarginSpec.from_config(data["margins"])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"margins: {exc}") from None
        if margins.r != r:
            raise ConfigError(f"margins: {margins.r} entries for dimension {r}")
    return ConfigDocument(r, k, data, data.get("scheme", "tail"), data.get("depth"), data.get("seed", 0), margins)


def read(path: str | Path) -> ConfigDocument:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return parse(data)


def _faces(m: dict[str, float] | None) -> dict:
    return {parse_face(key): val for key, val in (m or {}).items()}


def _explicit_levels(doc: ConfigDocument) -> list[tuple[np.ndarray, np.ndarray]]:
    r = doc.r
    out = []
    for i, lv in enumerate(doc.raw["levels"], 1):
        u, x = np.array(lv["u"], dtype=float), np.array(lv["x"], dtype=float)
        if u.size != r or x.size != 1 << r:
            raise ConfigError(f"levels/{i}: need {r} split values and {1 << r} masses, got {u.size} and {x.size}")
        out.append((u, x))
    return out


def tail_spec(doc: ConfigDocument) -> TailSpec | None:
    """Target maps of a builder document, where the method has them."""
    b = doc.raw.get("builder")
    if b is None or b["method"] == "pareto":
        return None
    if b["method"] == "degree_one":
        return degree_one_spec(_faces(b.get("a")), doc.r)
    if b["method"] == "subsequence":
        return TailSpec.from_faces(doc.r, doc.k, _faces(b.get("b")))
    return TailSpec.from_faces(doc.r, doc.k, _faces(b.get("b")), _faces(b.get("a")))


def validation_report(doc: ConfigDocument) -> list[str]:
    """All violations, without raising; empty means valid."""
    out = []
    if "levels" in doc.raw:
        for n, (u, x) in enumerate(_explicit_levels(doc), 1):
            try:
                level = VertexCopula(u, x, doc.k)
            except ValueError as exc:
                out.append(f"level {n}: {exc}")
                continue
            out += [f"level {n}: {v}" for v in check_order(level.z, u, doc.k).violations]
        return out
    try:
        spec = tail_spec(doc)
    except ValueError as exc:
        return [str(exc)]
    if spec is not None:
        out += validate_nc_k(spec).messages()
    if not out:
        try:
            load(doc)
        except (ValueError, SequenceError) as exc:
            out.append(str(exc))
    return out


def _build(doc: ConfigDocument, b: dict[str, Any]) -> Built:
    r, depth = doc.r, doc.depth or 32
    method = b["method"]
    if method == "increasing":
        return build_increasing(tail_spec(doc), b.get("t", 0.5), depth)
    if method == "eventually_constant":
        return build_eventually_constant(tail_spec(doc), b["s"] if "s" in b else _need("s"))
    if method == "subsequence":
        if "a_seq" not in b or "s" not in b:
            _need("a_seq and s")
        spec = tail_spec(doc)
        a_seq = []
        for m in b["a_seq"]:
            a = np.ones(1 << r)
            for key, val in m.items():
                a[face_vertex(parse_face(key), r)] = float(val)
            a_seq.append(a)
        return build_subsequence_targets(spec, a_seq, b["s"])
    if method == "degree_one":
        return build_degree_one(_faces(b.get("a")), depth, r=r, t1=b.get("t1", 0.5))
    if "alpha" not in b or "t" not in b:
        _need("alpha and t")
    a = None
    if "a" in b:
        a = np.ones(1 << r)
        for key, val in b["a"].items():
            a[face_vertex(parse_face(key), r)] = float(val)
    delta = np.array(b["delta"], dtype=float) if "delta" in b else None
    return build_pareto(b["alpha"], _faces(b.get("b")), b["t"], depth, delta=delta, a=a)


def _need(what: str):
    raise ConfigError(f"builder: missing {what}")


def load(doc: ConfigDocument) -> Loaded:
    """Turn a document into a validated sequence."""
    if "levels" in doc.raw:
        pairs = _explicit_levels(doc)
        depth = doc.depth or len(pairs)
        levels = [VertexCopula(*pairs[i % len(pairs)], doc.k) for i in range(depth)]
        seq = NestSequence(levels, doc.k, doc.scheme, r=doc.r)
        return Loaded(doc, seq)
    built = _build(doc, doc.raw["builder"])
    seq = built.seq
    if doc.scheme != seq.scheme:
        seq = NestSequence(list(seq.levels), seq.k, doc.scheme, r=doc.r)
    if doc.margins is None and built.margins is not None:
        doc.margins = built.margins
    return Loaded(doc, seq, built, list(built.notes))


def serialize(seq: NestSequence, seed: int = 0, margins: MarginSpec | None = None) -> dict[str, Any]:
    """Explicit-levels document; floats survive a JSON round trip bit for bit."""
    data: dict[str, Any] = {
        "dimension": seq.r,
        "order": seq.k,
        "scheme": seq.scheme,
        "depth": seq.depth,
        "seed": seed,
        "levels": [{"u": [float(v) for v in lv.u], "x": [float(v) for v in lv.x]} for lv in seq.levels],
    }
    if margins is not None and not margins.is_identity():
        data["margins"] = margins.to_config()
    return data


def dumps(data: dict[str, Any]) -> str:
    return json.dumps(data, indent=1) + "\n"
