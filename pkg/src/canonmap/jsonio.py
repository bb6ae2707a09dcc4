"""JSON encoding of matrices, map specifications and classifier reports.

Complex numbers are ``[re, im]`` pairs and matrices are row-major nested
lists of them.  Floats are written with 17 significant digits so that a
dump/load cycle is lossless.  Output is byte-deterministic: keys keep
insertion order and no timing data is written unless asked for.
"""

from __future__ import annotations

import hashlib
import json
import math
from typing import Any

import numpy as np

from .classify import CheckResult, ClassifierReport, Constant, Measurement, Segment
from .maps import (
    ConstantSlot,
    MeasureSlot,
    MeasurementOp,
    SegmentSpec,
    StateMapOracle,
    bloch_partition,
    constant_map,
    local_map,
    measurement_map,
    segment_map,
    table_map,
)
from .multipart import FactorContraction, LocalConstant, LocalMeasurement, ProductPureState, SegmentPair
from .states import DensityMatrix, PureState

__all__ = [
    "SpecError",
    "dumps",
    "encode_matrix",
    "decode_matrix",
    "encode",
    "load_map_spec",
    "parse_map_spec",
    "load_state",
    "spec_digest",
    "report_to_json",
    "form_to_json",
    "MAP_KINDS",
]

MAP_KINDS = ("measurement", "local_measurement", "constant", "segment", "table")
PARTITION_RULES = {"bloch": bloch_partition}


class SpecError(ValueError):
    """Malformed map specification; ``path`` locates the offending key."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path or '<root>'}: {message}")
        self.path = path


# --- serialization ---------------------------------------------------------------


def _fmt_float(x: float) -> str:
    if not math.isfinite(x):
        raise ValueError(f"cannot encode non-finite float {x!r}")
    if x == 0.0:
        return "0.0"
    s = f"{x:.17g}"
    if "e" not in s and "." not in s:
        s += ".0"
    return s


def dumps(obj: Any, indent: int = 2) -> str:
    """JSON text with 17-significant-digit floats and a trailing newline."""
    return _dump(obj, 0, indent) + "\n"


def _dump(obj, level, indent) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if obj is None or isinstance(obj, (bool, np.bool_)):
        return json.dumps(None if obj is None else bool(obj))
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt_float(float(obj))
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_dump(v, level + 1, indent)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(isinstance(v, (int, float, bool, np.number)) or v is None for v in obj):
            return "[" + ", ".join(_dump(v, level + 1, indent) for v in obj) + "]"
        items = [pad + _dump(v, level + 1, indent) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot encode {type(obj).__name__}")


def encode_matrix(mat) -> list:
    arr = np.asarray(mat, dtype=complex)
    if arr.ndim == 1:
        return [[float(z.real), float(z.imag)] for z in arr]
    return [[[float(z.real), float(z.imag)] for z in row] for row in arr]


def encode(obj: Any) -> Any:
    """Turn library objects (arrays, states, forms, results) into JSON values."""
    if isinstance(obj, (DensityMatrix,)):
        return encode_matrix(obj.mat)
    if isinstance(obj, ProductPureState):
        return {"state": encode_matrix(obj.composite.mat), "factors": [encode_matrix(f.mat) for f in obj.factors]}
    if isinstance(obj, MeasurementOp):
        return {"m": encode_matrix(obj.m), "transpose": obj.conjugate_flag}
    if isinstance(obj, CheckResult):
        return check_to_json(obj)
    if isinstance(obj, np.ndarray):
        if np.iscomplexobj(obj):
            return encode_matrix(obj)
        return [encode(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, dict):
        return {str(k): encode(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [encode(v) for v in obj]
    return obj


def check_to_json(check: CheckResult) -> dict:
    out = {"name": check.name, "pass": bool(check.passed)}
    if check.witness is not None:
        out["witness"] = encode(check.witness)
    if check.detail:
        out["detail"] = encode(check.detail)
    return out


def form_to_json(form) -> dict | None:
    """Serialize a canonical form; factor indices become 1-based."""
    if form is None:
        return None
    if isinstance(form, Constant):
        return {"variant": "Constant", "q": encode_matrix(form.q.mat)}
    if isinstance(form, Segment):
        return {
            "variant": "Segment",
            "q1": encode_matrix(form.q1.mat),
            "q2": encode_matrix(form.q2.mat),
            "h_samples": [{"probe": lab, "h": h} for lab, h in form.h_samples],
        }
    if isinstance(form, Measurement):
        return {
            "variant": "Measurement",
            "m": encode_matrix(form.m),
            "transpose": bool(form.transpose_flag),
            "residual": form.residual,
        }
    if isinstance(form, LocalConstant):
        return {"variant": "Constant", "form_number": form.form_number, **encode(form.state)}
    if isinstance(form, SegmentPair):
        return {
            "variant": "SegmentPair",
            "form_number": form.form_number,
            "q1": encode(form.q1),
            "q2": encode(form.q2),
            "h_samples": [{"probe": lab, "h": h} for lab, h in form.h_samples],
        }
    if isinstance(form, FactorContraction):
        samples = {}
        for j, s in form.samples.items():
            samples[str(j + 1)] = {
                key: [{"probe": lab, "m": encode_matrix(m), "transpose": bool(t)} for lab, m, t in ops]
                for key, ops in s.items()
            }
        return {
            "variant": "FactorContraction",
            "form_number": form.form_number,
            "constant_slots": [{"slot": j + 1, "state": encode_matrix(q.mat)} for j, q in form.constants],
            "reads": [
                {"slot": j + 1, "source": p + 1, "m": encode_matrix(op.m), "transpose": op.conjugate_flag}
                for j, p, op in form.reads
            ],
            "non_product": [j + 1 for j in form.non_product],
            "samples": samples,
            "residual": form.residual,
        }
    if isinstance(form, LocalMeasurement):
        return {
            "variant": "LocalMeasurement",
            "form_number": form.form_number,
            "pi": [p + 1 for p in form.pi],
            "flags": list(form.flags),
            "ops": [encode_matrix(op.m) for op in form.ops],
            "residual": form.residual,
        }
    raise TypeError(f"unknown form {type(form).__name__}")


def spec_digest(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def report_to_json(
    report: ClassifierReport | None,
    digest: str,
    seeds,
    checks=None,
    timings_ms: dict | None = None,
    version: str = "",
) -> dict:
    """Report document.  ``verdict`` is present only for a definite verdict."""
    checks = report.checks if checks is None else checks
    doc = {"tool_version": version, "spec_digest": digest}
    if report is not None:
        doc["status"] = report.status
        if report.ok:
            doc["verdict"] = form_to_json(report.form)
        if report.message:
            doc["message"] = report.message
    doc["checks"] = [check_to_json(c) for c in checks]
    doc["seeds"] = [int(s) for s in seeds]
    doc["timings_ms"] = dict(timings_ms or {})
    return doc


# --- parsing -----------------------------------------------------------------------


def _complex(v, path) -> complex:
    if isinstance(v, bool):
        raise SpecError(path, "expected a number or [re, im] pair")
    if isinstance(v, (int, float)):
        return complex(v)
    if isinstance(v, list) and len(v) == 2 and all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in v):
        return complex(v[0], v[1])
    raise SpecError(path, "expected a number or [re, im] pair")


def decode_matrix(v, path: str = "") -> np.ndarray:
    """Parse a row-major nested list of ``[re, im]`` pairs."""
    if not isinstance(v, list) or not v:
        raise SpecError(path, "expected a non-empty list of rows")
    rows = []
    width = None
    for i, row in enumerate(v):
        if not isinstance(row, list) or not row:
            raise SpecError(f"{path}[{i}]", "expected a non-empty row")
        vals = [_complex(x, f"{path}[{i}][{j}]") for j, x in enumerate(row)]
        if width is None:
            width = len(vals)
        elif len(vals) != width:
            raise SpecError(f"{path}[{i}]", f"row has {len(vals)} entries, expected {width}")
        rows.append(vals)
    return np.array(rows, dtype=complex)


def _get(d, key, path, kind=None, required=True):
    if not isinstance(d, dict):
        raise SpecError(path, "expected an object")
    if key not in d:
        if required:
            raise SpecError(f"{path}.{key}" if path else key, "missing key")
        return None
    v = d[key]
    sub = f"{path}.{key}" if path else key
    if kind is not None and (not isinstance(v, kind) or isinstance(v, bool) and kind is not bool):
        raise SpecError(sub, f"expected {getattr(kind, '__name__', kind)}")
    return v


def _dims(d, key, path):
    v = _get(d, key, path, list)
    sub = f"{path}.{key}" if path else key
    if not v or not all(isinstance(x, int) and not isinstance(x, bool) and x >= 1 for x in v):
        raise SpecError(sub, "expected a non-empty array of positive integers")
    return tuple(v)


def _state(v, path, dims=None, pure=False):
    mat = decode_matrix(v, path)
    try:
        return PureState(mat, dims) if pure else DensityMatrix(mat, dims)
    except (ValueError, TypeError) as exc:
        raise SpecError(path, str(exc)) from exc


def parse_map_spec(doc: dict, path: str = "") -> StateMapOracle:
    """Build an oracle from a decoded map-spec object."""
    kind = _get(doc, "kind", path, str)
    if kind not in MAP_KINDS:
        raise SpecError(f"{path}.kind" if path else "kind", f"unknown kind {kind!r}; expected one of {MAP_KINDS}")
    dims_in = _dims(doc, "dims_in", path)
    dims_out = _dims(doc, "dims_out", path)
    p = f"{path}.parameters" if path else "parameters"
    params = _get(doc, "parameters", path, dict)
    try:
        psi = _BUILDERS[kind](params, p, dims_in, dims_out)
    except SpecError:
        raise
    except (ValueError, TypeError) as exc:
        raise SpecError(p, str(exc)) from exc
    if psi.in_dims != dims_in or psi.out_dims != dims_out:
        raise SpecError(
            path, f"dims {dims_in} -> {dims_out} do not match parameters ({psi.in_dims} -> {psi.out_dims})"
        )
    return psi


def _build_measurement(params, p, dims_in, dims_out):
    m = decode_matrix(_get(params, "m", p), f"{p}.m")
    flag = _get(params, "transpose", p, bool, required=False) or False
    if len(dims_in) != 1 or len(dims_out) != 1:
        raise SpecError(p, "measurement maps act on a single factor")
    return measurement_map(MeasurementOp(m, flag))


def _build_local(params, p, dims_in, dims_out):
    slots_doc = _get(params, "slots", p, list)
    slots = []
    for j, s in enumerate(slots_doc):
        sp = f"{p}.slots[{j}]"
        if isinstance(s, dict) and "constant" in s:
            slots.append(ConstantSlot(_state(s["constant"], f"{sp}.constant", pure=True)))
            continue
        src = _get(s, "source", sp, int)
        if not 1 <= src <= len(dims_in):
            raise SpecError(f"{sp}.source", f"source must be in 1..{len(dims_in)}")
        m = decode_matrix(_get(s, "m", sp), f"{sp}.m")
        flag = _get(s, "transpose", sp, bool, required=False) or False
        try:
            op = MeasurementOp(m, flag)
        except ValueError as exc:
            raise SpecError(f"{sp}.m", str(exc)) from exc
        slots.append(MeasureSlot(src - 1, op))
    return local_map(slots, dims_in)


def _build_constant(params, p, dims_in, dims_out):
    q = _state(_get(params, "state", p), f"{p}.state", dims_out, pure=True)
    return constant_map(q, dims_in, dims_out)


def _build_segment(params, p, dims_in, dims_out):
    q1 = _state(_get(params, "q1", p), f"{p}.q1", dims_out, pure=True)
    q2 = _state(_get(params, "q2", p), f"{p}.q2", dims_out, pure=True)
    rule = _get(params, "partition_rule", p, str, required=False) or "bloch"
    if rule not in PARTITION_RULES:
        raise SpecError(f"{p}.partition_rule", f"unknown rule {rule!r}")
    return segment_map(SegmentSpec(q1, q2, PARTITION_RULES[rule]), dims_in)


def _build_table(params, p, dims_in, dims_out):
    entries = []
    for i, e in enumerate(_get(params, "entries", p, list)):
        ep = f"{p}.entries[{i}]"
        inp = _state(_get(e, "input", ep), f"{ep}.input", dims_in)
        out = _state(_get(e, "output", ep), f"{ep}.output", dims_out)
        entries.append((inp.mat, out.mat))
    base_doc = _get(params, "base", p, dict, required=False)
    base = None if base_doc is None else parse_map_spec(base_doc, f"{p}.base")
    if base is not None and (base.in_dims != dims_in or base.out_dims != dims_out):
        raise SpecError(f"{p}.base", "base map dims differ from the table dims")
    default_doc = _get(params, "default_output", p, required=False)
    default = None if default_doc is None else _state(default_doc, f"{p}.default_output", dims_out).mat
    return table_map(entries, dims_in, dims_out, base=base, default_output=default)


_BUILDERS = {
    "measurement": _build_measurement,
    "local_measurement": _build_local,
    "constant": _build_constant,
    "segment": _build_segment,
    "table": _build_table,
}


def load_map_spec(data: bytes | str) -> tuple[StateMapOracle, dict]:
    """Parse JSON text into ``(oracle, document)``; raises :class:`SpecError`."""
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise SpecError("", f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise SpecError("", "expected a JSON object")
    return parse_map_spec(doc), doc


def load_state(data: bytes | str) -> DensityMatrix:
    """State JSON: either a bare matrix or ``{"matrix": ..., "dims": [...]}``."""
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise SpecError("", f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    if isinstance(doc, dict):
        dims = _dims(doc, "dims", "") if "dims" in doc else None
        return _state(_get(doc, "matrix", ""), "matrix", dims)
    return _state(doc, "")
