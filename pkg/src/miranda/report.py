"""JSON reports: deterministic, round-trip exact serialization of results."""

from __future__ import annotations

import dataclasses
import enum
import json
import math

import numpy as np

from miranda import __version__


def jsonable(obj):
    """Plain JSON data for numpy values, tuples, enums and dataclasses.

    Non-finite floats become the strings "inf", "-inf" and "nan" so the
    output stays strict JSON.
    """
    if isinstance(obj, enum.Enum):
        return obj.value
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isfinite(v):
            return v
        return "nan" if math.isnan(v) else ("inf" if v > 0 else "-inf")
    if isinstance(obj, str) or obj is None:
        return obj
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if dataclasses.is_dataclass(obj):
        return {f.name: jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj) if f.repr}
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(doc: dict) -> str:
    # repr-based float output is the shortest string that round-trips exactly
    return json.dumps(jsonable(doc), sort_keys=True, indent=2, allow_nan=False) + "\n"


def boundary_section(report) -> dict | None:
    if report is None:
        return None
    axes = []
    for v in report.axes:
        entry = {
            "axis": v.axis + 1,
            "verdict": "pass" if v.passed else "fail",
            "orientation": {1: "negative_on_lower", -1: "positive_on_lower", 0: None}[v.orientation],
            "min_abs_lower": v.min_abs_lower,
            "min_abs_upper": v.min_abs_upper,
        }
        if v.witness is not None:
            entry["witness"] = dataclasses.asdict(v.witness)
        axes.append(entry)
    return {"passed": report.passed, "samples_per_axis": report.samples_per_axis,
            "scale": report.scale, "axes": axes}


def audit_section(aud) -> dict:
    by_label = {}
    for p in aud.points:
        ratio = p.sigma / p.jac_norm if p.jac_norm > 0 else 0.0
        entry = by_label.setdefault(p.label, {"points": 0, "min_relative_sigma": math.inf})
        entry["points"] += 1
        entry["min_relative_sigma"] = min(entry["min_relative_sigma"], ratio)
    worst = None
    if aud.worst is not None:
        worst = {"label": aud.worst.label, "x": aud.worst.x, "sigma": aud.worst.sigma,
                 "jacobian_norm": aud.worst.jac_norm}
    return {"verdict": aud.verdict, "sigma_min": aud.sigma_min, "points": len(aud.points),
            "by_map": dict(sorted(by_label.items())), "worst": worst}


def certificate_section(cert) -> dict:
    return {
        "q": cert.q,
        "epsilon": cert.epsilon,
        "seed": cert.seed,
        "attempt": cert.attempt,
        "zeros": [{"x": z.x, "residual": z.residual} for z in cert.zeros],
        "zero_count": cert.count,
        "components": [dataclasses.asdict(c) for c in cert.components],
        "face_counts": {"lower": cert.face_counts[0], "upper": cert.face_counts[1]},
        "parity": cert.parity,
        "audit": audit_section(cert.audit),
        "tolerances": cert.tolerances,
        "completeness": cert.completeness,
        "axis_order": None if cert.axis_order is None else [i + 1 for i in cert.axis_order],
    }


def build(command: str, config: dict, body: dict, stats: dict | None = None,
          wall_clock: float | None = None) -> dict:
    """Top-level report document; the embedded config reproduces it exactly."""
    timings = {"work": dict(sorted((stats or {}).items()))}
    if wall_clock is not None:
        timings["wall_clock_seconds"] = wall_clock
    doc = {"tool": "miranda", "version": __version__, "command": command, "config": config,
           "timings": timings}
    doc.update(body)
    return doc
