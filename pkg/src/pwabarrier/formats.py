"""JSON file formats for systems, networks and barriers.

Everything is written in one canonical form (sorted keys, floats as
``%.17g``) so that files diff cleanly and content hashes are stable.
"""
from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path

import numpy as np

from .barrier_lp import BarrierCandidate, Epsilons
from .geometry import HPolytope, VPolytope, hrep_of
from .pwa import Cell, PwaDynamics
from .relu import ReluNet

CONTAINMENT_TOL = 1e-7


class FormatError(ValueError):
    """A file is not valid JSON or does not follow the expected layout."""


def _dump(obj, out):
    if isinstance(obj, dict):
        out.append("{")
        for k, key in enumerate(sorted(obj)):
            if k:
                out.append(",")
            out.append(json.dumps(str(key)))
            out.append(":")
            _dump(obj[key], out)
        out.append("}")
    elif isinstance(obj, (list, tuple)):
        out.append("[")
        for k, item in enumerate(obj):
            if k:
                out.append(",")
            _dump(item, out)
        out.append("]")
    elif isinstance(obj, (bool, np.bool_)) or obj is None:
        out.append(json.dumps(bool(obj) if obj is not None else None))
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        x = float(obj) + 0.0  # no negative zero
        if not math.isfinite(x):
            raise FormatError("non-finite number cannot be written")
        out.append("%.17g" % x)
    elif isinstance(obj, str):
        out.append(json.dumps(obj))
    elif isinstance(obj, np.ndarray):
        _dump(obj.tolist(), out)
    else:
        raise TypeError(f"cannot serialise {type(obj).__name__}")


def canonical_json(obj) -> str:
    """Sorted keys, no whitespace, floats as ``%.17g``."""
    out = []
    _dump(obj, out)
    return "".join(out)


def _floats(x):
    """Nested lists of floats (so integers in arrays are written as reals)."""
    return np.asarray(x, dtype=float).tolist()


def read_json(path):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from exc


def write_json(path, obj):
    Path(path).write_text(canonical_json(obj) + "\n", encoding="utf-8")


def _require(doc, keys, what):
    if not isinstance(doc, dict):
        raise FormatError(f"{what} must be a JSON object")
    missing = [k for k in keys if k not in doc]
    if missing:
        raise FormatError(f"{what} is missing {missing}")


# -- systems -------------------------------------------------------------
def _sorted_vertices(V):
    V = np.asarray(V, dtype=float)
    return V[np.lexsort(V.T[::-1])]


def _canonical_hrep(V):
    """Inequalities rebuilt from lexicographically sorted vertices, rows sorted,
    so the written form depends only on the vertex set."""
    h = hrep_of(VPolytope(V))
    rows = np.column_stack([h.E, h.e])
    rows = rows[np.lexsort(rows.T[::-1])]
    return rows[:, :-1], rows[:, -1]


def cell_record(cell: Cell) -> dict:
    V = _sorted_vertices(cell.vertices)
    E, e = _canonical_hrep(V)
    return {
        "id": int(cell.id),
        "E": _floats(E),
        "e": _floats(e),
        "A": _floats(cell.A),
        "a": _floats(cell.a),
        "vertices": _floats(V),
    }


def system_to_dict(d: PwaDynamics) -> dict:
    return {"dim": int(d.dim), "cells": [cell_record(c) for c in d.cells]}


def system_from_dict(doc) -> PwaDynamics:
    """Build :class:`PwaDynamics` from a system document.

    Cells given with ``vertices`` use them; otherwise the vertices are
    enumerated from ``E x + e >= 0``.  When both are present every vertex must
    satisfy the inequalities.
    """
    _require(doc, ["dim", "cells"], "system file")
    n = doc["dim"]
    if not isinstance(n, int) or n < 1:
        raise FormatError("'dim' must be a positive integer")
    if not isinstance(doc["cells"], list) or not doc["cells"]:
        raise FormatError("'cells' must be a non-empty list")
    cells = []
    for rec in doc["cells"]:
        _require(rec, ["id", "A", "a"], "cell")
        try:
            A = np.asarray(rec["A"], dtype=float)
            a = np.asarray(rec["a"], dtype=float)
            region = None
            if "E" in rec and "e" in rec:
                region = HPolytope(np.asarray(rec["E"], dtype=float).reshape(-1, n),
                                   np.asarray(rec["e"], dtype=float))
            verts = rec.get("vertices")
            if verts is not None:
                V = np.asarray(verts, dtype=float).reshape(-1, n)
                if region is not None and not np.all(region.slack(V) >= -CONTAINMENT_TOL):
                    raise FormatError(f"cell {rec['id']}: vertices violate its inequalities")
                cell = Cell(rec["id"], A, a, vertices=V)
            elif region is not None:
                cell = Cell(rec["id"], A, a, region=region)
            else:
                raise FormatError(f"cell {rec['id']}: needs 'vertices' or 'E' and 'e'")
        except (TypeError, ValueError) as exc:
            if isinstance(exc, FormatError):
                raise
            raise FormatError(f"cell {rec.get('id')}: {exc}") from exc
        if cell.dim != n:
            raise FormatError(f"cell {rec['id']} has dimension {cell.dim}, file says {n}")
        cells.append(cell)
    return PwaDynamics(cells)


def partition_hash(d: PwaDynamics) -> str:
    """SHA-256 of the canonical JSON of the cells' ``id, A, a, vertices``."""
    recs = [
        {"id": int(c.id), "A": _floats(c.A), "a": _floats(c.a),
         "vertices": _floats(_sorted_vertices(c.vertices))}
        for c in d.cells
    ]
    return hashlib.sha256(canonical_json(recs).encode("utf-8")).hexdigest()


# -- networks ------------------------------------------------------------
def network_from_dict(doc):
    """``(ReluNet, (box_lo, box_hi))`` from a network document."""
    _require(doc, ["W1", "b1", "W2", "b2", "box_lo", "box_hi"], "network file")
    try:
        net = ReluNet(doc["W1"], doc["b1"], doc["W2"], doc["b2"])
        lo = np.asarray(doc["box_lo"], dtype=float).ravel()
        hi = np.asarray(doc["box_hi"], dtype=float).ravel()
    except (TypeError, ValueError) as exc:
        raise FormatError(f"network file: {exc}") from exc
    if lo.size != net.dim or hi.size != net.dim:
        raise FormatError("box corners must match the network input dimension")
    if not np.all(lo < hi):
        raise FormatError("box_lo must be strictly below box_hi")
    return net, (lo, hi)


def network_to_dict(net: ReluNet, lo, hi) -> dict:
    return {
        "W1": _floats(net.W1), "b1": _floats(net.b1),
        "W2": _floats(net.W2), "b2": _floats(net.b2),
        "box_lo": _floats(lo), "box_hi": _floats(hi),
    }


def is_network(doc) -> bool:
    return isinstance(doc, dict) and "W1" in doc


# -- barriers ------------------------------------------------------------
def barrier_to_dict(b: BarrierCandidate, d: PwaDynamics, alpha: float, eps) -> dict:
    eps = Epsilons.coerce(eps)
    return {
        "alpha": float(alpha),
        "eps": list(eps.as_tuple()),
        "cells": [
            {"id": int(cid), "p": _floats(b.piece(cid)[0]), "q": float(b.piece(cid)[1])}
            for cid in b.cell_ids
        ],
        "partition_hash": partition_hash(d),
    }


def barrier_from_dict(doc):
    """``(BarrierCandidate, alpha, Epsilons, partition_hash)``."""
    _require(doc, ["alpha", "eps", "cells", "partition_hash"], "barrier file")
    try:
        recs = sorted(doc["cells"], key=lambda r: r["id"])
        ids = tuple(int(r["id"]) for r in recs)
        P = np.array([r["p"] for r in recs], dtype=float)
        q = np.array([r["q"] for r in recs], dtype=float)
        eps = Epsilons.coerce(doc["eps"])
        alpha = float(doc["alpha"])
    except (TypeError, KeyError, ValueError) as exc:
        raise FormatError(f"barrier file: {exc}") from exc
    if P.ndim != 2:
        raise FormatError("barrier file: every 'p' must have the same length")
    return BarrierCandidate(ids, P, q), alpha, eps, str(doc["partition_hash"])
