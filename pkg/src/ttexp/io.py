"""JSON serialization of TT tensors, operators and reports."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .tt import TTOperator, TTTensor


class TTFormatError(ValueError):
    """The document is not a valid TT file."""


def to_json_dict(t) -> dict:
    """Plain-dict form: order, dims, ranks and nested cores (plus col_dims for operators)."""
    if isinstance(t, TTOperator):
        return {
            "order": t.order,
            "dims": list(t.row_dims),
            "col_dims": list(t.col_dims),
            "ranks": list(t.ranks),
            "cores": [c.tolist() for c in t.cores],
        }
    if isinstance(t, TTTensor):
        return {
            "order": t.order,
            "dims": list(t.dims),
            "ranks": list(t.ranks),
            "cores": [c.tolist() for c in t.cores],
        }
    raise TypeError(f"cannot serialize {type(t).__name__}")


def from_json_dict(doc: dict):
    """Inverse of :func:`to_json_dict`; validates the header against the cores."""
    if not isinstance(doc, dict):
        raise TTFormatError("TT document must be a JSON object")
    missing = {"order", "dims", "ranks", "cores"} - set(doc)
    if missing:
        raise TTFormatError(f"missing fields: {', '.join(sorted(missing))}")
    try:
        cores = [np.asarray(c, dtype=float) for c in doc["cores"]]
    except (TypeError, ValueError) as exc:
        raise TTFormatError(f"cores are not numeric arrays: {exc}") from exc
    is_op = "col_dims" in doc
    try:
        t = TTOperator(cores) if is_op else TTTensor(cores)
    except ValueError as exc:
        raise TTFormatError(str(exc)) from exc
    if doc["order"] != t.order:
        raise TTFormatError(f"order {doc['order']} does not match {t.order} cores")
    dims = t.row_dims if is_op else t.dims
    if list(doc["dims"]) != list(dims):
        raise TTFormatError(f"dims {doc['dims']} do not match cores {list(dims)}")
    if is_op and list(doc["col_dims"]) != list(t.col_dims):
        raise TTFormatError("col_dims do not match cores")
    if list(doc["ranks"]) != list(t.ranks):
        raise TTFormatError(f"ranks {doc['ranks']} do not match cores {list(t.ranks)}")
    return t


def dumps(t, **kwargs) -> str:
    # json writes floats with repr, the shortest string that round-trips
    return json.dumps(to_json_dict(t), **kwargs)


def loads(s: str):
    try:
        doc = json.loads(s)
    except json.JSONDecodeError as exc:
        raise TTFormatError(f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return from_json_dict(doc)


def save(t, path) -> None:
    Path(path).write_text(dumps(t))


def load(path):
    """Read a TT tensor or operator; errors name the file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise FileNotFoundError(f"cannot read {path}: {exc.strerror}") from exc
    try:
        return loads(text)
    except TTFormatError as exc:
        raise TTFormatError(f"{path}: {exc}") from exc
