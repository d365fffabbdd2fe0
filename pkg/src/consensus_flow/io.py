"""File formats: Matrix Market matrices, plain-text vectors, JSON outputs.

Every float written by this module carries 17 significant digits, so text
round-trips are exact and traces can be compared byte for byte.
"""

from __future__ import annotations

import io
import json
import math
from pathlib import Path
from typing import Any, Iterable

import numpy as np
import scipy.io
import scipy.sparse

from consensus_flow.errors import ConsensusFlowError
from consensus_flow.linalg import as_matrix, as_vector


class FormatError(ConsensusFlowError):
    pass


def fmt_float(x: float) -> str:
    return format(float(x), ".17g")


def read_matrix(path) -> np.ndarray:
    """Dense real matrix from a Matrix Market file (array or coordinate)."""
    try:
        with Path(path).open("r") as fh:
            header = fh.readline()
        if not header.startswith("%%MatrixMarket"):
            raise FormatError(f"{path}: not a Matrix Market file")
        if "complex" in header or "pattern" in header:
            raise FormatError(f"{path}: only real matrices are supported")
        m = scipy.io.mmread(str(path))
    except FormatError:
        raise
    except (ValueError, OSError, IndexError) as exc:
        raise FormatError(f"{path}: cannot parse Matrix Market data ({exc})") from None
    if scipy.sparse.issparse(m):
        m = m.toarray()
    try:
        return as_matrix(np.asarray(m, dtype=float), str(path)).copy()
    except ConsensusFlowError as exc:
        raise FormatError(str(exc)) from None


def write_matrix(path, a, coordinate: bool = False) -> None:
    a = as_matrix(a)
    buf = io.BytesIO()
    target = scipy.sparse.coo_matrix(a) if coordinate else a
    scipy.io.mmwrite(buf, target, precision=17)
    Path(path).write_bytes(buf.getvalue())


def parse_vector(text: str, name: str = "vector") -> np.ndarray:
    vals = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            vals.append(float(line))
        except ValueError:
            raise FormatError(f"{name} line {lineno}: not a number: {line!r}") from None
    try:
        return as_vector(np.array(vals, dtype=float), name)
    except ConsensusFlowError as exc:
        raise FormatError(str(exc)) from None


def read_vector(path) -> np.ndarray:
    """One decimal per line; blank lines and ``#`` comments are skipped."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise FormatError(f"{path}: {exc.strerror}") from None
    return parse_vector(text, str(path))


def format_vector(v) -> str:
    return "".join(fmt_float(x) + "\n" for x in np.asarray(v, dtype=float))


def write_vector(path, v) -> None:
    Path(path).write_text(format_vector(v))


def _encode(obj: Any) -> str:
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return '"nan"'
        if math.isinf(x):
            return '"inf"' if x > 0 else '"-inf"'
        return fmt_float(x)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        return "{" + ", ".join(f"{_encode(str(k))}: {_encode(v)}" for k, v in obj.items()) + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_encode(v) for v in obj) + "]"
    raise TypeError(f"cannot encode {type(obj).__name__}")


def dumps(obj: Any) -> str:
    """JSON text with 17-significant-digit floats and insertion-ordered keys."""
    return _encode(obj)


def write_json(path, obj: Any) -> None:
    Path(path).write_text(dumps(obj) + "\n")


def write_jsonl(path, records: Iterable[dict]) -> None:
    Path(path).write_text("".join(dumps(r) + "\n" for r in records))
