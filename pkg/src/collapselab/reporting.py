"""Result serialization: CSV time series and JSON run summaries.

Numbers are written with 17 significant digits so that a double survives
the round trip exactly; nothing time- or host-dependent is ever written,
which is what makes byte-identical reruns possible.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import IOFailure

NUMBER_FORMAT = "%.17g"


def format_number(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return NUMBER_FORMAT % float(value)


def write_csv(path, header: list[str], columns: list[np.ndarray]) -> Path:
    """Write aligned columns under a header row.

    All columns must share one length; values go through the 17-digit
    formatter.
    """
    if len(header) != len(columns):
        raise IOFailure(
            f"{path}: {len(header)} header fields for {len(columns)} columns")
    lengths = {len(c) for c in columns}
    if len(lengths) > 1:
        raise IOFailure(f"{path}: ragged columns with lengths {sorted(lengths)}")
    lines = [",".join(header)]
    for i in range(lengths.pop() if lengths else 0):
        lines.append(",".join(format_number(col[i]) for col in columns))
    text = "\n".join(lines) + "\n"
    try:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    except OSError as err:
        raise IOFailure(f"cannot write {path}: {err}") from err
    return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    if isinstance(obj, complex):
        return {"re": float(obj.real), "im": float(obj.imag)}
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def write_summary(path, payload: dict) -> Path:
    """Write the run summary document (sorted keys, no timestamps)."""
    try:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(_jsonable(payload), indent=2,
                                   sort_keys=True) + "\n")
    except OSError as err:
        raise IOFailure(f"cannot write {path}: {err}") from err
    return path


def operator_csv(path, label_pairs: list[tuple[str, np.ndarray]]) -> Path:
    """Flattened operator dump: row, col, then re/im per labeled matrix."""
    if not label_pairs:
        raise IOFailure(f"{path}: nothing to write")
    dim = label_pairs[0][1].shape[0]
    rows, cols = np.indices((dim, dim))
    header = ["row", "col"]
    columns: list[np.ndarray] = [rows.ravel(), cols.ravel()]
    for label, op in label_pairs:
        if op.shape != (dim, dim):
            raise IOFailure(f"{path}: operator {label} has shape {op.shape}")
        header.extend([f"{label}_re", f"{label}_im"])
        columns.extend([op.real.ravel(), op.imag.ravel()])
    return write_csv(path, header, columns)
