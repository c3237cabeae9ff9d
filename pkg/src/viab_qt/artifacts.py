"""Artifact emission and byte-exact comparison.

CSV numbers use shortest round-trip decimals (Python repr), newline '\\n',
no trailing whitespace; JSON is emitted with sorted keys. Replay equality
is therefore a plain byte comparison on CSVs.
"""

import json
from pathlib import Path

import numpy as np


def fmt_cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    return repr(float(v))


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(fmt_cell(c) for c in row))
    path.write_text("\n".join(lines) + "\n")
    return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    return obj


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True)
                    + "\n")
    return path


def first_csv_difference(path_a, path_b):
    """None when byte-identical; otherwise (row, column, cell_a, cell_b)."""
    text_a = Path(path_a).read_text()
    text_b = Path(path_b).read_text()
    if text_a == text_b:
        return None
    rows_a = text_a.splitlines()
    rows_b = text_b.splitlines()
    for i in range(max(len(rows_a), len(rows_b))):
        ra = rows_a[i].split(",") if i < len(rows_a) else []
        rb = rows_b[i].split(",") if i < len(rows_b) else []
        for j in range(max(len(ra), len(rb))):
            ca = ra[j] if j < len(ra) else "<missing>"
            cb = rb[j] if j < len(rb) else "<missing>"
            if ca != cb:
                return (i, j, ca, cb)
    return (min(len(rows_a), len(rows_b)), 0, "<missing>", "<missing>")
