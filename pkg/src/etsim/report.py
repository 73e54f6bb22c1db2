"""Rendering of metrics and tables as JSON, CSV or aligned text.

Every rendering starts with the resolved configuration so output files are
self-describing. Rendering happens in memory; files are written only once
the whole document exists.
"""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path
from typing import Any, Sequence


def _clean(value: Any) -> Any:
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if hasattr(value, "tolist"):
        return _clean(value.tolist())
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    return value


def _cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value) if math.isfinite(value) else str(value)
    return str(value)


def render_json(config: dict, payload: Any, key: str = "rows") -> str:
    return json.dumps({"config": _clean(config), key: _clean(payload)}, indent=2, sort_keys=True) + "\n"


def render_csv(config: dict, rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    buf.write("# config: " + json.dumps(_clean(config), sort_keys=True) + "\n")
    if rows:
        writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _cell(v) for k, v in row.items()})
    return buf.getvalue()


def render_text(config: dict, rows: Sequence[dict]) -> str:
    lines = ["# config: " + json.dumps(_clean(config), sort_keys=True)]
    if rows:
        cols = list(rows[0])

        def fmt(v):
            if isinstance(v, float):
                return f"{v:.4f}" if math.isfinite(v) else str(v)
            return "" if v is None else str(v)

        table = [cols] + [[fmt(r[c]) for c in cols] for r in rows]
        widths = [max(len(row[i]) for row in table) for i in range(len(cols))]
        for row in table:
            lines.append("  ".join(cell.rjust(w) for cell, w in zip(row, widths)))
    return "\n".join(lines) + "\n"


def render(fmt: str, config: dict, rows: Sequence[dict] | dict) -> str:
    """Render ``rows`` (a table) or a single record."""
    if fmt == "json":
        return render_json(config, rows, "rows" if isinstance(rows, list) else "result")
    table = rows if isinstance(rows, list) else [_flat(rows)]
    if fmt == "csv":
        return render_csv(config, table)
    if fmt == "text":
        return render_text(config, table)
    raise ValueError(f"unknown format {fmt!r}")


def _flat(record: dict) -> dict:
    """Scalars only; nested values are JSON-encoded into a single cell."""
    return {
        k: (json.dumps(_clean(v), sort_keys=True) if isinstance(v, (list, dict)) else v)
        for k, v in record.items()
    }


def emit(text: str, output: str | None) -> None:
    if output is None:
        print(text, end="")
        return
    path = Path(output)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def write_matrix(path: Path, matrix) -> None:
    """One CSV row per matrix row; ``inf`` stays as the literal ``inf``."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    for row in matrix:
        writer.writerow([_cell(v.item() if hasattr(v, "item") else v) for v in row])
    path.write_text(buf.getvalue())
