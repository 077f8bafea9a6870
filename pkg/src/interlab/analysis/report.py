"""JSON and CSV writers that stamp every file with the manifest hash.

Timestamps live only under the top-level ``"metadata"`` key so the
``"report"`` payload is byte-stable across identical runs.
"""
from __future__ import annotations

import csv
import io
import json
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    return obj


def report_json(payload, manifest_hash: str) -> str:
    """The stable part of a report: hash plus payload, sorted keys."""
    return json.dumps({"manifest_hash": manifest_hash, "report": _plain(payload)}, sort_keys=True, indent=1)


def write_json(path, payload, manifest_hash: str, metadata: Optional[dict] = None) -> None:
    doc = json.loads(report_json(payload, manifest_hash))
    meta = {"written_at": datetime.now(timezone.utc).isoformat()}
    meta.update(metadata or {})
    doc["metadata"] = meta
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")


def read_json(path) -> dict:
    return json.loads(Path(path).read_text())


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence], manifest_hash: str) -> None:
    buf = io.StringIO()
    buf.write(f"# manifest {manifest_hash}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in row])
    Path(path).write_text(buf.getvalue())


def read_csv(path) -> tuple[str, list, list]:
    """Returns (manifest hash, header, rows as strings)."""
    lines = Path(path).read_text().splitlines()
    digest = lines[0].split()[-1] if lines and lines[0].startswith("#") else ""
    body = list(csv.reader(lines[1:] if digest else lines))
    return digest, body[0], body[1:]
