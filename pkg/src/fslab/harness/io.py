"""Artifact serialisation: CSV tables, JSON summaries and run manifests."""
from __future__ import annotations

import csv
import datetime as dt
import hashlib
import io
import json
import math
import os
import platform
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return format(v, ".17g")
    if v is None:
        return ""
    return str(v)


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_cell(v) for v in row])
    return buf.getvalue()


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def json_text(obj) -> str:
    return json.dumps(_plain(obj), indent=2, sort_keys=True) + "\n"


@dataclass
class Artifacts:
    """Named outputs of one run, kept in memory until the run succeeds."""

    files: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    extra_manifest: dict = field(default_factory=dict)

    def table(self, name: str, header, rows) -> None:
        self.files[name] = csv_text(header, rows)

    def document(self, name: str, obj) -> None:
        self.files[name] = json_text(obj)


def _timestamp() -> str:
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    now = (dt.datetime.fromtimestamp(int(epoch), dt.timezone.utc) if epoch
           else dt.datetime.now(dt.timezone.utc))
    return now.isoformat(timespec="seconds")


def versions() -> dict:
    import scipy

    from fslab import __version__
    from fslab._backend import BACKEND

    return {"fslab": __version__, "backend": BACKEND, "python": platform.python_version(),
            "numpy": np.__version__, "scipy": scipy.__version__}


def write_artifacts(out: Path, arts: Artifacts, subcommand: str, config_text: str, seed: int,
                    workers: int) -> Path:
    """Write every artifact plus ``summary.json`` and ``manifest.json`` into ``out``."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    files = dict(arts.files)
    files["summary.json"] = json_text(arts.summary)
    digests = {}
    for name, text in sorted(files.items()):
        data = text.encode("utf-8")
        (out / name).write_bytes(data)
        digests[name] = hashlib.sha256(data).hexdigest()
    manifest = {
        "subcommand": subcommand,
        "timestamp": _timestamp(),
        "config_sha256": hashlib.sha256(config_text.encode("utf-8")).hexdigest(),
        "config": json.loads(config_text),
        "seed": seed,
        "workers": workers,
        "versions": versions(),
        "artifacts": digests,
    }
    manifest.update(_plain(arts.extra_manifest))
    (out / "manifest.json").write_text(json_text(manifest), encoding="utf-8")
    return out
