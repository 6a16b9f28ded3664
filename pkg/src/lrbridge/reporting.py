"""File formats: grid and degradation CSVs, summary/plot JSON, run manifests,
and deployment-record input.

CSV output is UTF-8, comma separated, LF line endings, with floats written at
17 significant digits so that re-parsing recovers the exact doubles and
reruns can be compared byte for byte.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from contextlib import contextmanager
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, List, Sequence

from . import __version__
from .calibration import DeploymentRecord
from .errors import InputParseError
from .experiments import GridCellResult

GRID_COLUMNS = (
    "rho", "cv", "eta", "rep", "seed", "predicted_lr", "empirical_lr",
    "ape_percent", "n_converted", "realized_rho", "status",
)
DEGRADATION_COLUMNS = ("parameter", "mape_mean", "ci_low", "ci_high", "n_reps")
DEPLOYMENT_COLUMNS = ("label", "observed_lr", "margin", "rho", "cv")


def fmt(value) -> str:
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        return format(value, ".17g")
    return str(value)


def _write_rows(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])


def write_grid_csv(path, results: Sequence[GridCellResult]) -> None:
    _write_rows(Path(path), GRID_COLUMNS, ([getattr(r, c) for c in GRID_COLUMNS] for r in results))


def read_grid_csv(path) -> List[GridCellResult]:
    out = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != GRID_COLUMNS:
            raise InputParseError(f"{path}: unexpected grid CSV header {reader.fieldnames}")
        for row in reader:
            out.append(
                GridCellResult(
                    rho=float(row["rho"]),
                    cv=float(row["cv"]),
                    eta=float(row["eta"]),
                    rep=int(row["rep"]),
                    seed=int(row["seed"]),
                    predicted_lr=float(row["predicted_lr"]),
                    empirical_lr=float(row["empirical_lr"]),
                    ape_percent=float(row["ape_percent"]),
                    n_converted=int(row["n_converted"]),
                    realized_rho=float(row["realized_rho"]),
                    status=row["status"],
                )
            )
    return out


def write_degradation_csv(path, points) -> None:
    _write_rows(
        Path(path),
        DEGRADATION_COLUMNS,
        ((p.violation_parameter, p.mape_mean, p.ci_low, p.ci_high, p.n_reps) for p in points),
    )


def plot_series(points) -> dict:
    """Figure-style series: x = violation parameter, y = mean MAPE with CI band."""
    kind = points[0].kind if points else ""
    return {
        "kind": kind,
        "x": [p.violation_parameter for p in points],
        "y": [p.mape_mean for p in points],
        "ci_low": [p.ci_low for p in points],
        "ci_high": [p.ci_high for p in points],
        "n_reps": [p.n_reps for p in points],
    }


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"


def write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps(obj))


def config_digest(config: dict) -> str:
    """SHA-256 of the canonical JSON form of ``config``."""
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@dataclass
class RunManifest:
    command: str
    config: dict
    base_seed: int
    started_at: str
    finished_at: str = ""
    output_files: list = field(default_factory=list)
    tool_version: str = __version__

    @property
    def config_digest(self) -> str:
        return config_digest(self.config)

    def to_dict(self) -> dict:
        return {
            "command": self.command,
            "config": self.config,
            "config_digest": self.config_digest,
            "base_seed": self.base_seed,
            "tool_version": self.tool_version,
            "started_at": self.started_at,
            "finished_at": self.finished_at,
            "output_files": self.output_files,
        }


MANIFEST_NAME = "manifest.json"


class OutputSet:
    """Tracks files written into ``out_dir``; see :func:`output_set`."""

    def __init__(self, out_dir: Path):
        self.out_dir = out_dir
        self.written: List[Path] = []

    def path(self, name: str) -> Path:
        p = self.out_dir / name
        self.written.append(p)
        return p

    def finalize(self, manifest: RunManifest) -> Path:
        manifest.output_files = [
            {"path": p.name, "sha256": file_sha256(p)} for p in self.written if p.name != MANIFEST_NAME
        ]
        manifest.finished_at = utc_now()
        path = self.path(MANIFEST_NAME)
        write_json(path, manifest.to_dict())
        return path


@contextmanager
def output_set(out_dir):
    """Create ``out_dir`` and yield an :class:`OutputSet`; on any error, remove
    everything it wrote (the manifest is always written last)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = OutputSet(out_dir)
    stale = out_dir / MANIFEST_NAME
    if stale.exists():
        stale.unlink()
    try:
        yield outputs
    except BaseException:
        for p in outputs.written:
            try:
                p.unlink()
            except OSError:
                pass
        raise


def verify_manifest(out_dir) -> bool:
    """True when the manifest exists and every listed file matches its digest."""
    out_dir = Path(out_dir)
    path = out_dir / MANIFEST_NAME
    if not path.exists():
        return False
    manifest = json.loads(path.read_text(encoding="utf-8"))
    if manifest["config_digest"] != config_digest(manifest["config"]):
        return False
    return all(
        (out_dir / f["path"]).exists() and file_sha256(out_dir / f["path"]) == f["sha256"]
        for f in manifest["output_files"]
    )


# ---------------------------------------------------------------------------
# Deployment records
# ---------------------------------------------------------------------------


def _record(fields: dict, line) -> DeploymentRecord:
    try:
        return DeploymentRecord(
            observed_lr=float(fields["observed_lr"]),
            margin=float(fields["margin"]),
            rho=float(fields["rho"]),
            cv=float(fields["cv"]),
            label=str(fields.get("label", "") or ""),
        )
    except KeyError as exc:
        raise InputParseError(f"missing field {exc.args[0]!r}", line) from None
    except (TypeError, ValueError) as exc:
        raise InputParseError(str(exc), line) from None


def parse_deployments_csv(text: str) -> List[DeploymentRecord]:
    lines = text.splitlines()
    if not lines or not lines[0].strip():
        raise InputParseError("empty input: no header", 1)
    reader = csv.reader(lines)
    header = [h.strip() for h in next(reader)]
    missing = set(DEPLOYMENT_COLUMNS) - set(header)
    if missing:
        raise InputParseError(f"header lacks columns {sorted(missing)}", 1)
    records = []
    for line_no, row in enumerate(reader, start=2):
        if not any(cell.strip() for cell in row):
            continue
        if len(row) != len(header):
            raise InputParseError(f"expected {len(header)} fields, got {len(row)}", line_no)
        records.append(_record(dict(zip(header, (c.strip() for c in row))), line_no))
    if not records:
        raise InputParseError("empty input: header only, no deployment records")
    return records


def parse_deployments_json(text: str) -> List[DeploymentRecord]:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputParseError(exc.msg, exc.lineno) from None
    if not isinstance(data, list):
        raise InputParseError("deployments JSON must be an array of objects")
    if not data:
        raise InputParseError("empty input: no deployment records")
    records = []
    for i, item in enumerate(data):
        if not isinstance(item, dict):
            raise InputParseError(f"record {i} is not an object")
        try:
            records.append(_record(item, None))
        except InputParseError as exc:
            raise InputParseError(f"record {i}: {exc}") from None
    return records


def load_deployments(path) -> List[DeploymentRecord]:
    """Read deployment records from CSV (``label,observed_lr,margin,rho,cv``) or a JSON array."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise InputParseError(f"{path}: not UTF-8 ({exc.reason})") from None
    if path.suffix.lower() == ".json" or text.lstrip().startswith("["):
        return parse_deployments_json(text)
    return parse_deployments_csv(text)


def write_deployments_csv(path, records: Sequence[DeploymentRecord]) -> None:
    _write_rows(Path(path), DEPLOYMENT_COLUMNS, ([getattr(r, c) for c in DEPLOYMENT_COLUMNS] for r in records))
