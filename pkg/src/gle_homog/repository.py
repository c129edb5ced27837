"""Artifact storage for experiment outputs."""

import csv
import hashlib
import io
import json
from pathlib import Path
from typing import Iterable, List, Sequence

import numpy as np

from gle_homog.models import ArtifactRecord, Manifest
from gle_homog.utils.logger import get_logger

LOG = get_logger("repository")

MANIFEST_NAME = "manifest.json"


def _json_default(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, complex):
        return [value.real, value.imag]
    raise TypeError(f"{type(value).__name__} is not JSON serializable")


def dumps(data) -> str:
    """Deterministic JSON text: sorted keys, two-space indent, trailing newline."""
    return json.dumps(data, sort_keys=True, indent=2, default=_json_default) + "\n"


class ArtifactRepository:
    """Repository writing CSV and JSON artifacts into one output directory and indexing them."""

    def __init__(self, output_dir):
        """Initialize the repository; the directory is created on first write."""
        self.output_dir = Path(output_dir)
        self._records: List[ArtifactRecord] = []

    @property
    def records(self) -> List[ArtifactRecord]:
        return list(self._records)

    def _write(self, name: str, text: str) -> ArtifactRecord:
        self.output_dir.mkdir(parents=True, exist_ok=True)
        payload = text.encode("utf-8")
        (self.output_dir / name).write_bytes(payload)
        record = ArtifactRecord(path=name, sha256=hashlib.sha256(payload).hexdigest(), size=len(payload))
        self._records = [r for r in self._records if r.path != name] + [record]
        LOG.info(f"Wrote {self.output_dir / name} ({record.size} bytes)")
        return record

    def write_csv(self, name: str, header: Sequence[str], rows: Iterable[Sequence]) -> ArtifactRecord:
        """Write a CSV file with a header row, minimal quoting and CRLF line endings."""
        buffer = io.StringIO()
        writer = csv.writer(buffer, quoting=csv.QUOTE_MINIMAL, lineterminator="\r\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
        return self._write(name, buffer.getvalue())

    def write_json(self, name: str, data) -> ArtifactRecord:
        """Write a JSON document."""
        return self._write(name, dumps(data))

    def write_text(self, name: str, text: str) -> ArtifactRecord:
        return self._write(name, text)

    def write_manifest(self, manifest: Manifest) -> Path:
        """Write manifest.json listing every recorded artifact."""
        manifest.files = self.records
        self.output_dir.mkdir(parents=True, exist_ok=True)
        path = self.output_dir / MANIFEST_NAME
        path.write_bytes(dumps(manifest.to_dict()).encode("utf-8"))
        LOG.info(f"Wrote manifest with {len(manifest.files)} file(s) to {path}")
        return path

    def exists(self, name: str) -> bool:
        return (self.output_dir / name).is_file()
