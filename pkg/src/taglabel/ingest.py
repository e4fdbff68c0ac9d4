"""Read-record CSV and session manifest I/O.

The CSV layout is fixed::

    timestamp_s,tag_id,rssi_dbm,phase_rad

with one read per row, '.' as decimal separator, UTF-8.
"""

from collections import Counter
from dataclasses import dataclass, field
import csv
import heapq
import io
import json
import math
from pathlib import Path

from .domain import DEFAULT_TAG_IDS, TWO_PI, RawRead, SessionManifest, TagRole, active_tags

HEADER = ("timestamp_s", "tag_id", "rssi_dbm", "phase_rad")


class ReadFormatError(ValueError):
    """A read file could not be parsed; ``line`` is 1-based."""

    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


def _as_text(data):
    if isinstance(data, (bytes, bytearray)):
        return bytes(data).decode("utf-8")
    return data


def parse_reads(data, tag_map=None):
    """Parse CSV bytes (or text) into a list of :class:`RawRead` in file order."""
    tag_map = DEFAULT_TAG_IDS if tag_map is None else tag_map
    text = _as_text(data)
    if not text.strip():
        return []
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    if tuple(h.strip() for h in header) != HEADER:
        raise ReadFormatError(f"expected header {','.join(HEADER)!r}, got {','.join(header)!r}", 1)
    reads = []
    for lineno, row in enumerate(reader, start=2):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != 4:
            raise ReadFormatError(f"expected 4 fields, got {len(row)}", lineno)
        ts, tag_id, rssi, phase = (c.strip() for c in row)
        try:
            ts, rssi, phase = float(ts), float(rssi), float(phase)
        except ValueError as exc:
            raise ReadFormatError(f"non-numeric field ({exc})", lineno) from None
        if not all(math.isfinite(v) for v in (ts, rssi, phase)):
            raise ReadFormatError("non-finite value", lineno)
        if tag_id not in tag_map:
            raise ReadFormatError(f"unknown tag_id {tag_id!r}", lineno)
        if not 0.0 <= phase < TWO_PI:
            raise ReadFormatError(f"phase {phase} outside [0, 2pi)", lineno)
        if rssi > 0.0:
            raise ReadFormatError(f"rssi {rssi} dBm is positive", lineno)
        reads.append(RawRead(ts, TagRole(tag_map[tag_id]), rssi, phase))
    return reads


def serialize_reads(reads, tag_map=None):
    """Inverse of :func:`parse_reads`; floats are written with ``repr`` so they round-trip."""
    tag_map = DEFAULT_TAG_IDS if tag_map is None else tag_map
    ids = {TagRole(role): tag_id for tag_id, role in tag_map.items()}
    lines = [",".join(HEADER)]
    for r in reads:
        lines.append(f"{float(r.timestamp)!r},{ids[r.tag]},{float(r.rssi)!r},{float(r.phase)!r}")
    return ("\n".join(lines) + "\n").encode("utf-8")


def read_reads_file(path, tag_map=None):
    return parse_reads(Path(path).read_bytes(), tag_map)


def write_reads_file(path, reads, tag_map=None):
    Path(path).write_bytes(serialize_reads(reads, tag_map))


def write_manifest(path, manifest):
    Path(path).write_text(json.dumps(manifest.to_dict(), indent=2, sort_keys=True) + "\n")


def read_manifest(path):
    return SessionManifest.from_dict(json.loads(Path(path).read_text()))


@dataclass
class ValidationReport:
    session_id: str
    n_reads: int
    reads_per_tag: dict = field(default_factory=dict)
    violations: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.violations


def validate_session(reads, manifest, rx_floor_dbm=None):
    """Check ordering, per-tag coverage and value ranges of a session's reads."""
    report = ValidationReport(manifest.session_id, len(reads))
    counts = Counter(r.tag for r in reads)
    active = active_tags(manifest.n_tags)
    report.reads_per_tag = {t.value: counts.get(t, 0) for t in active}
    prev = -math.inf
    for i, r in enumerate(reads):
        if r.timestamp < prev:
            report.violations.append(f"read {i}: timestamp {r.timestamp} < previous {prev}")
        prev = max(prev, r.timestamp)
        if not 0.0 <= r.phase < TWO_PI:
            report.violations.append(f"read {i}: phase {r.phase} outside [0, 2pi)")
        if r.rssi > 0.0:
            report.violations.append(f"read {i}: rssi {r.rssi} > 0 dBm")
        if rx_floor_dbm is not None and r.rssi < rx_floor_dbm:
            report.violations.append(f"read {i}: rssi {r.rssi} below floor {rx_floor_dbm}")
        if r.tag not in active:
            report.violations.append(f"read {i}: tag {r.tag.value} not active in a {manifest.n_tags}-tag session")
    for t in active:
        if counts.get(t, 0) == 0:
            report.violations.append(f"{t.value}: no reads")
    return report


def merge_streams(*streams):
    """Stable timestamp merge of pre-sorted read streams (ties keep argument order)."""
    return list(heapq.merge(*streams, key=lambda r: r.timestamp))
