"""File formats: coincidence-count CSV, transition-matrix JSON, report CSV, manifests."""

from __future__ import annotations

import csv
import hashlib
import io
import json
from pathlib import Path

import numpy as np

from oamsim.channel import CountsMatrix, TransitionMatrix
from oamsim.errors import InputFormatError, OamSimError, ValidationError
from oamsim.thermo import ThermoReport

COUNTS_META_KEYS = ("accumulation_s", "gate_ns", "pump_sigma")
REPORT_COLUMNS = ("beta",) + ThermoReport.FIELDS


def _num(x) -> str:
    return repr(float(x))


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_text(path, text: str) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def counts_to_csv(counts: CountsMatrix) -> str:
    L = counts.l_max
    buf = io.StringIO()
    buf.write(f"#accumulation_s={_num(counts.accumulation_s)}\n")
    buf.write(f"#gate_ns={_num(counts.gate_ns)}\n")
    buf.write(f"#pump_sigma={_num(counts.pump_sigma)}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["l_in"] + list(range(-L, L + 1)))
    for i, row in enumerate(counts.counts):
        w.writerow([i - L] + [int(v) for v in row])
    return buf.getvalue()


def write_counts_csv(path, counts: CountsMatrix) -> None:
    _write_text(path, counts_to_csv(counts))


def read_counts_csv(path) -> CountsMatrix:
    """Parse a coincidence table; rows are signal indices ``-L..L``."""
    meta = {}
    header = None
    rows = []
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except (OSError, UnicodeDecodeError) as exc:
        raise InputFormatError(f"cannot read counts file: {exc}", path) from exc
    for lineno, line in enumerate(lines, start=1):
        s = line.strip()
        if not s:
            continue
        if s.startswith("#"):
            key, sep, value = s[1:].partition("=")
            key = key.strip()
            if not sep:
                continue
            if key in COUNTS_META_KEYS:
                try:
                    meta[key] = float(value)
                except ValueError:
                    raise InputFormatError(f"bad metadata value {value!r} for {key}", path, lineno)
            continue
        cells = next(csv.reader([s]))
        if header is None:
            if cells[0].strip() != "l_in":
                raise InputFormatError("header must start with 'l_in'", path, lineno)
            try:
                header = [int(c) for c in cells[1:]]
            except ValueError:
                raise InputFormatError("output labels must be integers", path, lineno)
            L = (len(header) - 1) // 2
            if header != list(range(-L, L + 1)) or L < 1:
                raise InputFormatError("output labels must run -L..L", path, lineno)
            continue
        if len(cells) != len(header) + 1:
            raise InputFormatError(f"expected {len(header) + 1} fields, got {len(cells)}", path, lineno)
        try:
            label = int(cells[0])
            values = [int(c) for c in cells[1:]]
        except ValueError:
            raise InputFormatError("counts must be integers", path, lineno)
        expected = len(rows) - (len(header) - 1) // 2
        if label != expected:
            raise InputFormatError(f"row label {label} out of order (expected {expected})", path, lineno)
        if any(v < 0 for v in values):
            raise InputFormatError("counts must be non-negative", path, lineno)
        rows.append(values)
    if header is None:
        raise InputFormatError("missing header row", path)
    if len(rows) != len(header):
        raise InputFormatError(f"expected {len(header)} rows, got {len(rows)}", path, len(lines))
    try:
        return CountsMatrix(np.array(rows, dtype=np.int64), **meta)
    except OamSimError as exc:
        raise InputFormatError(str(exc), path) from exc


def transition_to_dict(t: TransitionMatrix) -> dict:
    return {
        "dim": t.dim,
        "l_max": t.l_max,
        "direction": t.direction,
        "provenance": t.provenance,
        "leakage": [float(v) for v in t.leakage],
        "columns": [[float(v) for v in t.matrix[:, j]] for j in range(t.dim)],
        "metadata": t.metadata,
    }


def transition_from_dict(data: dict, path=None) -> TransitionMatrix:
    try:
        cols = np.array(data["columns"], dtype=float)
        t = TransitionMatrix(
            cols.T, data["leakage"], data["direction"], data["provenance"], dict(data.get("metadata", {}))
        )
    except KeyError as exc:
        raise InputFormatError(f"missing key {exc}", path) from exc
    except (ValueError, TypeError) as exc:
        raise InputFormatError(f"invalid transition matrix: {exc}", path) from exc
    if data.get("dim", t.dim) != t.dim or data.get("l_max", t.l_max) != t.l_max:
        raise InputFormatError("dim/l_max disagree with columns", path)
    return t


def dumps_json(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True) + "\n"


def write_transition_json(path, t: TransitionMatrix) -> None:
    _write_text(path, dumps_json(transition_to_dict(t)))


def read_json(path):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise InputFormatError(f"cannot read file: {exc}", path) from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputFormatError(f"malformed JSON: {exc.msg}", path, exc.lineno) from exc


def read_transition_json(path) -> TransitionMatrix:
    data = read_json(path)
    if not isinstance(data, dict):
        raise InputFormatError("transition file must hold a JSON object", path, 1)
    return transition_from_dict(data, path)


def report_to_csv(curves: dict, band=None) -> str:
    """One row per beta; ``<quantity>_lo`` / ``<quantity>_hi`` appended when banded."""
    cols = list(REPORT_COLUMNS)
    data = [np.asarray(curves[c]) for c in cols]
    if band is not None:
        for q in ThermoReport.FIELDS:
            cols += [f"{q}_lo", f"{q}_hi"]
            data += [band.lower[q], band.upper[q]]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for i in range(len(data[0])):
        w.writerow([_num(col[i]) for col in data])
    return buf.getvalue()


def write_report_csv(path, curves: dict, band=None) -> None:
    _write_text(path, report_to_csv(curves, band))


def read_report_csv(path) -> dict:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    return {name: np.array([float(r[i]) for r in body]) for i, name in enumerate(header)}


def write_manifest(path, payload: dict, root) -> dict:
    """Hash every listed file (paths relative to ``root``) and write the manifest last."""
    root = Path(root)
    for entry in payload["files"]:
        entry["sha256"] = sha256_file(root / entry["path"])
    _write_text(path, dumps_json(payload))
    return payload


def verify_manifest(manifest_path, inputs) -> None:
    """Refuse any input whose content hash disagrees with, or is absent from, the manifest."""
    manifest_path = Path(manifest_path)
    data = read_json(manifest_path)
    try:
        entries = {
            (manifest_path.parent / e["path"]).resolve(): e["sha256"] for e in data["files"]
        }
    except (KeyError, TypeError) as exc:
        raise InputFormatError(f"malformed manifest: {exc}", manifest_path) from exc
    for p in inputs:
        key = Path(p).resolve()
        if key not in entries:
            raise ValidationError(f"{p} is not listed in manifest {manifest_path}")
        if sha256_file(p) != entries[key]:
            raise ValidationError(f"{p} does not match its manifest hash")
