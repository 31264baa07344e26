"""Config files, provenance headers and deterministic writers.

Every file the toolkit emits starts with a provenance record (tool version,
seed, config hash). No timestamps or host names are written, so re-running a
command with the same inputs reproduces the same bytes.
"""

from __future__ import annotations

import csv
import hashlib
import io as _io
import json
import os

import numpy as np

from lanecoop import __version__
from lanecoop.errors import ConfigError, FormatError


def parse_kv(text: str, source: str = "<config>") -> dict[str, str]:
    """Flat ``key = value`` text; ``#`` starts a comment, blank lines ignored."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key=value, got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        out[key] = value
    return out


def load_kv(path) -> dict[str, str]:
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            return parse_kv(fh.read(), str(path))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def apply_overrides(obj, values: dict[str, str], prefix: str = ""):
    """Return a copy of dataclass ``obj`` with matching ``prefix.key`` entries applied."""
    from dataclasses import fields, replace

    changes = {}
    for f in fields(obj):
        key = prefix + f.name
        if key not in values:
            continue
        raw = values[key]
        current = getattr(obj, f.name)
        try:
            if isinstance(current, bool):
                if raw.lower() not in ("1", "0", "true", "false", "yes", "no"):
                    raise ValueError(raw)
                changes[f.name] = raw.lower() in ("1", "true", "yes")
            elif isinstance(current, int):
                changes[f.name] = int(raw)
            elif isinstance(current, float):
                changes[f.name] = float(raw)
            else:
                changes[f.name] = raw
        except ValueError:
            raise ConfigError(f"config key {key}: cannot parse {raw!r}") from None
    return replace(obj, **changes) if changes else obj


def config_hash(values: dict) -> str:
    blob = "\n".join(f"{k}={values[k]}" for k in sorted(values))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def provenance(seed: int, config: dict | None = None, **extra) -> dict:
    prov = {"tool": "lanecoop", "version": __version__, "seed": int(seed),
            "config_hash": config_hash(config or {})}
    prov.update(extra)
    return prov


def _ensure_parent(path):
    parent = os.path.dirname(os.fspath(path))
    if parent:
        os.makedirs(parent, exist_ok=True)


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    raise TypeError(f"not JSON serialisable: {type(x).__name__}")


def dumps(obj, indent=None) -> str:
    return json.dumps(obj, sort_keys=True, default=_jsonable, indent=indent, allow_nan=False)


def write_json(path, obj: dict, prov: dict) -> None:
    _ensure_parent(path)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps({"_provenance": prov, **obj}, indent=1))
        fh.write("\n")


def read_json(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON at line {exc.lineno}") from exc


def write_jsonl(path, records, prov: dict) -> None:
    _ensure_parent(path)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps({"_provenance": prov}) + "\n")
        for rec in records:
            fh.write(dumps(rec) + "\n")


def read_jsonl(path) -> tuple[dict, list[dict]]:
    prov, records = {}, []
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc
    with fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError:
                raise FormatError(f"{path}:{lineno}: invalid JSON line") from None
            if lineno == 1 and "_provenance" in rec:
                prov = rec["_provenance"]
            else:
                records.append(rec)
    return prov, records


def provenance_comment(prov: dict) -> str:
    return "# " + " ".join(f"{k}={prov[k]}" for k in sorted(prov))


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(round(float(v), 10))
    return str(v)


def write_csv(path, header, rows, prov: dict) -> None:
    _ensure_parent(path)
    buf = _io.StringIO()
    buf.write(provenance_comment(prov) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    """Header and rows of a CSV written by :func:`write_csv` (comment lines skipped)."""
    with open(path, encoding="utf-8", newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    rows = list(csv.reader(lines))
    if not rows:
        raise FormatError(f"{path}: empty CSV")
    return rows[0], rows[1:]
