"""JSON/CSV helpers shared by every artifact writer.

All documents carry ``schema`` and ``schema_version`` keys. Output is
canonical (sorted keys, no whitespace, shortest round-trip float repr) so equal
content gives equal bytes.
"""
import csv
import hashlib
import json
from pathlib import Path

import numpy as np

SCHEMA_VERSION = "1.0"


class SchemaError(ValueError):
    pass


def to_jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def dumps(doc):
    return json.dumps(to_jsonable(doc), sort_keys=True, separators=(",", ":"), allow_nan=False)


def write_document(path, schema, body):
    doc = dict(body)
    doc["schema"] = schema
    doc["schema_version"] = SCHEMA_VERSION
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(doc), encoding="utf-8")
    return path


def check_version(doc, schema=None):
    version = str(doc.get("schema_version", ""))
    if version.split(".")[0] != SCHEMA_VERSION.split(".")[0]:
        raise SchemaError(f"unsupported schema_version {version!r} (reader supports {SCHEMA_VERSION})")
    if schema is not None and doc.get("schema") != schema:
        raise SchemaError(f"expected a {schema!r} document, got {doc.get('schema')!r}")
    return doc


def read_document(path, schema=None):
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"missing artifact: {path}")
    return check_version(json.loads(path.read_text(encoding="utf-8")), schema)


def config_hash(cfg):
    return hashlib.sha256(dumps(cfg).encode("utf-8")).hexdigest()[:16]


def write_csv(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return path
