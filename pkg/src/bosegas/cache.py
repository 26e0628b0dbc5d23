"""On-disk cache for float64 tables.

Each entry is a pair ``<key>.f64le`` (raw little-endian doubles) and
``<key>.meta.json`` (parameter record, format version, payload digest).  The
key is the sha256 of the canonical JSON of the parameter record.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .errors import CacheCorruptionError

FORMAT_VERSION = 1
ENV_VAR = "BOSEGAS_CACHE"


def default_root() -> Path | None:
    root = os.environ.get(ENV_VAR)
    return Path(root) if root else None


def params_key(record: dict) -> str:
    blob = json.dumps(record, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def _atomic_write(path: Path, data: bytes):
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class TableCache:
    def __init__(self, root):
        self.root = Path(root)

    def _paths(self, key: str):
        return self.root / f"{key}.f64le", self.root / f"{key}.meta.json"

    def put(self, record: dict, values: np.ndarray) -> str:
        self.root.mkdir(parents=True, exist_ok=True)
        key = params_key(record)
        payload = np.ascontiguousarray(values, dtype="<f8").tobytes()
        meta = {
            "format_version": FORMAT_VERSION,
            "params": record,
            "count": len(values),
            "sha256": hashlib.sha256(payload).hexdigest(),
        }
        data_path, meta_path = self._paths(key)
        _atomic_write(data_path, payload)
        _atomic_write(meta_path, json.dumps(meta, sort_keys=True, indent=1).encode())
        return key

    def get(self, record: dict) -> np.ndarray | None:
        """Cached values for ``record``, None on a miss; raises on a digest mismatch."""
        key = params_key(record)
        data_path, meta_path = self._paths(key)
        if not (data_path.exists() and meta_path.exists()):
            return None
        meta = json.loads(meta_path.read_text())
        if meta.get("format_version") != FORMAT_VERSION:
            return None
        payload = data_path.read_bytes()
        if hashlib.sha256(payload).hexdigest() != meta["sha256"]:
            raise CacheCorruptionError(f"cache entry {key} fails its digest check")
        return np.frombuffer(payload, dtype="<f8").copy()

    def entries(self) -> list[dict]:
        if not self.root.exists():
            return []
        out = []
        for meta_path in sorted(self.root.glob("*.meta.json")):
            meta = json.loads(meta_path.read_text())
            out.append({"key": meta_path.name[: -len(".meta.json")], **meta})
        return out

    def verify(self) -> list[str]:
        """Keys whose payload is missing or does not match its recorded digest."""
        bad = []
        for entry in self.entries():
            data_path, _ = self._paths(entry["key"])
            if not data_path.exists():
                bad.append(entry["key"])
                continue
            if hashlib.sha256(data_path.read_bytes()).hexdigest() != entry.get("sha256"):
                bad.append(entry["key"])
        return bad

    def purge(self, everything: bool = False) -> list[str]:
        """Remove entries from other format versions (or all entries), plus orphaned payloads."""
        removed = []
        for entry in self.entries():
            if everything or entry.get("format_version") != FORMAT_VERSION:
                for p in self._paths(entry["key"]):
                    p.unlink(missing_ok=True)
                removed.append(entry["key"])
        if self.root.exists():
            for data_path in self.root.glob("*.f64le"):
                if not data_path.with_name(data_path.name[: -len(".f64le")] + ".meta.json").exists():
                    data_path.unlink()
                    removed.append(data_path.stem)
        return removed
