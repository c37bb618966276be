"""Content-addressed on-disk store for simulation estimates.

Each entry lives in ``<root>/objects/<sha256>.json`` and is listed in
``<root>/index.json``.  Writes go through a temporary file and a rename
under a file lock, so concurrent readers never see partial files.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from pathlib import Path

from filelock import FileLock


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=True)


def content_hash(key: dict) -> str:
    return hashlib.sha256(canonical_json(key).encode()).hexdigest()


def _atomic_write(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class ResultCache:
    def __init__(self, root):
        self.root = Path(root)
        (self.root / "objects").mkdir(parents=True, exist_ok=True)
        self._lock = FileLock(str(self.root / ".lock"))
        self._index = self.root / "index.json"

    def _path(self, digest: str) -> Path:
        return self.root / "objects" / f"{digest}.json"

    def get(self, key: dict):
        """Stored value for ``key``, or None.  Entries whose stored key differs are ignored."""
        path = self._path(content_hash(key))
        try:
            entry = json.loads(path.read_text())
        except (FileNotFoundError, json.JSONDecodeError):
            return None
        if entry.get("key") != json.loads(canonical_json(key)):
            return None
        return entry["value"]

    def put(self, key: dict, value) -> str:
        digest = content_hash(key)
        text = json.dumps({"key": key, "value": value}, sort_keys=True, indent=1)
        with self._lock:
            _atomic_write(self._path(digest), text)
            index = self.index()
            index[digest] = key
            _atomic_write(self._index, json.dumps(index, sort_keys=True, indent=1))
        return digest

    def index(self) -> dict:
        try:
            return json.loads(self._index.read_text())
        except FileNotFoundError:
            return {}

    def __len__(self) -> int:
        return len(self.index())
