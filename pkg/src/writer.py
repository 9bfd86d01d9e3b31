"""Output writer: CSV, text and raster files under one directory, with a hash manifest."""

import hashlib
import json
import logging
from pathlib import Path
from typing import Dict, Optional

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"


def file_sha256(path: Path) -> str:
    """Hex SHA-256 of a file's bytes."""
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def pgm_bytes(levels: np.ndarray) -> bytes:
    """Binary PGM (P5) encoding of an 8-bit raster."""
    levels = np.asarray(levels, dtype=np.uint8)
    height, width = levels.shape
    return f"P5\n{width} {height}\n255\n".encode("ascii") + levels.tobytes()


class Writer:
    """Writes every output of a command under out_dir and records file hashes."""

    def __init__(self, out_dir: str = "out"):
        """
        Initialize the writer.

        Args:
            out_dir: Output directory, created if needed
        """
        self.out_dir = Path(out_dir)
        self.hashes: Dict[str, str] = {}

        self.out_dir.mkdir(parents=True, exist_ok=True)

    def path(self, name: str) -> Path:
        path = self.out_dir / name
        path.parent.mkdir(parents=True, exist_ok=True)
        return path

    def record(self, name: str) -> Path:
        path = self.out_dir / name
        self.hashes[name] = file_sha256(path)
        logger.debug(f"Wrote {path}")
        return path

    def write_csv(self, name: str, frame: pd.DataFrame) -> Path:
        """
        Write a frame as CSV with full-precision floats and LF line endings.

        Args:
            name: File name relative to out_dir
            frame: Frame to write (index not written)

        Returns:
            Path of the written file
        """
        frame.to_csv(self.path(name), index=False, lineterminator="\n")
        return self.record(name)

    def write_text(self, name: str, text: str) -> Path:
        with open(self.path(name), "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
        return self.record(name)

    def write_json(self, name: str, payload: dict) -> Path:
        return self.write_text(name, json.dumps(payload, indent=2, sort_keys=True, default=str) + "\n")

    def write_pgm(self, name: str, levels: np.ndarray) -> Path:
        with open(self.path(name), "wb") as f:
            f.write(pgm_bytes(levels))
        return self.record(name)

    def write_manifest(self, extra: Optional[dict] = None) -> Path:
        """
        Write manifest.json listing every recorded file and its SHA-256.

        Args:
            extra: Additional top-level entries

        Returns:
            Path of the manifest
        """
        payload = dict(extra or {})
        payload["files"] = dict(sorted(self.hashes.items()))
        path = self.out_dir / MANIFEST_NAME
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(json.dumps(payload, indent=2, sort_keys=True, default=str) + "\n")
        return path

    def get_written_count(self) -> int:
        """Number of files recorded so far."""
        return len(self.hashes)
