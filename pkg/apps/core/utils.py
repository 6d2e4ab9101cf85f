# ==============================================
# CORE UTILITIES
# ==============================================
"""
Utility functions used across the toolkit: seed derivation,
atomic file writes, hashing and CSV output.
"""

import csv
import hashlib
import json
import os
import tempfile
from contextlib import contextmanager
from pathlib import Path
from typing import Iterable, Sequence


def calculate_hash(data: bytes) -> str:
    """Calculate SHA-256 hash of data."""
    return hashlib.sha256(data).hexdigest()


def config_hash(resolved: dict) -> str:
    """Stable hash of a resolved config (sorted keys, compact separators)."""
    payload = json.dumps(resolved, sort_keys=True, separators=(',', ':'))
    return calculate_hash(payload.encode('utf-8'))


def derive_seed(root: int, component: str, index: int = 0) -> int:
    """
    Derive a child seed from the root seed by name.

    The first 8 bytes of SHA-256("{root}:{component}:{index}") are read
    as an unsigned big-endian integer, so derivation does not depend on
    platform or call order.
    """
    digest = hashlib.sha256(f"{root}:{component}:{index}".encode('utf-8')).digest()
    return int.from_bytes(digest[:8], 'big')


@contextmanager
def atomic_write(path, mode: str = 'wb', encoding: str = None):
    """
    Write a file atomically: temp file in the same directory, then rename.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=f'.{path.name}.', dir=path.parent)
    try:
        with os.fdopen(fd, mode, encoding=encoding, newline='' if 'b' not in mode else None) as handle:
            yield handle
            handle.flush()
            os.fsync(handle.fileno())
        os.replace(tmp_name, path)
    except BaseException:
        try:
            os.unlink(tmp_name)
        except FileNotFoundError:
            pass
        raise


def write_json(path, data: dict):
    """Write pretty JSON atomically with sorted keys."""
    with atomic_write(path, 'w', encoding='utf-8') as handle:
        json.dump(data, handle, indent=2, sort_keys=True)
        handle.write('\n')


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]):
    """
    Write a CSV atomically. Floats are written with repr() so they
    round-trip exactly.
    """
    with atomic_write(path, 'w', encoding='utf-8') as handle:
        writer = csv.writer(handle, lineterminator='\n')
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) if isinstance(v, float) else v for v in row])


def read_csv(path) -> list[dict]:
    """Read a CSV written by write_csv into a list of dicts (strings)."""
    with open(path, newline='', encoding='utf-8') as handle:
        return list(csv.DictReader(handle))
