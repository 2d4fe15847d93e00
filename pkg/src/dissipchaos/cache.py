"""On-disk cache of Liouvillian eigendecompositions.

File layout (little-endian)::

    8 bytes   magic  b"DCSPEC\\x00\\x01"
    4 bytes   uint32 format version
    4 bytes   uint32 header length h
    h bytes   UTF-8 JSON header (model_hash, n, factor_dims, steady_index, metadata)
    16n       complex128 eigenvalues
    16n^2     complex128 right eigenvectors (C order, columns are vec(eta_j))
    16n^2     complex128 left eigenvectors
    32 bytes  SHA-256 of everything above

Files are keyed by :meth:`ModelSpec.hash`. A file that fails any check is
reported as corrupt; callers recompute and overwrite it.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import struct
import warnings
from pathlib import Path

import numpy as np

from .liouvillian import LiouvillianSpectrum, diagonalize
from .models import ModelSpec
from .operators import HilbertSpace

log = logging.getLogger(__name__)

MAGIC = b"DCSPEC\x00\x01"
VERSION = 1
CACHE_ENV = "DISSIPCHAOS_CACHE_DIR"
_CHUNK = 1 << 26


class CacheCorruptError(Exception):
    pass


def default_cache_dir() -> Path:
    env = os.environ.get(CACHE_ENV)
    if env:
        return Path(env)
    return Path.home() / ".cache" / "dissipchaos"


def cache_path(model_hash: str, cache_dir=None) -> Path:
    root = Path(cache_dir) if cache_dir is not None else default_cache_dir()
    return root / f"{model_hash}.spec"


def _write_array(f, h, a: np.ndarray):
    buf = memoryview(np.ascontiguousarray(a, dtype="<c16")).cast("B")
    for start in range(0, len(buf), _CHUNK):
        part = buf[start:start + _CHUNK]
        h.update(part)
        f.write(part)


def _read_array(f, h, shape) -> np.ndarray:
    a = np.empty(shape, dtype="<c16")
    buf = memoryview(a).cast("B")
    pos = 0
    while pos < len(buf):
        got = f.readinto(buf[pos:pos + _CHUNK])
        if not got:
            raise CacheCorruptError("truncated payload")
        h.update(buf[pos:pos + got])
        pos += got
    return a


def save_spectrum(spec: LiouvillianSpectrum, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = json.dumps({
        "model_hash": spec.model_hash,
        "n": spec.size,
        "factor_dims": list(spec.space.factor_dims),
        "steady_index": spec.steady_index,
        "metadata": spec.metadata,
    }).encode()
    tmp = path.with_suffix(path.suffix + ".tmp")
    h = hashlib.sha256()
    with open(tmp, "wb") as f:
        pre = MAGIC + struct.pack("<II", VERSION, len(header)) + header
        h.update(pre)
        f.write(pre)
        for a in (spec.eigenvalues, spec.right, spec.left):
            _write_array(f, h, a)
        f.write(h.digest())
    os.replace(tmp, path)
    return path


def load_spectrum(path, expected_hash: str | None = None) -> LiouvillianSpectrum:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        magic = f.read(8)
        if magic != MAGIC:
            raise CacheCorruptError("bad magic bytes")
        raw = f.read(8)
        if len(raw) != 8:
            raise CacheCorruptError("truncated header")
        version, hlen = struct.unpack("<II", raw)
        if version != VERSION:
            raise CacheCorruptError(f"unsupported cache version {version}")
        header_bytes = f.read(hlen)
        h.update(magic + raw + header_bytes)
        try:
            header = json.loads(header_bytes)
            n = int(header["n"])
        except (ValueError, KeyError) as exc:
            raise CacheCorruptError(f"unreadable header: {exc}") from None
        if expected_hash is not None and header["model_hash"] != expected_hash:
            raise CacheCorruptError("model hash mismatch")
        w = _read_array(f, h, (n,))
        right = _read_array(f, h, (n, n))
        left = _read_array(f, h, (n, n))
        digest = f.read(32)
        if digest != h.digest() or f.read(1):
            raise CacheCorruptError("checksum mismatch")
    return LiouvillianSpectrum(
        w, right, left, int(header["steady_index"]),
        HilbertSpace(header["factor_dims"]), header["model_hash"], header.get("metadata", {}),
    )


def cached_spectrum(model: ModelSpec, cache_dir=None, *, force: bool = False,
                    use_cache: bool = True) -> LiouvillianSpectrum:
    """Load the eigendecomposition of ``model`` from cache, computing and storing it on a miss."""
    key = model.hash()
    path = cache_path(key, cache_dir)
    if use_cache and path.exists():
        try:
            spec = load_spectrum(path, expected_hash=key)
            log.info("spectrum cache hit: %s", path)
            return spec
        except (CacheCorruptError, OSError) as exc:
            warnings.warn(f"corrupt spectrum cache {path} ({exc}); recomputing", RuntimeWarning)
    log.info("spectrum cache miss: diagonalizing %s (dim %d)", model.name, model.dim)
    spec = diagonalize(model, force=force)
    if use_cache:
        try:
            save_spectrum(spec, path)
        except OSError as exc:
            log.warning("could not write spectrum cache %s: %s", path, exc)
    return spec
