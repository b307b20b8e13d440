"""On-disk cache of pooled scene embeddings.

File layout (integers little-endian):

    magic        4 bytes  b"CLTC"
    version      1 byte   currently 1
    dim          u32      feature width of every record
    kernel_code  u32      pooling kernel (0 encodes the infinite kernel)
    fingerprint  32 bytes encoder SHA-256 digest
    count        u64      number of records
    records      count times:
        scene_id    u64
        num_tokens  u32
        data        num_tokens * dim * float32, row-major
    crc32        u32      CRC-32 of the records region

A cache whose header does not match the requesting encoder fingerprint,
width, or kernel is stale: it is discarded with a warning and rebuilt, so
every lookup against it is a miss.  Corrupt files (bad magic, truncation,
checksum mismatch) are likewise discarded with a warning, never an error.
"""

from __future__ import annotations

import io
import logging
import os
import struct
import zlib

import torch

from scenefuse.encoder.pooling import PoolKernel
from scenefuse.errors import ShapeError

logger = logging.getLogger(__name__)

CACHE_MAGIC = b"CLTC"
CACHE_VERSION = 1
_HEADER = struct.Struct("<II32sQ")  # dim, kernel code, fingerprint, count


class EmbeddingCache:
    """Scene-id keyed store of pooled global feature tensors."""

    def __init__(self, path: str | os.PathLike, dim: int, kernel: PoolKernel,
                 fingerprint: bytes):
        if len(fingerprint) != 32:
            raise ShapeError(f"fingerprint must be 32 bytes, got {len(fingerprint)}")
        self.path = os.fspath(path)
        self.dim = int(dim)
        self.kernel = kernel
        self.fingerprint = bytes(fingerprint)
        self.entries: dict[int, torch.Tensor] = {}
        self.hits = 0
        self.misses = 0
        if os.path.exists(self.path):
            self._load()

    # -- stats ---------------------------------------------------------------

    def reset_stats(self) -> None:
        self.hits = 0
        self.misses = 0

    @property
    def hit_rate(self) -> float:
        total = self.hits + self.misses
        return self.hits / total if total else 0.0

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, scene_id: int) -> bool:
        return int(scene_id) in self.entries

    # -- lookup --------------------------------------------------------------

    def get(self, scene_id: int) -> torch.Tensor | None:
        entry = self.entries.get(int(scene_id))
        if entry is None:
            self.misses += 1
            return None
        self.hits += 1
        return entry.clone()

    def put(self, scene_id: int, tokens: torch.Tensor) -> None:
        if tokens.dim() != 2 or tokens.shape[1] != self.dim:
            raise ShapeError(
                f"cache expects [tokens, {self.dim}] entries, got {tuple(tokens.shape)}"
            )
        self.entries[int(scene_id)] = tokens.detach().to(torch.float32).contiguous().clone()

    # -- persistence ---------------------------------------------------------

    def save(self) -> None:
        payload = io.BytesIO()
        for scene_id in sorted(self.entries):
            tokens = self.entries[scene_id]
            payload.write(struct.pack("<QI", scene_id, tokens.shape[0]))
            payload.write(tokens.numpy().tobytes())
        body = payload.getvalue()
        buf = io.BytesIO()
        buf.write(CACHE_MAGIC)
        buf.write(struct.pack("<B", CACHE_VERSION))
        buf.write(_HEADER.pack(self.dim, self.kernel.code(), self.fingerprint,
                               len(self.entries)))
        buf.write(body)
        buf.write(struct.pack("<I", zlib.crc32(body)))
        tmp = self.path + ".tmp"
        os.makedirs(os.path.dirname(self.path) or ".", exist_ok=True)
        with open(tmp, "wb") as fh:
            fh.write(buf.getvalue())
        os.replace(tmp, self.path)

    def _load(self) -> None:
        try:
            with open(self.path, "rb") as fh:
                data = fh.read()
            entries = self._parse(data)
        except _StaleCache as exc:
            logger.warning("discarding stale embedding cache %s: %s", self.path, exc)
            return
        except _CorruptCache as exc:
            logger.warning("discarding corrupt embedding cache %s: %s", self.path, exc)
            return
        self.entries = entries

    def _parse(self, data: bytes) -> dict[int, torch.Tensor]:
        view = memoryview(data)
        header_len = 4 + 1 + _HEADER.size
        if len(view) < header_len + 4:
            raise _CorruptCache("file shorter than header")
        if bytes(view[:4]) != CACHE_MAGIC:
            raise _CorruptCache("bad magic")
        (version,) = struct.unpack("<B", view[4:5])
        if version != CACHE_VERSION:
            raise _CorruptCache(f"unsupported version {version}")
        dim, kernel_code, fingerprint, count = _HEADER.unpack(view[5:header_len])
        body = bytes(view[header_len:-4])
        (crc,) = struct.unpack("<I", view[-4:])
        if zlib.crc32(body) != crc:
            raise _CorruptCache("checksum mismatch")
        if fingerprint != self.fingerprint:
            raise _StaleCache("encoder fingerprint changed")
        if dim != self.dim:
            raise _StaleCache(f"feature width changed: file {dim}, expected {self.dim}")
        if kernel_code != self.kernel.code():
            raise _StaleCache(
                f"pool kernel changed: file {PoolKernel.from_code(kernel_code)}, "
                f"expected {self.kernel}"
            )
        entries: dict[int, torch.Tensor] = {}
        off = 0
        for _ in range(count):
            if off + 12 > len(body):
                raise _CorruptCache("truncated record header")
            scene_id, num_tokens = struct.unpack_from("<QI", body, off)
            off += 12
            nbytes = num_tokens * dim * 4
            if off + nbytes > len(body):
                raise _CorruptCache("truncated record data")
            tokens = torch.frombuffer(
                bytearray(body[off : off + nbytes]), dtype=torch.float32
            ).reshape(num_tokens, dim).clone()
            off += nbytes
            entries[scene_id] = tokens
        if off != len(body):
            raise _CorruptCache("trailing bytes after records")
        return entries


class _CorruptCache(Exception):
    pass


class _StaleCache(Exception):
    pass
