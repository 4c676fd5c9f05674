"""Binary and CSV serialization of snapshots.

Binary layout (little-endian)::

    b"PFRO"  u32 schema_version  u32 dimension  u64 n_sites  u64 n_segments
    32-byte sha256 of the canonical config JSON
    u32 json_length  json {"config": ..., "stats": ...}
    n_sites   x (u64 id, u64 arrival_index, u8 color, d*f64 position,
                 f64 arrival_time or NaN, u64 parent_id or 2**64-1)
    n_segments x (u64 id, d*f64 a, d*f64 b, u8 color, u64 owner_site)
"""

import hashlib
import io
import json
import struct

import numpy as np

from .errors import SnapshotFormatError
from .process import SCHEMA_VERSION, ProcessConfig, ProcessStats, Snapshot

MAGIC = b"PFRO"
PARENT_SENTINEL = np.uint64(2 ** 64 - 1)
_FIXED = struct.Struct("<4sIIQQ32sI")


def site_dtype(d):
    return np.dtype([("id", "<u8"), ("arrival_index", "<u8"), ("color", "u1"),
                     ("position", "<f8", (d,)), ("arrival_time", "<f8"),
                     ("parent_id", "<u8")])


def segment_dtype(d):
    return np.dtype([("id", "<u8"), ("a", "<f8", (d,)), ("b", "<f8", (d,)),
                     ("color", "u1"), ("owner_site", "<u8")])


def _header_json(snap):
    doc = {"config": snap.config.to_dict(),
           "stats": {"ties": snap.stats.ties, "redraws": snap.stats.redraws}}
    return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()


def snapshot_bytes(snap: Snapshot) -> bytes:
    d = snap.dimension
    n = snap.n_sites
    n_seg = 0 if snap.seg_a is None else snap.seg_a.shape[0]
    meta = _header_json(snap)
    digest = hashlib.sha256(snap.config.canonical_json().encode()).digest()
    buf = io.BytesIO()
    buf.write(_FIXED.pack(MAGIC, SCHEMA_VERSION, d, n, n_seg, digest, len(meta)))
    buf.write(meta)

    rec = np.empty(n, site_dtype(d))
    rec["id"] = np.arange(n, dtype=np.uint64)
    rec["arrival_index"] = snap.arrival_index
    rec["color"] = snap.colors
    rec["position"] = snap.positions
    rec["arrival_time"] = snap.times
    parent = snap.parent.astype(np.int64)
    rec["parent_id"] = np.where(parent < 0, PARENT_SENTINEL, parent.astype(np.uint64))
    buf.write(rec.tobytes())

    if n_seg:
        seg = np.empty(n_seg, segment_dtype(d))
        seg["id"] = np.arange(n_seg, dtype=np.uint64)
        seg["a"] = snap.seg_a
        seg["b"] = snap.seg_b
        seg["color"] = snap.colors[:n_seg]
        seg["owner_site"] = np.arange(n_seg, dtype=np.uint64)
        buf.write(seg.tobytes())
    return buf.getvalue()


def write_snapshot(snap: Snapshot, path) -> None:
    with open(path, "wb") as fh:
        fh.write(snapshot_bytes(snap))


def snapshot_from_bytes(data: bytes) -> Snapshot:
    if len(data) < _FIXED.size:
        raise SnapshotFormatError("file too short for a snapshot header")
    magic, version, d, n, n_seg, digest, meta_len = _FIXED.unpack_from(data, 0)
    if magic != MAGIC:
        raise SnapshotFormatError(f"bad magic {magic!r}")
    if version != SCHEMA_VERSION:
        raise SnapshotFormatError(f"unsupported schema version {version}")
    at = _FIXED.size
    try:
        meta = json.loads(data[at:at + meta_len])
    except ValueError as exc:
        raise SnapshotFormatError("corrupt header JSON") from exc
    at += meta_len
    config = ProcessConfig.from_dict(meta["config"])
    if hashlib.sha256(config.canonical_json().encode()).digest() != digest:
        raise SnapshotFormatError("config hash mismatch between header and config block")

    sdt = site_dtype(d)
    need = at + n * sdt.itemsize + n_seg * segment_dtype(d).itemsize
    if len(data) != need:
        raise SnapshotFormatError(f"expected {need} bytes, found {len(data)}")
    rec = np.frombuffer(data, sdt, count=n, offset=at)
    at += n * sdt.itemsize
    parent = rec["parent_id"]
    parent = np.where(parent == PARENT_SENTINEL, -1, parent.astype(np.int64))
    segs = None
    if n_seg:
        seg = np.frombuffer(data, segment_dtype(d), count=n_seg, offset=at)
        segs = (seg["a"].copy(), seg["b"].copy())
    stats = ProcessStats(**meta.get("stats", {}))
    return Snapshot(config, rec["position"].copy(), rec["color"].astype(np.int8),
                    parent, rec["arrival_time"].copy(), segs, stats=stats)


def read_snapshot(path) -> Snapshot:
    with open(path, "rb") as fh:
        return snapshot_from_bytes(fh.read())


def write_sites_csv(snap: Snapshot, path) -> None:
    d = snap.dimension
    cols = ["id", "arrival_index", "color"] + [f"x{i}" for i in range(d)] + \
        ["arrival_time", "parent_id"]
    names = np.array(["red", "blue"])
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        ai = snap.arrival_index
        for i in range(snap.n_sites):
            t = snap.times[i]
            p = snap.parent[i]
            row = [str(i), str(ai[i]), names[snap.colors[i]]]
            row += [repr(float(v)) for v in snap.positions[i]]
            row.append("" if np.isnan(t) else repr(float(t)))
            row.append("" if p < 0 else str(p))
            fh.write(",".join(row) + "\n")
