"""Binary checkpoint format for the two networks and their optimizer state.

Layout: magic b"DGC1", format version (u32 LE), then a sequence of tensor
records, then a CRC-32 (u32 LE) of every record byte. One record is:

    name_len u32 | name UTF-8 | rank u32 | dims u32 * rank | f32 LE data

Parameter values are stored under "G.<name>"/"D.<name>"; optimizer moments
follow as "<name>.m1"/"<name>.m2" plus a one-element "<name>.t" step
counter (needed to resume the bias correction exactly); batch-norm running
statistics appear as "<name>.running_mean"/"<name>.running_var"; trainer
counters travel as one-element "meta.*" records.

Values are quantized to 32-bit floats, so training at float32 width makes
save -> load -> save byte-identical and resume bit-exact.
"""

from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np

from .engine import default_dtype
from .errors import ChecksumError, FormatError, ShapeError, VersionError
from .networks import Discriminator, Generator, NetworkSpec, build_discriminator, build_generator
from .rng import derive_rng

MAGIC = b"DGC1"
VERSION = 1


def _pack_record(name: str, array: np.ndarray) -> bytes:
    data = np.ascontiguousarray(array, dtype="<f4")
    encoded = name.encode("utf-8")
    head = struct.pack("<I", len(encoded)) + encoded
    head += struct.pack("<I", data.ndim)
    head += struct.pack(f"<{data.ndim}I", *data.shape) if data.ndim else b""
    return head + data.tobytes()


def _iter_net_records(prefix: str, net):
    for p in net.parameters():
        yield f"{prefix}.{p.name}", p.value.data
        yield f"{prefix}.{p.name}.m1", p.first_moment
        yield f"{prefix}.{p.name}.m2", p.second_moment
        yield f"{prefix}.{p.name}.t", np.array([p.step_count], dtype=np.float64)
    for name, stats in net.stats.items():
        if stats.populated():
            yield f"{prefix}.{name}.running_mean", stats.mean
            yield f"{prefix}.{name}.running_var", stats.var


def save_checkpoint(gen: Generator, disc: Discriminator, path, extra: dict | None = None) -> Path:
    """Write both networks, optimizer moments, and optional meta.* scalars."""
    path = Path(path)
    payload = bytearray()
    for name, array in _iter_net_records("G", gen):
        payload += _pack_record(name, array)
    for name, array in _iter_net_records("D", disc):
        payload += _pack_record(name, array)
    for key, value in (extra or {}).items():
        payload += _pack_record(f"meta.{key}", np.array([value], dtype=np.float64))
    blob = MAGIC + struct.pack("<I", VERSION) + bytes(payload) + struct.pack("<I", zlib.crc32(bytes(payload)))
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(blob)
    return path


def read_records(path) -> dict[str, np.ndarray]:
    """Parse and CRC-verify a checkpoint into {name: float32 array}."""
    blob = Path(path).read_bytes()
    if len(blob) < 12:
        raise FormatError(f"{path}: too short to be a checkpoint")
    if blob[:4] != MAGIC:
        raise FormatError(f"{path}: bad magic {blob[:4]!r}")
    (version,) = struct.unpack("<I", blob[4:8])
    if version != VERSION:
        raise VersionError(f"{path}: format version {version}, expected {VERSION}")
    payload, (stored_crc,) = blob[8:-4], struct.unpack("<I", blob[-4:])
    if zlib.crc32(payload) != stored_crc:
        raise ChecksumError(f"{path}: CRC mismatch (truncated or corrupted)")

    records: dict[str, np.ndarray] = {}
    offset = 0
    try:
        while offset < len(payload):
            (name_len,) = struct.unpack_from("<I", payload, offset)
            offset += 4
            name = payload[offset:offset + name_len].decode("utf-8")
            offset += name_len
            (rank,) = struct.unpack_from("<I", payload, offset)
            offset += 4
            dims = struct.unpack_from(f"<{rank}I", payload, offset) if rank else ()
            offset += 4 * rank
            count = int(np.prod(dims)) if dims else 1
            data = np.frombuffer(payload, dtype="<f4", count=count, offset=offset).reshape(dims)
            offset += 4 * count
            records[name] = data
    except (struct.error, ValueError) as exc:
        raise FormatError(f"{path}: malformed record at byte {offset}: {exc}") from exc
    return records


def _fill_net(prefix: str, net, records: dict[str, np.ndarray], consumed: set) -> None:
    for p in net.parameters():
        base = f"{prefix}.{p.name}"
        for key, target in ((base, "value"), (f"{base}.m1", "m1"), (f"{base}.m2", "m2")):
            if key not in records:
                raise ShapeError(f"checkpoint is missing tensor {key!r}")
            stored = records[key]
            if tuple(stored.shape) != tuple(p.value.shape):
                raise ShapeError(
                    f"checkpoint tensor {key!r} has shape {tuple(stored.shape)}, "
                    f"expected {tuple(p.value.shape)}")
            consumed.add(key)
            arr = stored.astype(default_dtype())
            if target == "value":
                p.value.data = arr
            elif target == "m1":
                p.first_moment = arr
            else:
                p.second_moment = arr
        step_key = f"{base}.t"
        if step_key not in records:
            raise ShapeError(f"checkpoint is missing tensor {step_key!r}")
        consumed.add(step_key)
        p.step_count = int(records[step_key].reshape(-1)[0])
    for name, stats in net.stats.items():
        mean_key = f"{prefix}.{name}.running_mean"
        var_key = f"{prefix}.{name}.running_var"
        if mean_key in records:
            if var_key not in records:
                raise ShapeError(f"checkpoint has {mean_key!r} but is missing {var_key!r}")
            consumed.add(mean_key)
            consumed.add(var_key)
            stats.mean = records[mean_key].astype(default_dtype())
            stats.var = records[var_key].astype(default_dtype())


def load_checkpoint(path, gen_spec: NetworkSpec, disc_spec: NetworkSpec):
    """Rebuild (generator, discriminator, meta) from a checkpoint.

    Shapes are checked against freshly built networks for the given specs;
    the first disagreement (or stray tensor) raises a ShapeError naming it.
    """
    records = read_records(path)
    gen = build_generator(gen_spec, derive_rng(0, 0))
    disc = build_discriminator(disc_spec, derive_rng(0, 1))
    consumed: set = set()
    _fill_net("G", gen, records, consumed)
    _fill_net("D", disc, records, consumed)
    meta: dict[str, float] = {}
    for name, data in records.items():
        if name.startswith("meta."):
            meta[name[len("meta."):]] = float(data.reshape(-1)[0])
            consumed.add(name)
    unknown = [name for name in records if name not in consumed]
    if unknown:
        raise ShapeError(f"checkpoint holds tensors unknown to this spec: {unknown[:5]}")
    return gen, disc, meta
