"""Checksummed binary container for radial profiles and field snapshots."""

from __future__ import annotations

import enum
import json
import logging
from pathlib import Path
from typing import TYPE_CHECKING, Any, NamedTuple
from zlib import crc32

import bitstring
import numpy as np
from more_itertools import last

from zkcollide import ZKLabError, __version__
from zkcollide.ground_state import RadialProfile, TailModel
from zkcollide.spectral import Field2D, Grid2D

if TYPE_CHECKING:
    from numpy.typing import NDArray

logger = logging.getLogger(__name__)

_format_name = "zkcollide-snapshot"

# salts the checksum so containers of different format versions never validate
_magic_prefix = f"{_format_name} {__version__}".encode()

# guards against truncated files
_trailer = b"ZKCS"

_header_format = "uint:32, uint:8"
_header_bit_len = len(bitstring.pack(_header_format, 0, 0))
_meta_format = "uint:32, uint:32, floatle:64, floatle:64, floatle:64"
_meta_bit_len = len(bitstring.pack(_meta_format, 0, 0, 0.0, 0.0, 0.0))


class ChecksumMismatchError(ZKLabError):
    """Checksum mismatch error."""

    def __init__(self, message: str = "Snapshot checksum mismatch") -> None:
        """Init."""
        super().__init__(message)


class SerializationCheckMismatchError(ZKLabError):
    """Container truncated or inconsistent with its sidecar."""

    def __init__(self, message: str = "Snapshot trailer or metadata mismatch") -> None:
        """Init."""
        super().__init__(message)


class CRC32(int):
    """CRC32 of a payload salted with the format magic."""

    def __new__(cls, value: int) -> CRC32:
        """New."""
        if not isinstance(value, int):
            msg = "CRC32 must be an integer"
            raise TypeError(msg)
        if value < 0:
            msg = "CRC32 must be a positive integer"
            raise ValueError(msg)
        return super().__new__(cls, value)

    @classmethod
    def generate(cls, data: bytes) -> CRC32:
        return cls(crc32(data + _magic_prefix))


class Kind(enum.IntEnum):
    PROFILE = enum.auto()
    FIELD = enum.auto()


class Meta(NamedTuple):
    """Array shape and three kind-specific reals: (r_max, kappa, residual_tol) or (Lx, Ly, t)."""

    n0: int
    n1: int
    a: float
    b: float
    c: float


def _pack(kind: Kind, meta: Meta, body: NDArray[np.float64]) -> bytes:
    payload = bitstring.pack(_meta_format, *meta) + bitstring.Bits(
        bytes=np.ascontiguousarray(body, dtype="<f8").tobytes()
    )
    checksum = CRC32.generate(payload.tobytes())
    header = bitstring.pack(_header_format, checksum, kind)
    return (header + payload + bitstring.Bits(bytes=_trailer)).tobytes()


def _strip_trailer(data: bitstring.Bits) -> bitstring.Bits:
    trailer_bits = bitstring.Bits(bytes=_trailer)
    start_idx = max(len(data) - len(trailer_bits), 0)
    trailer_index = last(data.findall(trailer_bits, start=start_idx, bytealigned=True), None)
    if trailer_index is None:
        raise SerializationCheckMismatchError
    return data[:trailer_index]


def _unpack(raw: bytes, expected: Kind) -> tuple[Meta, NDArray[np.float64]]:
    """Validate trailer, checksum and kind; return the metadata and the flat body.

    Raises:
        SerializationCheckMismatchError: the trailer is missing or the kind is wrong.
        ChecksumMismatchError: the payload does not match its checksum.
    """
    data = _strip_trailer(bitstring.Bits(bytes=raw))
    header, payload = data[:_header_bit_len], data[_header_bit_len:]
    checksum, kind = header.unpack(_header_format)
    if CRC32.generate(payload.tobytes()) != checksum:
        raise ChecksumMismatchError
    if kind != expected:
        msg = f"container holds kind {kind}, expected {expected.name}"
        raise SerializationCheckMismatchError(msg)
    meta = Meta(*payload[:_meta_bit_len].unpack(_meta_format))
    body = np.frombuffer(payload[_meta_bit_len:].tobytes(), dtype="<f8").astype(np.float64)
    return meta, body


def encode_profile(p: RadialProfile) -> bytes:
    body = np.concatenate((p.q, p.dq, p.d2q))
    return _pack(Kind.PROFILE, Meta(p.nodes.size, 3, p.r_max, p.tail.kappa, p.residual_tol), body)


def decode_profile(raw: bytes) -> RadialProfile:
    meta, body = _unpack(raw, Kind.PROFILE)
    n = meta.n0
    if body.size != 3 * n:
        msg = f"profile body holds {body.size} values, expected {3 * n}"
        raise SerializationCheckMismatchError(msg)
    q, dq, d2q = body.reshape(3, n)
    return RadialProfile(
        r_max=meta.a,
        nodes=np.linspace(0.0, meta.a, n),
        q=q.copy(),
        dq=dq.copy(),
        d2q=d2q.copy(),
        tail=TailModel(meta.b),
        residual_tol=meta.c,
    )


def encode_field(v: Field2D, t: float) -> bytes:
    g = v.grid
    return _pack(Kind.FIELD, Meta(g.Nx, g.Ny, g.Lx, g.Ly, t), v.values)


def decode_field(raw: bytes) -> tuple[Field2D, float]:
    meta, body = _unpack(raw, Kind.FIELD)
    grid = Grid2D(Lx=meta.a, Ly=meta.b, Nx=meta.n0, Ny=meta.n1)
    if body.size != grid.Nx * grid.Ny:
        msg = f"field body holds {body.size} values for a {grid.Nx}x{grid.Ny} grid"
        raise SerializationCheckMismatchError(msg)
    return Field2D(grid, body.reshape(grid.shape).copy()), meta.c


def _sidecar(path: Path) -> Path:
    return path.with_suffix(path.suffix + ".json")


def dump_field(path: Path | str, v: Field2D, t: float, **extra: Any) -> Path:
    """Write the container and its JSON sidecar (grid, time, version and ``extra``)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_field(v, t))
    g = v.grid
    meta = {"Lx": g.Lx, "Ly": g.Ly, "Nx": g.Nx, "Ny": g.Ny, "t": t, "version": __version__, **extra}
    _sidecar(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    logger.info(f"wrote field snapshot t={t:g} to {path}")
    return path


def load_field(path: Path | str) -> tuple[Field2D, float, dict[str, Any]]:
    """Read a snapshot and check it against its sidecar when one exists.

    Raises:
        ChecksumMismatchError: corrupted body.
        SerializationCheckMismatchError: truncated file or sidecar disagreeing with the header.
    """
    path = Path(path)
    v, t = decode_field(path.read_bytes())
    side = _sidecar(path)
    meta: dict[str, Any] = {}
    if side.exists():
        meta = json.loads(side.read_text())
        g = v.grid
        if (meta.get("Nx"), meta.get("Ny"), meta.get("Lx"), meta.get("Ly"), meta.get("t")) != (
            g.Nx,
            g.Ny,
            g.Lx,
            g.Ly,
            t,
        ):
            msg = f"sidecar {side} disagrees with the container header"
            raise SerializationCheckMismatchError(msg)
    return v, t, meta


def dump_profile(path: Path | str, p: RadialProfile) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_profile(p))
    logger.info(f"cached profile ({p.nodes.size} nodes) at {path}")
    return path


def load_profile(path: Path | str) -> RadialProfile:
    return decode_profile(Path(path).read_bytes())
