import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from tests.util import SMALL_GRID, gaussian
from zkcollide.codec import (
    CRC32,
    ChecksumMismatchError,
    SerializationCheckMismatchError,
    decode_field,
    decode_profile,
    dump_field,
    dump_profile,
    encode_field,
    encode_profile,
    load_field,
    load_profile,
)
from zkcollide.ground_state import RadialProfile, TailModel
from zkcollide.spectral import Field2D, Grid2D


def _synthetic_profile() -> RadialProfile:
    nodes = np.linspace(0.0, 10.0, 101)
    return RadialProfile(
        r_max=10.0,
        nodes=nodes,
        q=np.exp(-nodes),
        dq=-np.exp(-nodes),
        d2q=np.exp(-nodes),
        tail=TailModel(1.25),
        residual_tol=1e-9,
    )


def test_crc32() -> None:
    with pytest.raises(TypeError):
        CRC32(1.0)  # type: ignore[arg-type]
    with pytest.raises(ValueError, match="positive"):
        CRC32(-1)
    assert CRC32.generate(b"abc") == CRC32.generate(b"abc")
    assert CRC32.generate(b"abc") != CRC32.generate(b"abd")


def test_profile_round_trip(tmp_path) -> None:
    p = _synthetic_profile()
    loaded = load_profile(dump_profile(tmp_path / "profile.zkp", p))
    assert loaded.r_max == p.r_max
    assert loaded.tail == p.tail
    assert loaded.residual_tol == p.residual_tol
    for name in ("nodes", "q", "dq", "d2q"):
        assert np.array_equal(getattr(loaded, name), getattr(p, name))


def test_solved_profile_round_trip(profile) -> None:
    loaded = decode_profile(encode_profile(profile))
    assert np.array_equal(loaded.q, profile.q)
    assert np.array_equal(loaded.nodes, profile.nodes)
    assert loaded.tail.kappa == profile.tail.kappa


def test_field_dump_and_load_with_sidecar(tmp_path) -> None:
    v = gaussian(SMALL_GRID, center=(1.0, -2.0))
    path = dump_field(tmp_path / "snap" / "snap-000001.zkf", v, 1.25, run_key="abc", mu0=0.15)
    loaded, t, meta = load_field(path)
    assert t == 1.25
    assert loaded.grid == SMALL_GRID
    assert np.array_equal(loaded.values, v.values)
    assert meta["run_key"] == "abc"
    assert meta["mu0"] == 0.15
    assert meta["Nx"] == SMALL_GRID.Nx


def test_field_without_sidecar(tmp_path) -> None:
    path = tmp_path / "bare.zkf"
    path.write_bytes(encode_field(gaussian(SMALL_GRID), 0.5))
    _, t, meta = load_field(path)
    assert t == 0.5
    assert meta == {}


def test_flipped_byte_is_detected() -> None:
    raw = bytearray(encode_field(gaussian(SMALL_GRID), 0.0))
    raw[len(raw) // 2] ^= 0xFF
    with pytest.raises(ChecksumMismatchError):
        decode_field(bytes(raw))


def test_truncated_container_is_detected() -> None:
    raw = encode_field(gaussian(SMALL_GRID), 0.0)
    with pytest.raises(SerializationCheckMismatchError):
        decode_field(raw[:-2])


def test_wrong_kind_is_detected() -> None:
    raw = encode_field(gaussian(SMALL_GRID), 0.0)
    with pytest.raises(SerializationCheckMismatchError, match="expected PROFILE"):
        decode_profile(raw)


def test_edited_sidecar_is_detected(tmp_path) -> None:
    path = dump_field(tmp_path / "snap.zkf", gaussian(SMALL_GRID), 2.0)
    side = tmp_path / "snap.zkf.json"
    meta = json.loads(side.read_text())
    meta["t"] = 3.0
    side.write_text(json.dumps(meta))
    with pytest.raises(SerializationCheckMismatchError, match="disagrees"):
        load_field(path)


@given(
    st.sampled_from([(2, 4), (4, 4), (8, 2), (16, 8)]),
    st.floats(min_value=-1e6, max_value=1e6),
    st.data(),
)
def test_field_round_trip(shape, t, data) -> None:
    grid = Grid2D(Lx=3.0, Ly=1.5, Nx=shape[0], Ny=shape[1])
    values = data.draw(arrays(np.float64, shape, elements=st.floats(-1e3, 1e3)))
    v, t_out = decode_field(encode_field(Field2D(grid, values), t))
    assert t_out == t
    assert v.grid == grid
    assert np.array_equal(v.values, values)
