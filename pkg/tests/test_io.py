import struct

import numpy as np
import pytest

from repreli import io
from repreli.errors import CorruptFile, FormatError, InvalidData
from repreli.mixture import fit_gmm, fit_vmf_mixture
from repreli.downstream import LinearHead
from repreli.tensor import normalize_rows


@pytest.mark.parametrize("dtype", ["f4", "f8"])
def test_embedding_round_trip(tmp_path, rng, dtype):
    x = rng.standard_normal((7, 3))
    p = tmp_path / "x.emb"
    io.write_embeddings(x, p, dtype)
    y = io.read_embeddings(p)
    np.testing.assert_allclose(y, x.astype(dtype))


def test_csv_round_trip(tmp_path, rng):
    x = rng.standard_normal((4, 2))
    p = tmp_path / "x.csv"
    io.write_embeddings(x, p)
    np.testing.assert_array_equal(io.read_embeddings(p), x)


def test_bad_magic_truncated_and_nan(tmp_path, rng):
    p = tmp_path / "x.emb"
    io.write_embeddings(rng.standard_normal((3, 3)), p)
    raw = p.read_bytes()
    (tmp_path / "magic.emb").write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(FormatError):
        io.read_embeddings(tmp_path / "magic.emb")
    (tmp_path / "short.emb").write_bytes(raw[:-5])
    with pytest.raises(CorruptFile):
        io.read_embeddings(tmp_path / "short.emb")
    (tmp_path / "hdr.emb").write_bytes(raw[:10])
    with pytest.raises(CorruptFile):
        io.read_embeddings(tmp_path / "hdr.emb")
    bad = np.ones((2, 2))
    bad[1, 1] = np.nan
    io.write_embeddings(bad, tmp_path / "nan.emb")
    with pytest.raises(InvalidData):
        io.read_embeddings(tmp_path / "nan.emb")


def test_header_layout(tmp_path):
    p = tmp_path / "x.emb"
    io.write_embeddings(np.zeros((2, 5)), p, "f4")
    magic, version, dtype, n, d = struct.unpack("<4sHBQQ", p.read_bytes()[:23])
    assert (magic, n, d) == (b"EMB1", 2, 5)


def test_labels_round_trip(tmp_path):
    io.write_labels([0, 3, 2], tmp_path / "l.txt")
    np.testing.assert_array_equal(io.read_labels(tmp_path / "l.txt"), [0, 3, 2])
    (tmp_path / "bad.txt").write_text("1\nx\n")
    with pytest.raises(FormatError):
        io.read_labels(tmp_path / "bad.txt")


def test_table_round_trip(tmp_path):
    text = io.write_table(tmp_path / "t.csv", ("a", "b"), [(1, io.fmt(0.1)), (2, io.fmt(1 / 3))])
    assert text.startswith("a,b\n1,0.1\n")
    rows = io.read_table(tmp_path / "t.csv")
    assert float(rows[1]["b"]) == 1 / 3


def test_model_blob_round_trip(tmp_path, rng):
    x = rng.standard_normal((60, 3))
    g, _ = fit_gmm(x, 2, seed=0)
    v, _ = fit_vmf_mixture(normalize_rows(x), 2, seed=0)
    h = LinearHead(rng.standard_normal((2, 3)), rng.standard_normal(2), member=1)
    p = tmp_path / "m.blob"
    io.save_models([g, v, h], p)
    g2, v2, h2 = io.load_models(p)
    np.testing.assert_array_equal(g2.means, g.means)
    np.testing.assert_array_equal(v2.concentrations, v.concentrations)
    np.testing.assert_array_equal(h2.weight, h.weight)
    assert h2.member == 1
    p.write_bytes(p.read_bytes()[:-8])
    with pytest.raises(CorruptFile):
        io.load_models(p)
