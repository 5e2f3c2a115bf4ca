import struct

import numpy as np
import pytest

from rolefuse.embeddings import (
    EmbeddingFormatError,
    EmbeddingTable,
    MissingEmbeddingError,
    concat,
    read_table,
    write_table,
)


def random_table(rng, dim=8, n=10):
    entries = {f"id{i}": rng.normal(size=dim) for i in range(n)}
    return EmbeddingTable(dim, entries)


class TestFormat:
    def test_empty_table_exact_size(self, tmp_path):
        p = tmp_path / "e.emb"
        write_table(EmbeddingTable(4, {}), p)
        assert p.stat().st_size == 20

    def test_single_entry_size(self, tmp_path):
        p = tmp_path / "e.emb"
        write_table(EmbeddingTable(2, {"a": np.array([1.0, 2.0])}), p)
        assert p.stat().st_size == 33

    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        table = random_table(rng)
        p = tmp_path / "e.emb"
        write_table(table, p)
        back = read_table(p)
        assert back.dim == table.dim
        assert back.ids() == table.ids()
        for key in table.ids():
            # exact at float32 precision
            np.testing.assert_array_equal(
                back.lookup(key), table.lookup(key).astype(np.float32).astype(np.float64)
            )

    def test_byte_deterministic(self, tmp_path):
        rng = np.random.default_rng(1)
        entries = {k: rng.normal(size=3) for k in ["z", "a", "m"]}
        p1, p2 = tmp_path / "a.emb", tmp_path / "b.emb"
        write_table(EmbeddingTable(3, entries), p1)
        write_table(EmbeddingTable(3, dict(reversed(list(entries.items())))), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "bad.emb"
        p.write_bytes(b"NOPE" + b"\x00" * 16)
        with pytest.raises(EmbeddingFormatError, match="magic"):
            read_table(p)

    def test_bad_version(self, tmp_path):
        p = tmp_path / "bad.emb"
        p.write_bytes(struct.pack("<4sIIQ", b"EMB1", 99, 4, 0))
        with pytest.raises(EmbeddingFormatError, match="version"):
            read_table(p)

    def test_truncated(self, tmp_path):
        rng = np.random.default_rng(2)
        p = tmp_path / "t.emb"
        write_table(random_table(rng, dim=4, n=3), p)
        p.write_bytes(p.read_bytes()[:-5])
        with pytest.raises(EmbeddingFormatError, match="truncated"):
            read_table(p)

    def test_non_finite_rejected_on_write(self):
        with pytest.raises(ValueError, match="non-finite"):
            EmbeddingTable(2, {"a": np.array([1.0, np.nan])})

    def test_utf8_ids(self, tmp_path):
        p = tmp_path / "u.emb"
        write_table(EmbeddingTable(1, {"héllo": np.array([1.0])}), p)
        assert read_table(p).ids() == ["héllo"]


class TestLookup:
    def test_present(self):
        t = EmbeddingTable(2, {"a": np.array([1.0, 2.0])}, name="ent")
        np.testing.assert_array_equal(t.lookup("a"), [1.0, 2.0])

    def test_absent_names_id(self):
        t = EmbeddingTable(2, {"a": np.array([1.0, 2.0])}, name="ent")
        with pytest.raises(MissingEmbeddingError, match="'missing'"):
            t.lookup("missing")

    def test_lookup_after_round_trip(self, tmp_path):
        t = EmbeddingTable(2, {"a": np.array([0.5, -0.5])})
        p = tmp_path / "e.emb"
        write_table(t, p)
        np.testing.assert_array_equal(read_table(p).lookup("a"), [0.5, -0.5])

    def test_wrong_dim_rejected(self):
        with pytest.raises(ValueError, match="shape"):
            EmbeddingTable(3, {"a": np.array([1.0])})


class TestConcat:
    def test_order(self):
        np.testing.assert_array_equal(concat([1], [2, 3]), [1, 2, 3])

    def test_empty_identity(self):
        np.testing.assert_array_equal(concat([4.0, 5.0], []), [4.0, 5.0])

    def test_length_additivity(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            a = rng.normal(size=int(rng.integers(0, 6)))
            b = rng.normal(size=int(rng.integers(0, 6)))
            assert len(concat(a, b)) == len(a) + len(b)
