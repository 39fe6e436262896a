import numpy as np
import pytest

from tgv.data import (
    DatasetSchema,
    from_synth,
    load_embeddings,
    read_table,
    save_embeddings,
    write_table,
)
from tgv.errors import FormatError, NonFiniteValue, UnknownAttribute, UnknownShape
from tgv.synthdata import SynthConfig, generate


@pytest.fixture(scope="module")
def synth():
    return from_synth(generate(SynthConfig(n_samples=40, feature_dim=5, n_continuous=3, n_categorical=2)))


class TestSchema:
    def test_round_trip(self, tmp_path, synth):
        _, schema = synth
        schema.save(tmp_path / "s.json")
        assert DatasetSchema.load(tmp_path / "s.json") == schema

    def test_roles(self, synth):
        _, schema = synth
        assert schema.features == [f"x{k}" for k in range(5)]
        assert schema.continuous == ["con_0", "con_1", "con_2"]
        assert schema.categorical == {"cat_0": ["yes", "no"], "cat_1": ["yes", "no"]}
        assert schema.targets == ["disease", "phenotype"]

    def test_rejects_other_documents(self):
        with pytest.raises(FormatError):
            DatasetSchema.from_dict({"columns": []})
        with pytest.raises(FormatError):
            DatasetSchema.from_dict({"format": "tgv-schema", "columns": [{"name": "a", "role": "weird"}]})

    def test_fit_attributes_exclude(self, synth):
        table, schema = synth
        attrs = schema.fit_attributes(table.records, exclude=["con_0", "cat_1"])
        assert attrs.continuous_names == ["con_1", "con_2"]
        assert attrs.categorical_names == ["cat_0"]
        with pytest.raises(UnknownAttribute):
            schema.fit_attributes(table.records, exclude=["phenotype"])


class TestTable:
    def test_csv_round_trip_is_exact(self, tmp_path, synth):
        table, schema = synth
        write_table(tmp_path / "t.csv", table, schema)
        back = read_table(tmp_path / "t.csv", schema)
        np.testing.assert_array_equal(back.images, table.images)
        assert back.records == table.records
        for k in table.targets:
            np.testing.assert_array_equal(back.targets[k], table.targets[k])
        assert back.ids.tolist() == table.ids.tolist()

    def test_rewrite_is_byte_identical(self, tmp_path, synth):
        table, schema = synth
        write_table(tmp_path / "a.csv", table, schema)
        write_table(tmp_path / "b.csv", read_table(tmp_path / "a.csv", schema), schema)
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_missing_column(self, tmp_path, synth):
        _, schema = synth
        (tmp_path / "t.csv").write_text("id,x0\n1,0.5\n")
        with pytest.raises(UnknownShape):
            read_table(tmp_path / "t.csv", schema)

    def test_non_numeric(self, tmp_path):
        schema = DatasetSchema(features=["x"], continuous=["c"])
        (tmp_path / "t.csv").write_text("id,x,c\na,1.0,nan\n")
        with pytest.raises(NonFiniteValue):
            read_table(tmp_path / "t.csv", schema)

    def test_column_lookup(self, synth):
        table, _ = synth
        np.testing.assert_array_equal(table.column("phenotype"), table.targets["phenotype"])
        assert table.column("con_1")[0] == table.records[0]["con_1"]
        with pytest.raises(UnknownAttribute):
            table.column("cat_0")
        with pytest.raises(UnknownAttribute):
            table.column("nope")

    def test_subset(self, synth):
        table, _ = synth
        sub = table.subset([3, 1])
        assert len(sub) == 2 and sub.records[0] == table.records[3]


class TestEmbeddings:
    def test_round_trip(self, tmp_path):
        v = np.random.default_rng(0).normal(size=(4, 3))
        save_embeddings(tmp_path / "e.tgve", ["a", "b", "c", "d"], v)
        ids, back = load_embeddings(tmp_path / "e.tgve")
        np.testing.assert_array_equal(back, v)
        assert ids.tolist() == ["a", "b", "c", "d"]

    def test_bad_magic(self, tmp_path):
        (tmp_path / "e").write_bytes(b"TGVW" + bytes(30))
        with pytest.raises(FormatError):
            load_embeddings(tmp_path / "e")
