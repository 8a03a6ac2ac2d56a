import json

import pytest

from pavesnow import dataset as ds
from pavesnow.dataset import (
    DatasetError,
    DatasetManifest,
    ImageRecord,
    ingest,
    load_manifest,
    pair_by_location,
    save_manifest,
    split,
    validate_manifest,
)

from conftest import write_image, write_paired_dataset


class TestIngest:
    def test_reference_sized_layout(self, tmp_path):
        # 49 per label: 38 pair locations + 11 test images of each label
        write_paired_dataset(tmp_path, n_pairs=38, n_test_per_class=11)
        result = ingest(tmp_path)
        records = result.manifest.records
        assert len(records) == 98
        assert sum(1 for r in records if r.label == "snow") == 49
        assert sum(1 for r in records if r.label == "snow_free") == 49
        assert sum(1 for r in records if r.split == "test") == 22
        assert result.rejects == []

    def test_empty_directory(self, tmp_path):
        (tmp_path / "snow").mkdir()
        (tmp_path / "snow_free").mkdir()
        with pytest.raises(DatasetError, match="no images found"):
            ingest(tmp_path)

    def test_corrupt_file_is_rejected_not_dropped(self, tmp_path):
        write_image(tmp_path / "snow" / "a_snow.png")
        write_image(tmp_path / "snow_free" / "a_snow_free.png")
        (tmp_path / "snow" / "broken_snow.png").write_bytes(b"not a png at all")
        result = ingest(tmp_path)
        assert len(result.manifest.records) == 2
        assert len(result.rejects) == 1
        assert result.rejects[0].path == "snow/broken_snow.png"

    def test_location_falls_back_to_stem_rule(self, tmp_path):
        write_image(tmp_path / "snow" / "corner7_snow.png")
        write_image(tmp_path / "snow_free" / "corner7_snow_free.png")
        result = ingest(tmp_path)
        assert {r.location_id for r in result.manifest.records} == {"corner7"}

    def test_imbalance_warns_but_succeeds(self, tmp_path):
        write_image(tmp_path / "snow" / "a_snow.png")
        write_image(tmp_path / "snow" / "b_snow.png")
        write_image(tmp_path / "snow_free" / "a_snow_free.png")
        with pytest.warns(UserWarning, match="imbalance"):
            result = ingest(tmp_path)
        assert len(result.manifest.records) == 3

    def test_bad_label_rule(self, tmp_path):
        write_image(tmp_path / "snow" / "a_snow.png")
        with pytest.raises(DatasetError, match="unknown label"):
            ingest(tmp_path, label_rule={"snow": "snowy"})

    def test_sidecar_bad_split_value(self, tmp_path):
        write_image(tmp_path / "snow" / "a_snow.png")
        (tmp_path / "metadata.jsonl").write_text(
            json.dumps({"file": "snow/a_snow.png", "split": "holdout"}) + "\n"
        )
        with pytest.raises(DatasetError, match="invalid split"):
            ingest(tmp_path)


class TestPairing:
    def test_38_locations_make_38_pairs(self, tmp_path):
        write_paired_dataset(tmp_path, n_pairs=38, n_test_per_class=11)
        manifest = pair_by_location(ingest(tmp_path).manifest)
        assert len(manifest.pairs) == 38
        non_test = [r for r in manifest.records if r.split != "test"]
        assert len(non_test) == 76
        assert len({r.location_id for r in non_test}) == 38
        assert manifest.unpaired_records() == []

    def test_empty_manifest_pairs_nothing(self, tmp_path):
        manifest = DatasetManifest(records=[], image_root=tmp_path)
        assert pair_by_location(manifest).pairs == []

    def test_two_same_label_records_flagged(self, tmp_path):
        write_image(tmp_path / "snow" / "dup_snow.png")
        write_image(tmp_path / "snow" / "dup2.png")
        (tmp_path / "metadata.jsonl").write_text(
            json.dumps({"file": "snow/dup2.png", "location_id": "dup"}) + "\n"
        )
        with pytest.warns(UserWarning, match="imbalance"):
            ingested = ingest(tmp_path).manifest
        with pytest.warns(UserWarning, match="could not be paired"):
            manifest = pair_by_location(ingested)
        assert manifest.pairs == []
        assert len(manifest.unpaired_records()) == 2

    def test_missing_location_id_rejected(self, tmp_path):
        manifest = DatasetManifest(
            records=[ImageRecord(id="x", path="x", label="snow", location_id="")],
            image_root=tmp_path,
        )
        with pytest.raises(DatasetError, match="lack a location_id"):
            pair_by_location(manifest)

    def test_test_records_are_never_paired(self, tmp_path):
        write_paired_dataset(tmp_path, n_pairs=2, n_test_per_class=2)
        manifest = pair_by_location(ingest(tmp_path).manifest)
        paired_ids = {p.snow_record for p in manifest.pairs} | {
            p.snow_free_record for p in manifest.pairs
        }
        for record in manifest.records:
            if record.split == "test":
                assert record.id not in paired_ids


class TestSplit:
    def _paired(self, tmp_path, n_pairs=38, n_test=11):
        write_paired_dataset(tmp_path, n_pairs=n_pairs, n_test_per_class=n_test)
        return pair_by_location(ingest(tmp_path).manifest)

    def test_floor_arithmetic_38_pairs(self, tmp_path):
        manifest = split(self._paired(tmp_path), train_fraction=0.8, seed=1)
        train = manifest.records_in_split("train")
        val = manifest.records_in_split("val")
        assert len(train) == 60  # floor(0.8 * 38) = 30 pairs
        assert len(val) == 16  # 8 pairs
        assert len(manifest.records_in_split("test")) == 22

    def test_same_seed_is_byte_identical(self, tmp_path):
        paired = self._paired(tmp_path, n_pairs=10, n_test=2)
        path_a = tmp_path / "a.jsonl"
        path_b = tmp_path / "b.jsonl"
        save_manifest(split(paired, 0.8, seed=99), path_a)
        save_manifest(split(paired, 0.8, seed=99), path_b)
        assert path_a.read_bytes() == path_b.read_bytes()

    def test_different_seeds_differ(self, tmp_path):
        paired = self._paired(tmp_path, n_pairs=10, n_test=0)
        a = split(paired, 0.8, seed=1)
        b = split(paired, 0.8, seed=2)
        assignments_a = {r.id: r.split for r in a.records}
        assignments_b = {r.id: r.split for r in b.records}
        assert assignments_a != assignments_b

    @pytest.mark.parametrize("fraction", [1.5, 0.0, 1.0, -0.2])
    def test_fraction_out_of_range(self, tmp_path, fraction):
        paired = self._paired(tmp_path, n_pairs=4, n_test=0)
        with pytest.raises(DatasetError, match="train_fraction"):
            split(paired, fraction, seed=0)

    def test_pair_integrity(self, tmp_path):
        manifest = split(self._paired(tmp_path, n_pairs=13, n_test=3), 0.6, seed=5)
        by_id = manifest.records_by_id()
        for pair in manifest.pairs:
            assert by_id[pair.snow_record].split == by_id[pair.snow_free_record].split
            assert by_id[pair.snow_record].split in ("train", "val")

    def test_location_disjointness(self, tmp_path):
        manifest = split(self._paired(tmp_path, n_pairs=8, n_test=4), 0.8, seed=3)
        test_locs = {r.location_id for r in manifest.records_in_split("test")}
        fit_locs = {
            r.location_id for r in manifest.records if r.split in ("train", "val")
        }
        assert test_locs.isdisjoint(fit_locs)

    def test_unpaired_records_block_split(self, tmp_path):
        write_image(tmp_path / "snow" / "odd_snow.png")
        write_image(tmp_path / "snow" / "pairless.png")
        write_image(tmp_path / "snow_free" / "odd_snow_free.png")
        with pytest.warns(UserWarning):
            manifest = pair_by_location(ingest(tmp_path).manifest)
        with pytest.raises(DatasetError, match="unpaired"):
            split(manifest, 0.8, seed=0)


class TestManifestIO:
    def test_roundtrip_preserves_everything(self, tmp_path):
        write_paired_dataset(tmp_path / "data", n_pairs=5, n_test_per_class=2)
        manifest = split(pair_by_location(ingest(tmp_path / "data").manifest), 0.8, 7)
        path = save_manifest(manifest, tmp_path / "out" / "manifest.jsonl")
        loaded = load_manifest(path)
        assert loaded.records == manifest.records
        assert loaded.pairs == manifest.pairs
        assert loaded.content_hash() == manifest.content_hash()
        assert loaded.resolve(loaded.records[0]).exists()

    def test_hash_ignores_header_timestamp(self, tmp_path):
        write_paired_dataset(tmp_path, n_pairs=2)
        manifest = ingest(tmp_path).manifest
        h = manifest.content_hash()
        manifest.created_at = "2030-01-01T00:00:00+00:00"
        assert manifest.content_hash() == h

    def test_truncated_file_detected(self, tmp_path):
        write_paired_dataset(tmp_path / "d", n_pairs=2)
        path = save_manifest(ingest(tmp_path / "d").manifest, tmp_path / "m.jsonl")
        lines = path.read_text().splitlines()
        path.write_text("\n".join(lines[:-1]) + "\n")
        with pytest.raises(DatasetError, match="truncated"):
            load_manifest(path)

    def test_schema_version_checked(self, tmp_path):
        write_paired_dataset(tmp_path / "d", n_pairs=1)
        path = save_manifest(ingest(tmp_path / "d").manifest, tmp_path / "m.jsonl")
        lines = path.read_text().splitlines()
        header = json.loads(lines[0])
        header["schema_version"] = 99
        path.write_text("\n".join([json.dumps(header)] + lines[1:]) + "\n")
        with pytest.raises(DatasetError, match="schema_version"):
            load_manifest(path)


class TestValidation:
    def test_duplicate_ids(self, tmp_path):
        rec = ImageRecord(id="x", path="x", label="snow", location_id="l")
        with pytest.raises(DatasetError, match="duplicate"):
            validate_manifest(DatasetManifest(records=[rec, rec], image_root=tmp_path))

    def test_test_location_leaking_into_train(self, tmp_path):
        records = [
            ImageRecord(id="a", path="a", label="snow", location_id="shared", split="train"),
            ImageRecord(id="b", path="b", label="snow_free", location_id="shared", split="test"),
        ]
        with pytest.raises(DatasetError, match="test locations"):
            validate_manifest(DatasetManifest(records=records, image_root=tmp_path))

    def test_pair_split_integrity_enforced(self, tmp_path):
        records = [
            ImageRecord(id="a", path="a", label="snow", location_id="l", split="train"),
            ImageRecord(id="b", path="b", label="snow_free", location_id="l", split="val"),
        ]
        manifest = DatasetManifest(records=records, image_root=tmp_path)
        manifest.pairs = [ds.LocationPair("l", "a", "b")]
        with pytest.raises(DatasetError, match="split across"):
            validate_manifest(manifest)
