import datetime as dt

import numpy as np
import pytest

from cocoaspec import io
from cocoaspec.errors import (
    DomainError,
    IntegrityError,
    ParseError,
    SchemaError,
)
from cocoaspec.types import BatchRecord, Spectrum, WavelengthGrid


def make_grid(n=5, tag="VIS"):
    return WavelengthGrid(np.linspace(500.0, 700.0, n), tag)


def make_record(batch_id="1", **kw):
    base = dict(
        batch_id=batch_id,
        date=dt.date(2024, 4, 15),
        region="Santander",
        country="Colombia",
        fermentation=0.6,
        moisture=5.12,
        cadmium=2.14,
        polyphenols=41.30,
        fermentation_hours=96.0,
    )
    base.update(kw)
    return BatchRecord(**base)


class TestFermentationRatio:
    def test_all_fermented(self):
        assert io.fermentation_ratio(96, 0, 100) == 0.96

    def test_mixed(self):
        assert io.fermentation_ratio(30, 30, 100) == 0.6

    def test_domain_errors(self):
        with pytest.raises(DomainError):
            io.fermentation_ratio(1, 1, 0)
        with pytest.raises(DomainError):
            io.fermentation_ratio(-1, 0, 10)
        with pytest.raises(DomainError):
            io.fermentation_ratio(6, 5, 10)


class TestQuantize:
    def test_nine_significant_digits(self):
        assert io.fmt9(1.0 / 3.0) == "0.333333333"
        assert io.fmt9(60.000000000000004) == "60"

    def test_quantize_is_idempotent(self):
        rng = np.random.default_rng(0)
        for x in rng.uniform(1e-3, 2500.0, 500):
            q = io.quantize9(x)
            assert io.quantize9(q) == q
            assert io.fmt9(q) == io.fmt9(x)


class TestLabels:
    def test_round_trip(self, tmp_path):
        records = [
            make_record("1"),
            make_record(
                "13",
                cadmium=0.09,
                cadmium_below_detection=True,
                fermentation=0.30,
                fermentation_hours=30.0,
            ),
            make_record("santander", fermentation_hours=None),
        ]
        path = tmp_path / "labels.csv"
        io.save_labels(records, path)
        loaded = io.load_labels(path)
        assert loaded == records

    def test_censored_cell_text(self, tmp_path):
        path = tmp_path / "labels.csv"
        io.save_labels(
            [make_record("13", cadmium=0.09, cadmium_below_detection=True)], path
        )
        assert "<0.09" in path.read_text()

    def test_fermentation_written_as_percent(self, tmp_path):
        path = tmp_path / "labels.csv"
        io.save_labels([make_record("20", fermentation=0.96)], path)
        row = path.read_text().splitlines()[1]
        assert row.split(",")[4] == "96"

    def test_missing_column_rejected(self, tmp_path):
        path = tmp_path / "labels.csv"
        path.write_text("batch_id,date\n1,15/04/2024\n")
        with pytest.raises(SchemaError):
            io.load_labels(path)

    def test_duplicate_batch_rejected(self, tmp_path):
        path = tmp_path / "labels.csv"
        io.save_labels([make_record("1")], path)
        text = path.read_text()
        path.write_text(text + text.splitlines()[1] + "\n")
        with pytest.raises(IntegrityError):
            io.load_labels(path)

    def test_bad_number_is_parse_error(self, tmp_path):
        path = tmp_path / "labels.csv"
        io.save_labels([make_record("1")], path)
        path.write_text(path.read_text().replace("5.12", "five"))
        with pytest.raises(ParseError):
            io.load_labels(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(IntegrityError):
            io.load_labels(tmp_path / "nope.csv")


class TestScans:
    def test_round_trip_values_and_indices(self, tmp_path):
        grid = make_grid()
        spectra = [
            Spectrum(grid, [0.5, 0.25, 1.0 / 3.0, 0.0, 1.25], meta={"scan_index": 7})
        ]
        path = tmp_path / "scans.csv"
        io.save_scans(spectra, grid, path)
        loaded = io.load_scans(path, grid, "intensity")
        assert loaded[0].meta["scan_index"] == 7
        assert loaded[0].values[0] == 0.5
        assert io.fmt9(loaded[0].values[2]) == "0.333333333"

    def test_save_load_save_is_byte_stable(self, tmp_path):
        grid = WavelengthGrid(np.arange(500.0, 512.0), "VIS")
        rng = np.random.default_rng(1)
        spectra = [
            Spectrum(grid, rng.uniform(0.0, 90.0, 12), meta={"scan_index": i})
            for i in range(4)
        ]
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        io.save_scans(spectra, grid, p1)
        io.save_scans(io.load_scans(p1, grid, "intensity"), grid, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_grid_mismatch_rejected(self, tmp_path):
        grid = make_grid()
        path = tmp_path / "scans.csv"
        io.save_scans([Spectrum(grid, np.ones(5))], grid, path)
        other = WavelengthGrid(np.linspace(501.0, 701.0, 5), "VIS")
        with pytest.raises(IntegrityError):
            io.load_scans(path, other, "intensity")

    def test_header_required(self, tmp_path):
        path = tmp_path / "scans.csv"
        path.write_text("0,1.0,2.0\n")
        with pytest.raises(SchemaError):
            io.load_scans(path, make_grid(2), "intensity")


def small_dataset():
    grid = make_grid(6)
    white = Spectrum(grid, np.full(6, 90.0))
    black = Spectrum(grid, np.full(6, 10.0))
    scans = {
        ("1", "VIS"): [
            Spectrum(grid, np.full(6, 30.0), meta={"scan_index": i}) for i in range(3)
        ],
        ("santander", "VIS"): [
            Spectrum(grid, np.full(6, 40.0), meta={"scan_index": 0})
        ],
    }
    return io.SpectralDataset(
        kind="intensity",
        grids={"VIS": grid},
        scans=scans,
        labels={"1": make_record("1"), "santander": make_record("santander")},
        roles={"1": io.ROLE_TRAIN, "santander": io.ROLE_REGION},
        references={
            ("1", "VIS"): (white, black),
            ("santander", "VIS"): (white, black),
        },
        background={"VIS": [Spectrum(grid, np.full(6, 35.0))]},
    )


class TestDataset:
    def test_round_trip(self, tmp_path):
        ds = small_dataset()
        manifest = io.save_dataset(ds, tmp_path / "corpus")
        loaded = io.load_dataset(manifest)
        assert loaded.kind == "intensity"
        assert loaded.batch_ids() == ["1", "santander"]
        assert loaded.roles == ds.roles
        assert len(loaded.scans[("1", "VIS")]) == 3
        assert loaded.scans[("1", "VIS")][0].meta["batch_id"] == "1"
        white, black = loaded.references[("1", "VIS")]
        assert white.values[0] == 90.0 and black.values[0] == 10.0
        assert len(loaded.background["VIS"]) == 1
        assert loaded.labels["santander"].region == "Santander"

    def test_missing_scan_file_rejected(self, tmp_path):
        manifest = io.save_dataset(small_dataset(), tmp_path / "corpus")
        (tmp_path / "corpus" / "scans" / "1_VIS.csv").unlink()
        with pytest.raises(IntegrityError):
            io.load_dataset(manifest)

    def test_label_for_every_batch(self, tmp_path):
        manifest = io.save_dataset(small_dataset(), tmp_path / "corpus")
        labels = (tmp_path / "corpus" / "labels.csv").read_text().splitlines()
        (tmp_path / "corpus" / "labels.csv").write_text(
            "\n".join([labels[0], labels[2]]) + "\n"
        )
        with pytest.raises(IntegrityError):
            io.load_dataset(manifest)

    def test_manifest_must_parse(self, tmp_path):
        manifest = io.save_dataset(small_dataset(), tmp_path / "corpus")
        manifest.write_text("{broken")
        with pytest.raises(ParseError):
            io.load_dataset(manifest)

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(IntegrityError):
            io.load_dataset(tmp_path / "nope" / "manifest.json")
