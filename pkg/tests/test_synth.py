import numpy as np
import pytest

from cocoaspec.background import FilterPolicy, ReferenceSet, filter_spectra
from cocoaspec.calibration import CalibrationPair, compute_reflectance
from cocoaspec.errors import ValidationError
from cocoaspec.io import ROLE_REGION, ROLE_TRAIN, load_dataset
from cocoaspec.synth import (
    CorpusSpec,
    GaussianBand,
    PropertyLink,
    SynthProfile,
    default_profiles,
    generate_batch,
    generate_corpus,
    background_references,
    region_batch_labels,
    training_batch_labels,
    write_corpus,
)


def small_profiles(noise_sd=0.01):
    return default_profiles(vis_bands=48, nir_bands=56, noise_sd=noise_sd)


class TestLabels:
    def test_training_count_and_ids(self):
        records = training_batch_labels()
        assert len(records) == 20
        assert [r.batch_id for r in records] == [str(i) for i in range(1, 21)]

    def test_known_values(self):
        records = {r.batch_id: r for r in training_batch_labels()}
        assert records["1"].fermentation == pytest.approx(0.60)
        assert records["1"].moisture == 5.12
        assert records["1"].cadmium == 2.14
        assert records["1"].polyphenols == 41.30
        assert records["1"].fermentation_hours == 96
        assert records["20"].fermentation == pytest.approx(0.96)
        assert records["20"].moisture == 4.16

    def test_censored_batches(self):
        records = {r.batch_id: r for r in training_batch_labels()}
        for b in ("13", "14", "15", "16"):
            assert records[b].cadmium == 0.09
            assert records[b].cadmium_below_detection
        assert not records["1"].cadmium_below_detection

    def test_five_receipt_dates(self):
        dates = {r.date for r in training_batch_labels()}
        assert len(dates) == 5

    def test_region_batches(self):
        records = {r.batch_id: r for r in region_batch_labels()}
        assert set(records) == {"santander", "huila", "putumayo", "cusco"}
        assert records["cusco"].country == "Peru"
        assert records["putumayo"].cadmium_below_detection
        assert all(r.fermentation_hours is None for r in records.values())


class TestProfiles:
    def test_links_cover_all_properties(self):
        for profile in default_profiles().values():
            names = {link.property_name for link in profile.links}
            assert names == {"fermentation", "moisture", "cadmium", "polyphenols"}

    def test_link_bands_inside_crop_windows(self):
        profiles = default_profiles()
        for link in profiles["VIS"].links:
            assert 500.0 <= link.center <= 800.0
        for link in profiles["NIR"].links:
            assert 1100.0 <= link.center <= 2000.0

    def test_affine_amplitude(self):
        link = PropertyLink("moisture", 610.0, 16.0, 3.0, 9.0, 0.02, 0.15)
        assert link.amplitude(3.0) == pytest.approx(0.02)
        assert link.amplitude(9.0) == pytest.approx(0.15)
        assert link.amplitude(6.0) == pytest.approx((0.02 + 0.15) / 2.0)

    def test_reflectance_monotone_in_each_property(self):
        # raising one property raises reflectance at that property's band
        profiles = small_profiles()
        records = {r.batch_id: r for r in training_batch_labels()}
        profile = profiles["VIS"]
        low, high = records["13"], records["12"]  # fermentation 0.30 vs 1.00
        wl = profile.grid().values
        band = np.argmin(np.abs(wl - 540.0))
        r_low = profile.bean_reflectance(low)[band]
        r_high = profile.bean_reflectance(high)[band]
        assert r_high > r_low

    def test_reflectance_within_unit_interval(self):
        for profile in small_profiles().values():
            for rec in training_batch_labels():
                r = profile.bean_reflectance(rec)
                assert np.all(r >= 0.0) and np.all(r <= 1.0)

    def test_white_minus_black_is_power_of_two(self):
        for profile in default_profiles().values():
            diff = profile.white_level - profile.black_level
            assert diff == 64.0
            assert np.log2(diff) == int(np.log2(diff))

    def test_white_must_exceed_black(self):
        with pytest.raises(ValidationError):
            SynthProfile(
                range_tag="VIS", grid_low=400.0, grid_high=900.0, n_bands=16,
                base_level=0.1, base_bands=(GaussianBand(600.0, 50.0, 0.1),),
                links=(), belt_level=0.3, white_level=10.0, black_level=10.0,
                noise_sd=0.0,
            )


class TestGenerateBatch:
    def setup_method(self):
        self.profiles = small_profiles()
        self.record = training_batch_labels()[0]

    def test_exact_belt_count(self):
        for frac, n, expected in [(0.3, 50, 15), (0.25, 10, 2), (0.3, 9, 3)]:
            scans = generate_batch(self.profiles["VIS"], self.record, n, frac, seed=0)
            n_belt = sum(1 for s in scans if s.meta["source"] == "belt")
            assert n_belt == expected
            assert len(scans) == n

    def test_deterministic(self):
        a = generate_batch(self.profiles["VIS"], self.record, 20, 0.3, seed=5)
        b = generate_batch(self.profiles["VIS"], self.record, 20, 0.3, seed=5)
        for sa, sb in zip(a, b):
            assert np.array_equal(sa.values, sb.values)
            assert sa.meta == sb.meta

    def test_ranges_get_different_noise(self):
        vis = generate_batch(self.profiles["VIS"], self.record, 10, 0.0, seed=0)
        nir = generate_batch(self.profiles["NIR"], self.record, 10, 0.0, seed=0)
        assert vis[0].values.shape != nir[0].values.shape or not np.array_equal(
            vis[0].values, nir[0].values
        )

    def test_filter_separates_beans_from_belt(self):
        # a top_n filter sized to the bean count keeps exactly the beans
        profile = self.profiles["VIS"]
        scans = generate_batch(profile, self.record, 40, 0.3, seed=1)
        refs = ReferenceSet(background_references(profile, 2))
        n_bean = sum(1 for s in scans if s.meta["source"] == "bean")
        result = filter_spectra(scans, refs, FilterPolicy("top_n", n=n_bean))
        kept_sources = {s.meta["source"] for s in result.kept}
        discarded_sources = {s.meta["source"] for s in result.discarded}
        assert kept_sources == {"bean"}
        assert discarded_sources == {"belt"}

    def test_calibration_recovers_reflectance(self):
        # noise-free scans calibrate back to the prototype almost exactly
        profile = small_profiles(noise_sd=0.0)["VIS"]
        scans = generate_batch(profile, self.record, 5, 0.0, seed=0)
        white, black = profile.references()
        pair = CalibrationPair(white, black)
        proto = profile.bean_reflectance(self.record)
        for scan in scans:
            out = compute_reflectance(scan, pair)
            np.testing.assert_allclose(out.values, proto, atol=1e-12)

    def test_intensity_values_above_black(self):
        scans = generate_batch(self.profiles["VIS"], self.record, 10, 0.3, seed=0)
        for s in scans:
            assert np.all(s.values >= 32.0 - 1e-9)


class TestCorpus:
    def test_generate_corpus_structure(self):
        spec = CorpusSpec(n_scans=6, belt_fraction=0.3, seed=0, profiles=small_profiles())
        ds = generate_corpus(spec)
        assert ds.kind == "intensity"
        assert set(ds.grids) == {"VIS", "NIR"}
        assert len(ds.batch_ids()) == 24
        train = [b for b, role in ds.roles.items() if role == ROLE_TRAIN]
        region = [b for b, role in ds.roles.items() if role == ROLE_REGION]
        assert len(train) == 20 and len(region) == 4
        assert len(ds.scans[("1", "VIS")]) == 6
        assert len(ds.background["VIS"]) == 2
        assert ("cusco", "NIR") in ds.references

    def test_write_corpus_round_trip(self, tmp_path):
        spec = CorpusSpec(n_scans=4, belt_fraction=0.25, seed=1, profiles=small_profiles())
        manifest = write_corpus(spec, tmp_path / "corpus")
        assert manifest.name == "manifest.json"
        assert (tmp_path / "corpus" / "synth_spec.json").is_file()
        loaded = load_dataset(manifest)
        assert len(loaded.batch_ids()) == 24
        source = generate_corpus(spec)
        # values survive the 9-significant-digit text round trip
        for key in [("1", "VIS"), ("cusco", "NIR")]:
            for a, b in zip(source.scans[key], loaded.scans[key]):
                np.testing.assert_allclose(a.values, b.values, rtol=1e-8)

    def test_spec_validation(self):
        with pytest.raises(ValidationError):
            CorpusSpec(n_scans=1)
        with pytest.raises(ValidationError):
            CorpusSpec(belt_fraction=1.0)
        with pytest.raises(ValidationError):
            CorpusSpec(seed=-1)
        with pytest.raises(ValidationError):
            CorpusSpec(n_background_refs=0)
