import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cocoaspec.background import (
    FilterPolicy,
    ReferenceSet,
    distance_to_background,
    filter_spectra,
    sam_angle,
)
from cocoaspec.errors import (
    DegenerateSpectrumError,
    DimensionError,
    ValidationError,
)
from cocoaspec.types import Spectrum, WavelengthGrid

GRID3 = WavelengthGrid([500.0, 600.0, 700.0], "VIS")
GRID2 = WavelengthGrid([500.0, 600.0], "VIS")


def spec(values, grid=None):
    grid = grid or (GRID3 if len(values) == 3 else GRID2)
    return Spectrum(grid, values)


class TestSamAngle:
    def test_collinear_is_zero(self):
        assert sam_angle(spec([1.0, 2.0, 3.0]), spec([2.0, 4.0, 6.0])) == 0.0

    def test_orthogonal_is_right_angle(self):
        a = spec([1.0, 0.0])
        b = spec([0.0, 1.0])
        assert sam_angle(a, b) == pytest.approx(math.pi / 2)

    def test_known_angle(self):
        # unit vectors at 45 degrees
        a = spec([1.0, 0.0])
        b = spec([1.0, 1.0])
        assert sam_angle(a, b) == pytest.approx(math.pi / 4)

    def test_symmetry_and_scale_invariance(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            a, b = rng.uniform(0.1, 5.0, (2, 3))
            assert sam_angle(spec(a), spec(b)) == pytest.approx(
                sam_angle(spec(b), spec(a))
            )
            assert sam_angle(spec(3.7 * a), spec(b)) == pytest.approx(
                sam_angle(spec(a), spec(b))
            )

    def test_accepts_plain_arrays(self):
        assert sam_angle(np.array([1.0, 0.0]), np.array([1.0, 0.0])) == 0.0

    def test_zero_spectrum_rejected(self):
        with pytest.raises(DegenerateSpectrumError):
            sam_angle(np.zeros(3), np.ones(3))

    def test_shape_mismatch_rejected(self):
        with pytest.raises(DimensionError):
            sam_angle(np.ones(3), np.ones(4))

    @settings(max_examples=50, deadline=None)
    @given(
        st.lists(st.floats(0.01, 10.0), min_size=3, max_size=3),
        st.lists(st.floats(0.01, 10.0), min_size=3, max_size=3),
    )
    def test_range_always_valid(self, a, b):
        angle = sam_angle(np.asarray(a), np.asarray(b))
        assert 0.0 <= angle <= math.pi


class TestReferenceSet:
    def test_min_over_references(self):
        refs = ReferenceSet([spec([1.0, 0.0]), spec([0.0, 1.0])])
        # query at 30 degrees from the first axis, 60 from the second
        q = spec([math.cos(math.radians(30.0)), math.sin(math.radians(30.0))])
        assert distance_to_background(q, refs) == pytest.approx(math.radians(30.0))

    def test_angles_match_scalar_function(self):
        rng = np.random.default_rng(1)
        refs = ReferenceSet([spec(rng.uniform(0.1, 2.0, 3)) for _ in range(3)])
        queries = [spec(rng.uniform(0.1, 2.0, 3)) for _ in range(5)]
        batch = refs.angles(queries)
        for q, got in zip(queries, batch):
            expected = min(sam_angle(q, r) for r in refs.references)
            assert got == pytest.approx(expected)

    def test_empty_rejected(self):
        with pytest.raises(ValidationError):
            ReferenceSet([])

    def test_mixed_grids_rejected(self):
        with pytest.raises(DimensionError):
            ReferenceSet([spec([1.0, 2.0]), spec([1.0, 2.0, 3.0])])


def make_scans(distsource, belt, grid=GRID2):
    """Scans with known angles: belt direction rotated by the given degrees."""
    out = []
    for i, deg in enumerate(distsource):
        theta = math.radians(deg)
        v = np.array(
            [math.cos(theta) * belt[0] - math.sin(theta) * belt[1],
             math.sin(theta) * belt[0] + math.cos(theta) * belt[1]]
        )
        out.append(Spectrum(grid, np.abs(v), meta={"scan_index": i}))
    return out


class TestFilterSpectra:
    def setup_method(self):
        self.belt = np.array([1.0, 1.0])
        self.refs = ReferenceSet([spec(self.belt)])
        # angles in degrees from the belt direction, mixed order
        self.degrees = [5.0, 40.0, 1.0, 30.0, 20.0, 40.0]
        self.scans = make_scans(self.degrees, self.belt)

    def test_threshold_mode(self):
        tau = math.radians(15.0)
        result = filter_spectra(self.scans, self.refs, FilterPolicy("threshold", tau=tau))
        kept_idx = [s.meta["scan_index"] for s in result.kept]
        assert kept_idx == [1, 3, 4, 5]
        disc_idx = [s.meta["scan_index"] for s in result.discarded]
        assert disc_idx == [0, 2]
        assert result.kept_flags.tolist() == [False, True, False, True, True, True]

    def test_partition_is_complete(self):
        result = filter_spectra(
            self.scans, self.refs, FilterPolicy("top_n", n=3)
        )
        assert len(result.kept) + len(result.discarded) == len(self.scans)
        assert result.distances.shape == (6,)

    def test_top_n_takes_farthest(self):
        result = filter_spectra(self.scans, self.refs, FilterPolicy("top_n", n=2))
        kept_idx = [s.meta["scan_index"] for s in result.kept]
        # two scans at 40 degrees: both kept, tie not reached
        assert kept_idx == [1, 5]

    def test_top_n_tie_prefers_lower_index(self):
        # ties at 40 degrees between scan 1 and scan 5; n=1 keeps scan 1
        result = filter_spectra(self.scans, self.refs, FilterPolicy("top_n", n=1))
        kept_idx = [s.meta["scan_index"] for s in result.kept]
        assert kept_idx == [1]

    def test_top_n_larger_than_available_keeps_all_and_warns(self):
        result = filter_spectra(self.scans, self.refs, FilterPolicy("top_n", n=50))
        assert len(result.kept) == 6
        assert result.warnings and "50" in result.warnings[0]

    def test_threshold_then_top_n(self):
        tau = math.radians(15.0)
        policy = FilterPolicy("threshold_then_top_n", tau=tau, n=2)
        result = filter_spectra(self.scans, self.refs, policy)
        kept_idx = [s.meta["scan_index"] for s in result.kept]
        assert kept_idx == [1, 5]  # the two 40-degree scans beat 30 and 20

    def test_threshold_then_top_n_cap_not_binding(self):
        tau = math.radians(35.0)
        policy = FilterPolicy("threshold_then_top_n", tau=tau, n=10)
        result = filter_spectra(self.scans, self.refs, policy)
        kept_idx = [s.meta["scan_index"] for s in result.kept]
        assert kept_idx == [1, 5]
        assert result.warnings  # n exceeded the eligible count

    def test_exact_threshold_value_is_kept(self):
        probe = filter_spectra(self.scans, self.refs, FilterPolicy("top_n", n=1))
        dist = float(probe.distances[4])
        result = filter_spectra(
            self.scans, self.refs, FilterPolicy("threshold", tau=dist)
        )
        assert 4 in [s.meta["scan_index"] for s in result.kept]

    def test_policy_validation(self):
        with pytest.raises(ValidationError):
            FilterPolicy("nearest")
        with pytest.raises(ValidationError):
            FilterPolicy("threshold", tau=0.0)
        with pytest.raises(ValidationError):
            FilterPolicy("top_n", n=0)
