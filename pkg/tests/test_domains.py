import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedalign.domains import (
    CsvSchema,
    DomainDataset,
    DomainSuite,
    SyntheticSpec,
    default_benchmark_spec,
    generate,
    leave_one_out,
    load_csv,
    minibatch,
    rotation_matrix,
    save_csv,
)
from fedalign.errors import (
    EmptyDataset,
    InconsistentDimension,
    InsufficientDomains,
    InvalidSpec,
    ParseError,
    UnknownDomain,
)
from fedalign.numcore import Rng


class TestRotationMatrix:
    def test_zero_is_identity(self):
        assert np.array_equal(rotation_matrix(0.0), np.eye(2))

    def test_half_turn_negates_exactly(self):
        # No trig rounding allowed on quarter turns: x -> -x bit for bit.
        rot = rotation_matrix(180.0)
        v = np.array([[0.123456789, -9.87654321], [1e-8, 1e8]])
        assert np.array_equal(v @ rot.T, -v)

    def test_quarter_turn(self):
        rot = rotation_matrix(90.0)
        assert np.array_equal(rot @ np.array([1.0, 0.0]), np.array([0.0, 1.0]))

    def test_wraparound(self):
        assert np.array_equal(rotation_matrix(540.0), rotation_matrix(180.0))

    @given(st.floats(-720, 720, allow_nan=False))
    @settings(max_examples=50)
    def test_orthonormal(self, degrees):
        rot = rotation_matrix(degrees)
        assert np.allclose(rot @ rot.T, np.eye(2), atol=1e-12)
        assert abs(np.linalg.det(rot) - 1.0) < 1e-12


class TestSyntheticSpec:
    def test_defaults(self):
        spec = default_benchmark_spec()
        assert spec.num_domains == 4
        assert spec.rotation_degrees == (0.0, 15.0, 30.0, 45.0)
        assert spec.samples_per_domain == 500
        assert spec.noise_sigma == 0.3

    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(family="spirals"),
            dict(num_domains=1, rotation_degrees=(0.0,)),
            dict(samples_per_domain=0),
            dict(rotation_degrees=(0.0, 10.0)),  # wrong length for 4 domains
            dict(noise_sigma=-0.1),
        ],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(InvalidSpec):
            SyntheticSpec(**kwargs)


class TestGenerate:
    def test_shape_and_ids(self):
        suite = generate(default_benchmark_spec(seed=3))
        assert suite.domain_ids == ("dom0", "dom1", "dom2", "dom3")
        assert suite.num_classes == 2
        assert suite.num_features == 2
        for d in suite.domains:
            assert d.num_rows == 500
            assert sorted(np.bincount(d.labels).tolist()) == [250, 250]

    def test_replay_identical(self):
        spec = SyntheticSpec(seed=7)
        a, b = generate(spec), generate(spec)
        for da, db in zip(a.domains, b.domains):
            assert np.array_equal(da.features, db.features)
            assert np.array_equal(da.labels, db.labels)

    def test_seed_changes_data(self):
        a = generate(SyntheticSpec(seed=0))
        b = generate(SyntheticSpec(seed=1))
        assert not np.array_equal(a.domains[0].features, b.domains[0].features)

    def test_adding_a_domain_preserves_existing(self):
        # Per-domain child seeds depend only on (seed, domain index).
        small = generate(SyntheticSpec(num_domains=2, rotation_degrees=(0.0, 15.0), seed=5))
        large = generate(
            SyntheticSpec(num_domains=3, rotation_degrees=(0.0, 15.0, 30.0), seed=5)
        )
        for i in range(2):
            assert np.array_equal(small.domains[i].features, large.domains[i].features)

    def test_zero_rotation_same_distribution(self):
        spec = SyntheticSpec(
            num_domains=2, rotation_degrees=(0.0, 0.0), noise_sigma=0.0, seed=11
        )
        suite = generate(spec)
        for cls in (0, 1):
            means = [
                d.features[d.labels == cls].mean(axis=0) for d in suite.domains
            ]
            assert np.max(np.abs(means[0] - means[1])) < 0.2

    def test_rotation_actually_applied(self):
        base = generate(
            SyntheticSpec(num_domains=2, rotation_degrees=(0.0, 0.0), noise_sigma=0.0, seed=2)
        )
        rotated = generate(
            SyntheticSpec(num_domains=2, rotation_degrees=(0.0, 90.0), noise_sigma=0.0, seed=2)
        )
        # Domain 1 shares its base draw (same child seed); rotating that
        # base by 90 degrees sends (x, y) to (-y, x).
        b = base.domains[1].features
        r = rotated.domains[1].features
        assert np.allclose(r, np.column_stack([-b[:, 1], b[:, 0]]), atol=1e-12)

    def test_two_moons_family(self):
        suite = generate(
            SyntheticSpec(family="rotated_two_moons", num_domains=2, rotation_degrees=(0.0, 0.0))
        )
        feats = np.vstack([d.features for d in suite.domains])
        # Centered construction: both moons straddle the origin.
        assert abs(feats.mean(axis=0)).max() < 0.3


class TestLeaveOneOut:
    def test_split(self):
        suite = generate(default_benchmark_spec())
        sources, target = leave_one_out(suite, "dom2")
        assert [s.domain_id for s in sources] == ["dom0", "dom1", "dom3"]
        assert target.domain_id == "dom2"
        assert len(sources) + 1 == len(suite.domains)

    def test_unknown_target(self):
        suite = generate(default_benchmark_spec())
        with pytest.raises(UnknownDomain):
            leave_one_out(suite, "nope")


class TestMinibatch:
    @pytest.fixture()
    def ds(self):
        return generate(default_benchmark_spec(seed=0)).domains[0]

    def test_without_replacement_rows_unique(self, ds):
        x, y = minibatch(ds, 32, Rng(1))
        assert x.shape == (32, 2) and y.shape == (32,)
        assert len(np.unique(x, axis=0)) == 32

    def test_full_batch_is_whole_dataset_in_order(self, ds):
        x, y = minibatch(ds, ds.num_rows, Rng(1))
        assert np.array_equal(x, ds.features)
        assert np.array_equal(y, ds.labels)

    def test_with_replacement_when_oversized(self, ds):
        x, y = minibatch(ds, ds.num_rows + 10, Rng(1))
        assert x.shape[0] == ds.num_rows + 10

    def test_deterministic(self, ds):
        xa, ya = minibatch(ds, 8, Rng(42))
        xb, yb = minibatch(ds, 8, Rng(42))
        assert np.array_equal(xa, xb) and np.array_equal(ya, yb)

    def test_rows_come_from_dataset(self, ds):
        x, y = minibatch(ds, 16, Rng(3))
        # Every sampled row (with its label) appears verbatim in the source.
        for row, lab in zip(x, y):
            matches = np.where((ds.features == row).all(axis=1))[0]
            assert matches.size > 0
            assert lab in ds.labels[matches]

    def test_empty_dataset(self):
        empty = DomainDataset("e", np.zeros((0, 2)), np.zeros(0, dtype=int))
        with pytest.raises(EmptyDataset):
            minibatch(empty, 4, Rng(0))

    def test_bad_batch_size(self, ds):
        with pytest.raises(InvalidSpec):
            minibatch(ds, 0, Rng(0))


class TestSuiteValidation:
    def test_needs_two_domains(self):
        d = DomainDataset("a", np.zeros((3, 2)), np.zeros(3, dtype=int))
        with pytest.raises(InsufficientDomains):
            DomainSuite((d,), num_classes=2)

    def test_duplicate_ids_rejected(self):
        d1 = DomainDataset("a", np.zeros((3, 2)), np.zeros(3, dtype=int))
        d2 = DomainDataset("a", np.zeros((3, 2)), np.zeros(3, dtype=int))
        with pytest.raises(InvalidSpec):
            DomainSuite((d1, d2), num_classes=2)

    def test_dimension_mismatch_rejected(self):
        d1 = DomainDataset("a", np.zeros((3, 2)), np.zeros(3, dtype=int))
        d2 = DomainDataset("b", np.zeros((3, 5)), np.zeros(3, dtype=int))
        with pytest.raises(InconsistentDimension):
            DomainSuite((d1, d2), num_classes=2)

    def test_label_range_checked(self):
        d1 = DomainDataset("a", np.zeros((2, 2)), np.array([0, 3]))
        d2 = DomainDataset("b", np.zeros((2, 2)), np.array([0, 1]))
        with pytest.raises(InvalidSpec):
            DomainSuite((d1, d2), num_classes=2)

    def test_by_id_unknown(self):
        suite = generate(default_benchmark_spec())
        with pytest.raises(UnknownDomain):
            suite.by_id("domX")


class TestCsvRoundTrip:
    def test_exact_round_trip(self, tmp_path):
        suite = generate(SyntheticSpec(num_domains=2, rotation_degrees=(0.0, 30.0), seed=9))
        path = tmp_path / "suite.csv"
        schema = save_csv(suite, str(path))
        loaded = load_csv(str(path), schema)
        assert loaded.domain_ids == suite.domain_ids
        assert loaded.num_classes == suite.num_classes
        for a, b in zip(suite.domains, loaded.domains):
            # 17 significant digits round-trip float64 exactly.
            assert np.array_equal(a.features, b.features)
            assert np.array_equal(a.labels, b.labels)

    def test_header_contract(self, tmp_path):
        suite = generate(SyntheticSpec(num_domains=2, rotation_degrees=(0.0, 15.0)))
        path = tmp_path / "suite.csv"
        save_csv(suite, str(path))
        header = path.read_text().splitlines()[0]
        assert header == "domain,x0,x1,label"


class TestLoadCsv:
    SCHEMA = CsvSchema(feature_cols=("x0", "x1"), label_col="label", domain_col="domain")

    def write(self, tmp_path, text):
        p = tmp_path / "data.csv"
        p.write_text(text, encoding="utf-8")
        return str(p)

    def test_small_fixture(self, tmp_path):
        path = self.write(
            tmp_path,
            "domain,x0,x1,label\n"
            "a,0.0,1.0,yes\n"
            "a,1.0,0.0,no\n"
            "b,0.5,0.5,yes\n"
            "b,0.25,0.75,no\n",
        )
        suite = load_csv(path, self.SCHEMA)
        assert suite.domain_ids == ("a", "b")
        assert all(d.num_rows == 2 for d in suite.domains)
        # Labels map by first appearance: yes -> 0, no -> 1.
        assert suite.label_names == ("yes", "no")
        assert suite.domains[0].labels.tolist() == [0, 1]

    def test_missing_column(self, tmp_path):
        path = self.write(tmp_path, "domain,x0,label\na,1.0,0\nb,2.0,1\n")
        with pytest.raises(ParseError) as err:
            load_csv(path, self.SCHEMA)
        assert err.value.line == 1
        assert "x1" in str(err.value)

    def test_non_numeric_cell_names_line(self, tmp_path):
        path = self.write(
            tmp_path,
            "domain,x0,x1,label\na,1.0,2.0,0\na,oops,2.0,1\nb,3.0,4.0,0\n",
        )
        with pytest.raises(ParseError) as err:
            load_csv(path, self.SCHEMA)
        assert err.value.line == 3

    def test_single_domain_rejected(self, tmp_path):
        path = self.write(tmp_path, "domain,x0,x1,label\na,1.0,2.0,0\na,3.0,4.0,1\n")
        with pytest.raises(InsufficientDomains):
            load_csv(path, self.SCHEMA)

    def test_single_label_rejected(self, tmp_path):
        path = self.write(tmp_path, "domain,x0,x1,label\na,1.0,2.0,0\nb,3.0,4.0,0\n")
        with pytest.raises(InvalidSpec):
            load_csv(path, self.SCHEMA)

    def test_short_row_rejected(self, tmp_path):
        path = self.write(tmp_path, "domain,x0,x1,label\na,1.0,2.0,0\nb,3.0\n")
        with pytest.raises((InconsistentDimension, ParseError)):
            load_csv(path, self.SCHEMA)
