import numpy as np
import pytest
import scipy.stats

from fdiakit import scenario as sc
from fdiakit.errors import (ChecksumMismatch, DimensionMismatch,
                            FormatVersionMismatch, MissingData,
                            NonnegativityViolation, ParseError,
                            UnbalancedInjections)


class TestIngestCsv:
    def test_well_formed(self, tmp_path):
        p = tmp_path / "loads.csv"
        p.write_text("ts,A,B\n2013-01-01T00,100,200\n2013-01-01T01,110,190\n"
                     "2013-01-01T02,105,195\n")
        src = sc.ingest_load_csv(p)
        assert src.series.shape == (3, 2)
        assert src.labels == ("A", "B")

    def test_empty_cell(self, tmp_path):
        p = tmp_path / "loads.csv"
        p.write_text("ts,A,B\n0,100,\n")
        with pytest.raises(MissingData, match="line 2"):
            sc.ingest_load_csv(p)

    def test_negative_load(self, tmp_path):
        p = tmp_path / "loads.csv"
        p.write_text("ts,A,B\n0,100,-5\n")
        with pytest.raises(NonnegativityViolation):
            sc.ingest_load_csv(p)

    def test_wrong_column_count(self, tmp_path):
        p = tmp_path / "loads.csv"
        p.write_text("ts,A,B\n0,1,2\n")
        with pytest.raises(ParseError):
            sc.ingest_load_csv(p, expected_columns=5)


class TestSyntheticSource:
    def test_deterministic(self):
        a = sc.synthesize_load_source(48, 4, seed=7)
        b = sc.synthesize_load_source(48, 4, seed=7)
        assert np.array_equal(a.series, b.series)

    def test_positive(self):
        src = sc.synthesize_load_source(24, 8, seed=3)
        assert np.all(src.series > 0)

    def test_daily_autocorrelation(self):
        src = sc.synthesize_load_source(24 * 45, 6, seed=5)
        for k in range(6):
            s = src.series[:, k]
            a, b = s[:-24], s[24:]
            corr = np.corrcoef(a, b)[0, 1]
            assert corr > 0.5


class TestLoadMapping:
    def test_simplex_rows(self):
        mp = sc.sample_load_mapping(99, 32, seed=1)
        np.testing.assert_allclose(mp.weights.sum(axis=1), 1.0, atol=1e-12)
        assert np.all(mp.weights >= 0)

    def test_dirichlet_symmetry(self):
        mp = sc.sample_load_mapping(10_000, 32, seed=2)
        np.testing.assert_allclose(mp.weights.mean(axis=0), 1 / 32, atol=0.005)

    def test_two_countries_uniform(self):
        mp = sc.sample_load_mapping(10_000, 2, seed=3)
        stat = scipy.stats.kstest(mp.weights[:, 0], "uniform").statistic
        assert stat < 0.02


class TestBusLoads:
    def test_zero_variation_exact_mixture(self):
        src = sc.synthesize_load_source(48, 4, seed=1)
        mp = sc.sample_load_mapping(9, 4, seed=1)
        loads = sc.synthesize_bus_loads(src, mp, 0.0, seed=1)
        np.testing.assert_allclose(loads, (src.series / mp.scale) @ mp.weights.T)

    def test_uniform_weights_identical_series(self):
        series = np.full((24, 4), 8000.0)
        src = sc.LoadProfileSource(series=series, labels=("a", "b", "c", "d"))
        mp = sc.LoadMapping(weights=np.full((5, 4), 0.25))
        loads = sc.synthesize_bus_loads(src, mp, 0.0, seed=0)
        np.testing.assert_allclose(loads, 8.0)

    def test_variation_std(self):
        series = np.full((10_000, 1), 10_000.0)
        src = sc.LoadProfileSource(series=series, labels=("x",))
        mp = sc.LoadMapping(weights=np.ones((1, 1)))
        loads = sc.synthesize_bus_loads(src, mp, 0.05, seed=9)
        ratio = loads[:, 0] / 10.0 - 1.0
        assert abs(ratio.std() - 0.05) < 0.003

    def test_dimension_mismatch(self):
        src = sc.synthesize_load_source(5, 3, seed=1)
        mp = sc.sample_load_mapping(4, 2, seed=1)
        with pytest.raises(DimensionMismatch):
            sc.synthesize_bus_loads(src, mp, 0.0, seed=1)


class TestDispatch:
    def test_two_generator_analytic(self):
        cost = sc.CostModel(c2=np.array([0.1, 0.1]), c1=np.array([1.0, 5.0]))
        p = sc.economic_dispatch(cost, 100.0)
        np.testing.assert_allclose(p, [60.0, 40.0], atol=1e-9)

    def test_identical_generators_equal_share(self):
        cost = sc.CostModel(c2=np.full(5, 0.09), c1=np.full(5, 2.0))
        np.testing.assert_allclose(sc.economic_dispatch(cost, 250.0), 50.0)

    def test_zero_load_identical_linear(self):
        cost = sc.CostModel(c2=np.array([0.1, 0.2]), c1=np.array([3.0, 3.0]))
        np.testing.assert_allclose(sc.economic_dispatch(cost, 0.0), 0.0, atol=1e-12)

    def test_balance_random_draws(self, rng):
        for _ in range(1000):
            m = rng.integers(2, 10)
            cost = sc.CostModel(c2=rng.uniform(0.085, 0.1225, m),
                                c1=rng.uniform(1, 5, m))
            load = rng.uniform(0, 5000)
            p = sc.economic_dispatch(cost, load)
            assert p.sum() == pytest.approx(load, rel=1e-9, abs=1e-9)

    def test_local_optimality(self, rng):
        cost = sc.CostModel(c2=rng.uniform(0.085, 0.1225, 8),
                            c1=rng.uniform(1, 5, 8))
        load = 400.0
        p = sc.economic_dispatch(cost, load)

        def total_cost(g):
            return float(np.sum(cost.c2 * g ** 2 + cost.c1 * g))

        base = total_cost(p)
        for _ in range(1000):
            d = rng.uniform(-0.1, 0.1, 8) * np.abs(p)
            d -= d.mean()   # keep the perturbation balanced
            assert total_cost(p + d) >= base - 1e-9


class TestSnapshot:
    def test_zero_snapshot(self, net5):
        snap = sc.assemble_snapshot(net5, np.zeros(3), np.zeros(2))
        assert np.all(snap.flows == 0)

    def test_two_bus_direct_flow(self):
        from fdiakit.grid import NetworkModel, validate_network
        net = validate_network(NetworkModel(2, ((0, 1, 0.3),), 0, (0,), (1,)))
        snap = sc.assemble_snapshot(net, np.array([42.0]), np.array([42.0]))
        np.testing.assert_allclose(snap.flows, [42.0])

    def test_unbalanced_rejected(self, net5):
        with pytest.raises(UnbalancedInjections):
            sc.assemble_snapshot(net5, np.ones(3), np.ones(2))

    def test_feature_order(self, net5):
        snap = sc.assemble_snapshot(net5, np.array([1.0, 2.0, 3.0]),
                                    np.array([4.0, 2.0]))
        feats = snap.features
        np.testing.assert_array_equal(feats[:3], [1.0, 2.0, 3.0])
        np.testing.assert_array_equal(feats[3:5], [4.0, 2.0])
        assert feats.shape == (net5.feature_dim,)


class TestMeasurementNoise:
    def test_zero_std_identity(self):
        v = np.array([1.0, -2.0, 100.0])
        np.testing.assert_array_equal(sc.add_measurement_noise(v, 0.0, 0.01, 1), v)

    def test_truncation_bound(self):
        v = np.full(10_000, 100.0)
        out = sc.add_measurement_noise(v, 0.0033, 0.01, seed=4)
        assert np.abs(out - 100.0).max() < 1.0

    def test_zero_features_unchanged(self):
        v = np.array([0.0, 50.0, 0.0])
        out = sc.add_measurement_noise(v, 0.0033, 0.01, seed=4)
        assert out[0] == 0.0 and out[2] == 0.0

    def test_empirical_std(self):
        v = np.full(100_000, 100.0)
        out = sc.add_measurement_noise(v, 0.0033, 0.01, seed=5)
        rel = out / 100.0 - 1.0
        assert abs(rel.std() - 0.0033) < 0.0002


@pytest.fixture(scope="module")
def small_ds(ieee118):
    src = sc.synthesize_load_source(20, 4, seed=11)
    mp = sc.sample_load_mapping(99, 4, seed=11)
    return sc.build_dataset(ieee118, src, mp, (10, 5, 5), seed=11)


class TestDataset:
    def test_split_sizes(self, small_ds):
        assert small_ds.train.shape == (10, 339)
        assert small_ds.validation.shape == (5, 339)
        assert small_ds.test.shape == (5, 339)

    def test_deterministic(self, ieee118, small_ds):
        src = sc.synthesize_load_source(20, 4, seed=11)
        mp = sc.sample_load_mapping(99, 4, seed=11)
        again = sc.build_dataset(ieee118, src, mp, (10, 5, 5), seed=11)
        assert np.array_equal(small_ds.all_rows, again.all_rows)

    def test_oversized_split_rejected(self, ieee118):
        src = sc.synthesize_load_source(5, 4, seed=1)
        mp = sc.sample_load_mapping(99, 4, seed=1)
        with pytest.raises(ValueError):
            sc.build_dataset(ieee118, src, mp, (10, 5, 5), seed=1)

    def test_prenoise_balance(self, ieee118):
        # rebuild without measurement noise: nodal balance must be exact
        src = sc.synthesize_load_source(6, 4, seed=2)
        mp = sc.sample_load_mapping(99, 4, seed=2)
        ds = sc.build_dataset(ieee118, src, mp, (4, 1, 1), seed=2,
                              noise_rel_std=0.0)
        a = ieee118.incidence()
        for row in ds.all_rows:
            loads, gens, flows = row[:99], row[99:153], row[153:]
            assert gens.sum() == pytest.approx(loads.sum(), abs=1e-6)
            inj = np.zeros(118)
            np.add.at(inj, np.asarray(ieee118.load_buses), -loads)
            np.add.at(inj, np.asarray(ieee118.generator_buses), gens)
            scale = max(1.0, np.abs(inj).max())
            assert np.abs(a @ flows - inj).max() < 1e-9 * scale

    def test_save_load_round_trip(self, small_ds, ieee118, tmp_path):
        path = tmp_path / "ds.csv"
        sc.save_dataset(small_ds, path, net=ieee118)
        again = sc.load_dataset(path)
        assert np.array_equal(small_ds.all_rows, again.all_rows)
        assert again.metadata["split_sizes"] == [10, 5, 5]

    def test_corrupt_header(self, small_ds, ieee118, tmp_path):
        path = tmp_path / "ds.csv"
        sc.save_dataset(small_ds, path, net=ieee118)
        meta = (tmp_path / "ds.csv.meta.json")
        meta.write_text(meta.read_text().replace('"format_version": 1',
                                                 '"format_version": 99'))
        with pytest.raises(FormatVersionMismatch):
            sc.load_dataset(path)

    def test_tampered_rows(self, small_ds, ieee118, tmp_path):
        path = tmp_path / "ds.csv"
        sc.save_dataset(small_ds, path, net=ieee118)
        lines = path.read_text().splitlines()
        path.write_text("\n".join(lines[:-1]) + "\n")
        with pytest.raises(ChecksumMismatch):
            sc.load_dataset(path)
