import numpy as np
import pytest

from climdown.datagen import (
    DEFAULT_SPLIT_RATIOS,
    SyntheticSpec,
    build_bundle,
    compute_stats,
    degrade,
    denormalize_field,
    generate_dataset,
    generate_fields,
    load_bundle,
    load_dataset,
    normalize_field,
    split_counts,
    split_fields,
    upsample_condition,
)
from climdown.fields import Field, read_fields


@pytest.fixture(scope="module")
def fields96():
    return generate_fields(SyntheticSpec(n_samples=96, seed=3))


class TestGenerateFields:
    def test_channel_names_and_shape(self, fields96):
        f = fields96[0]
        assert f.channels == ("TS", "PRECT", "dPHIS")
        assert (f.height, f.width) == (48, 48)

    def test_prect_nonnegative_everywhere(self, fields96):
        for f in fields96:
            assert f.channel("PRECT").min() >= 0.0

    def test_prect_heavy_tailed(self, fields96):
        # lognormal-like: max well above the mean
        vals = np.concatenate([f.channel("PRECT").reshape(-1) for f in fields96])
        assert vals.max() > 5 * vals.mean()

    def test_topography_static_bit_exact(self, fields96):
        first = fields96[0].channel("dPHIS")
        for f in fields96[1:]:
            assert f.channel("dPHIS").tobytes() == first.tobytes()

    def test_prect_correlated_with_ts(self, fields96):
        # shared latent: correlation with TS clearly positive on average
        cors = []
        for f in fields96:
            ts = f.channel("TS").reshape(-1).astype(np.float64)
            pr = np.log(f.channel("PRECT").reshape(-1).astype(np.float64) + 1e-9)
            cors.append(np.corrcoef(ts, pr)[0, 1])
        assert np.mean(cors) > 0.4

    def test_autocorrelation_at_correlation_length(self):
        # TS autocorrelation at lag = correlation_length is near 1/e
        spec = SyntheticSpec(n_samples=100, seed=4)
        lag = int(spec.correlation_length[0])
        acs = []
        for f in generate_fields(spec):
            x = f.channel("TS").astype(np.float64)
            x = x - x.mean()
            denom = (x * x).mean()
            ac_row = (x[:, :-lag] * x[:, lag:]).mean() / denom
            ac_col = (x[:-lag, :] * x[lag:, :]).mean() / denom
            acs.append(0.5 * (ac_row + ac_col))
        assert abs(np.mean(acs) - np.exp(-1)) < 0.15

    def test_deterministic_given_seed(self):
        a = generate_fields(SyntheticSpec(n_samples=3, seed=9))
        b = generate_fields(SyntheticSpec(n_samples=3, seed=9))
        for fa, fb in zip(a, b):
            assert fa.data.tobytes() == fb.data.tobytes()

    def test_invalid_spec_rejected(self):
        with pytest.raises(ValueError, match="divisible"):
            SyntheticSpec(n_samples=1, height=50, width=48)
        with pytest.raises(ValueError, match="positive"):
            SyntheticSpec(n_samples=1, correlation_length=(0.0, 5.0, 5.0))


class TestSplits:
    def test_desk_scale_default_split(self):
        assert split_counts(730, DEFAULT_SPLIT_RATIOS) == (530, 50, 150)

    def test_paper_scale_split(self):
        assert split_counts(7300, DEFAULT_SPLIT_RATIOS) == (5300, 500, 1500)

    def test_remainder_goes_to_train(self):
        # floors are (54, 5, 15); the 1-sample remainder goes to train
        n_train, n_val, n_test = split_counts(75, DEFAULT_SPLIT_RATIOS)
        assert (n_train, n_val, n_test) == (55, 5, 15)
        assert n_train + n_val + n_test == 75

    def test_split_fields_partition(self, fields96):
        splits = split_fields(fields96, (8, 1, 3))
        assert len(splits["train"]) + len(splits["val"]) + len(splits["test"]) == 96
        assert splits["train"][0] is fields96[0]


class TestNormalization:
    def test_round_trip(self, fields96):
        stats = compute_stats(fields96[:10])
        f = fields96[0]
        back = denormalize_field(normalize_field(f, stats), stats)
        assert np.allclose(back.data, f.data, atol=1e-5 * max(s for _, s in stats.values()))

    def test_normalized_train_mean_near_zero(self, fields96):
        train = fields96[:32]
        stats = compute_stats(train)
        normed = [normalize_field(f, stats) for f in train]
        for ci in range(3):
            vals = np.concatenate([f.data[ci].reshape(-1) for f in normed])
            assert abs(vals.astype(np.float64).mean()) < 1e-6
            assert abs(vals.astype(np.float64).std() - 1.0) < 1e-5

    def test_stats_from_train_split_only(self, fields96):
        splits = split_fields(fields96, (8, 1, 3))
        bundle_a = build_bundle(splits, scale=4)
        # shuffling val/test must not change the statistics
        shuffled = dict(splits)
        shuffled["val"] = list(reversed(splits["val"]))
        shuffled["test"] = list(reversed(splits["test"]))
        bundle_b = build_bundle(shuffled, scale=4)
        assert bundle_a.stats == bundle_b.stats

    def test_val_not_asserted_zero_mean(self, fields96):
        # documented non-invariant: val normalized with train stats
        splits = split_fields(fields96, (8, 1, 3))
        bundle = build_bundle(splits, scale=4)
        vals = np.concatenate(
            [hr.channel("TS").reshape(-1) for _, hr in bundle.val]
        ).astype(np.float64)
        assert np.isfinite(vals.mean())


class TestDegradeUpsample:
    def test_degrade_shapes(self, fields96):
        f = fields96[0]
        assert degrade(f, 4).data.shape == (3, 12, 12)
        assert degrade(f, 8).data.shape == (3, 6, 6)

    def test_degrade_constant(self):
        f = Field(("x",), np.full((1, 16, 16), 4.5, np.float32))
        assert np.array_equal(degrade(f, 4).data, np.full((1, 4, 4), 4.5, np.float32))

    def test_degrade_preserves_mean_of_smooth_fields(self, fields96):
        for f in fields96[:10]:
            hi = f.channel("TS").astype(np.float64).mean()
            lo = degrade(f, 4).channel("TS").astype(np.float64).mean()
            assert abs(lo - hi) / abs(hi) < 1e-3

    def test_degrade_validation(self, fields96):
        with pytest.raises(ValueError, match="scale"):
            degrade(fields96[0], 3)
        odd = Field(("x",), np.zeros((1, 20, 20), np.float32))
        with pytest.raises(ValueError, match="divisible"):
            degrade(odd, 8)

    def test_upsample_condition_shape_and_constant(self):
        f = Field(("x",), np.full((1, 12, 12), 2.0, np.float32))
        up = upsample_condition(f, 4)
        assert up.data.shape == (1, 48, 48)
        assert np.array_equal(up.data, np.full((1, 48, 48), 2.0, np.float32))

    def test_round_trip_frequency_loss_ordering(self):
        # smooth field survives degrade->upsample better than a sharp one
        yy, xx = np.mgrid[0:48, 0:48]
        smooth = np.sin(2 * np.pi * xx / 48).astype(np.float32)[None]
        sharp = np.sin(2 * np.pi * xx * 8 / 48).astype(np.float32)[None]

        def rt_rmse(arr):
            f = Field(("x",), arr)
            back = upsample_condition(degrade(f, 4), 4)
            return float(np.sqrt(np.mean((back.data - arr) ** 2)))

        assert rt_rmse(smooth) < rt_rmse(sharp)


class TestBundleAndFiles:
    def test_bundle_scale_consistency(self, fields96):
        bundle = build_bundle(split_fields(fields96, (8, 1, 3)), scale=4)
        for lr, hr in bundle.train + bundle.val + bundle.test:
            assert hr.height == 4 * lr.height
            assert hr.width == 4 * lr.width

    def test_dataset_files_round_trip(self, tmp_path, fields96):
        out = tmp_path / "ds"
        spec = SyntheticSpec(n_samples=24, seed=5)
        digest = generate_dataset(spec, out, (2, 1, 1))
        splits = load_dataset(out)
        assert len(splits["train"]) == 12
        assert len(splits["val"]) == 6
        assert len(splits["test"]) == 6
        topo = read_fields(out / "topography.cgf")
        assert len(topo) == 1
        assert topo[0].channels == ("dPHIS",)
        assert len(digest) == 64

    def test_pipeline_determinism_bit_exact(self, tmp_path):
        spec = SyntheticSpec(n_samples=24, seed=6)
        d1 = generate_dataset(spec, tmp_path / "a", (2, 1, 1))
        d2 = generate_dataset(spec, tmp_path / "b", (2, 1, 1))
        assert d1 == d2
        for name in ("train.cgf", "val.cgf", "test.cgf", "stats.json", "topography.cgf"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_different_seed_different_hash(self, tmp_path):
        d1 = generate_dataset(SyntheticSpec(n_samples=24, seed=1), tmp_path / "a", (2, 1, 1))
        d2 = generate_dataset(SyntheticSpec(n_samples=24, seed=2), tmp_path / "b", (2, 1, 1))
        assert d1 != d2

    def test_stats_json_decimal_strings(self, tmp_path):
        import json

        generate_dataset(SyntheticSpec(n_samples=24, seed=7), tmp_path / "ds", (2, 1, 1))
        with open(tmp_path / "ds" / "stats.json") as fh:
            payload = json.load(fh)
        assert set(payload) == {"TS", "PRECT", "dPHIS"}
        for entry in payload.values():
            assert isinstance(entry["mean"], str)
            float(entry["mean"])  # parses as a decimal string
            assert isinstance(entry["std"], str)

    def test_load_bundle_matches_build_bundle(self, tmp_path):
        spec = SyntheticSpec(n_samples=24, seed=8)
        out = tmp_path / "ds"
        generate_dataset(spec, out, (2, 1, 1))
        bundle = load_bundle(out, scale=4)
        assert bundle.scale == 4
        assert len(bundle.train) == 12
        lr, hr = bundle.train[0]
        assert (lr.height, hr.height) == (12, 48)
