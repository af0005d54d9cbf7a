import zlib

import numpy as np
import pytest

from climdown.fields import Field
from climdown.metrics import highfreq_energy, percent_improvement, rmse, rmse_per_sample
from climdown.report import (
    EvalReport,
    ReportRow,
    build_report,
    parse_csv,
    render_map,
    render_text,
    report_to_csv,
    write_pgm,
    write_png,
)


def field_of(arr, channels=("PRECT",)):
    return Field(channels, np.asarray(arr, np.float32))


class TestRmse:
    def test_zero_at_equality(self):
        a = [field_of(np.ones((1, 3, 3)))]
        assert rmse(a, a, ("PRECT",)) == 0.0

    def test_hand_value(self):
        pred = np.zeros((1, 1, 1, 2))
        truth = np.array([3.0, 4.0]).reshape(1, 1, 1, 2)
        assert rmse(pred, truth) == pytest.approx(np.sqrt(25 / 2))

    def test_permutation_invariant_over_samples(self):
        rng = np.random.default_rng(0)
        preds = [field_of(rng.random((1, 4, 4))) for _ in range(5)]
        truths = [field_of(rng.random((1, 4, 4))) for _ in range(5)]
        perm = [3, 0, 4, 1, 2]
        a = rmse(preds, truths, ("PRECT",))
        b = rmse([preds[i] for i in perm], [truths[i] for i in perm], ("PRECT",))
        assert a == pytest.approx(b, rel=1e-12)

    def test_symmetry(self):
        rng = np.random.default_rng(1)
        a, b = rng.random((2, 1, 3, 3)), rng.random((2, 1, 3, 3))
        assert rmse(a, b) == pytest.approx(rmse(b, a), rel=1e-15)

    def test_linear_scaling(self):
        rng = np.random.default_rng(2)
        a, b = rng.random((2, 1, 3, 3)), rng.random((2, 1, 3, 3))
        assert rmse(3 * a, 3 * b) == pytest.approx(3 * rmse(a, b), rel=1e-12)

    def test_channel_selection_by_name(self):
        pred = [Field(("TS", "PRECT"), np.stack([np.zeros((2, 2)), np.ones((2, 2))]).astype(np.float32))]
        truth = [Field(("TS", "PRECT"), np.stack([np.full((2, 2), 9.0), np.zeros((2, 2))]).astype(np.float32))]
        # only PRECT differs by 1
        assert rmse(pred, truth, ("PRECT",)) == pytest.approx(1.0)

    def test_normalized_vs_denormalized_guard(self):
        # scaling both args changes the value unless std == 1
        rng = np.random.default_rng(3)
        a, b = rng.random((2, 1, 3, 3)), rng.random((2, 1, 3, 3))
        assert rmse(a, b) != pytest.approx(rmse(5 * a, 5 * b), rel=1e-3)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            rmse(np.zeros((1, 1, 2, 2)), np.zeros((1, 1, 3, 3)))

    def test_per_sample_variant_close_for_homogeneous_errors(self):
        rng = np.random.default_rng(4)
        a = rng.random((4, 1, 8, 8))
        b = a + 0.1
        assert rmse_per_sample(a, b) == pytest.approx(rmse(a, b), rel=1e-6)


class TestPercentImprovement:
    def test_published_fourx_claim(self):
        assert percent_improvement(3.3447, 4.0235) == pytest.approx(16.87, abs=0.01)

    def test_no_improvement_is_zero(self):
        assert percent_improvement(2.0, 2.0) == 0.0

    def test_eightx_column(self):
        assert percent_improvement(5.1803, 5.3193) == pytest.approx(2.61, abs=0.01)

    def test_zero_baseline_guarded(self):
        with pytest.raises(ZeroDivisionError):
            percent_improvement(1.0, 0.0)


class TestHighfreqEnergy:
    def test_constant_is_zero(self):
        assert highfreq_energy(np.full((8, 8), 3.0)) == 0.0

    def test_checkerboard_beats_ramp(self):
        yy, xx = np.mgrid[0:8, 0:8]
        checker = ((xx + yy) % 2 * 2.0 - 1.0)
        ramp = np.tile(np.linspace(-1, 1, 8), (8, 1))
        checker = (checker - checker.mean()) / checker.std()
        ramp = (ramp - ramp.mean()) / ramp.std()
        assert highfreq_energy(checker) > highfreq_energy(ramp)

    def test_checkerboard_laplacian_value(self):
        yy, xx = np.mgrid[0:8, 0:8]
        checker = ((xx + yy) % 2 * 2.0 - 1.0)
        # each interior cell: 4 neighbors of opposite sign -> response 8
        assert highfreq_energy(checker) == pytest.approx(64.0)

    def test_field_channel_selection(self):
        f = Field(("a", "b"), np.stack([np.zeros((8, 8)),
                                        np.random.default_rng(0).random((8, 8))]).astype(np.float32))
        assert highfreq_energy(f, "a") == 0.0
        assert highfreq_energy(f, "b") > 0.0


class TestReport:
    def rows(self):
        return [
            ReportRow("bicubic", "-", 4, 4.0235, 150),
            ReportRow("ddpm", "3in1out", 4, 3.3447, 150),
            ReportRow("bicubic", "-", 8, 5.3193, 150),
        ]

    def test_sorted_by_scale_then_method(self):
        report = build_report(list(reversed(self.rows())))
        keys = [(r.scale, r.method) for r in report.rows]
        assert keys == sorted(keys)

    def test_duplicate_rows_rejected(self):
        rows = self.rows() + [ReportRow("bicubic", "-", 4, 1.0, 1)]
        with pytest.raises(ValueError, match="duplicate"):
            build_report(rows)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            build_report([])

    def test_csv_round_trip(self):
        report = build_report(self.rows(), metadata={"seed": 0})
        back = parse_csv(report_to_csv(report))
        assert back == report.rows

    def test_csv_header(self):
        text = report_to_csv(build_report(self.rows()))
        assert text.splitlines()[0] == "method,io_config,scale,rmse,n"

    def test_single_row_render(self):
        text = report_to_csv(build_report([ReportRow("bilinear", "-", 4, 1.5, 3)]))
        assert len(text.strip().splitlines()) == 2

    def test_text_render_includes_improvement_column(self):
        text = render_text(build_report(self.rows()))
        assert "vs bicubic" in text
        assert "+16.87%" in text

    def test_metadata_lines_rendered(self):
        text = render_text(build_report(self.rows(), metadata={"seed": 42}))
        assert "# seed: 42" in text


class TestMapRendering:
    def test_constant_field_is_mid_gray(self, tmp_path):
        f = field_of(np.full((1, 4, 4), 2.0))
        path = tmp_path / "m.pgm"
        render_map(f, "PRECT", path)
        blob = path.read_bytes()
        header, pixels = blob.split(b"255\n", 1)
        assert header.startswith(b"P5\n4 4\n")
        assert pixels == bytes([128] * 16)

    def test_min_max_scaling(self, tmp_path):
        f = field_of(np.array([[[0.0, 1.0], [0.5, 0.25]]]))
        path = tmp_path / "m.pgm"
        render_map(f, "PRECT", path)
        pixels = path.read_bytes().split(b"255\n", 1)[1]
        assert pixels[0] == 0
        assert pixels[1] == 255

    def test_identical_fields_identical_bytes(self, tmp_path):
        rng = np.random.default_rng(5)
        f = field_of(rng.random((1, 6, 6)))
        render_map(f, "PRECT", tmp_path / "a.pgm")
        render_map(f, "PRECT", tmp_path / "b.pgm")
        assert (tmp_path / "a.pgm").read_bytes() == (tmp_path / "b.pgm").read_bytes()

    def test_png_is_decodable(self, tmp_path):
        arr = np.random.default_rng(6).random((5, 7)).astype(np.float32)
        path = tmp_path / "m.png"
        write_png(arr, path)
        blob = path.read_bytes()
        assert blob[:8] == b"\x89PNG\r\n\x1a\n"
        # IHDR dims
        assert int.from_bytes(blob[16:20], "big") == 7
        assert int.from_bytes(blob[20:24], "big") == 5
        # IDAT decompresses to h * (1 + w) filtered bytes
        idat_start = blob.index(b"IDAT") + 4
        idat_len = int.from_bytes(blob[idat_start - 8 : idat_start - 4], "big")
        raw = zlib.decompress(blob[idat_start : idat_start + idat_len])
        assert len(raw) == 5 * (1 + 7)

    def test_png_renders_via_extension(self, tmp_path):
        f = field_of(np.random.default_rng(7).random((1, 4, 4)))
        path = tmp_path / "x.png"
        render_map(f, "PRECT", path)
        assert path.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
