"""Tests for BD metrics, decode-time deltas, comparison tables and histograms."""

import math

import numpy as np
import pytest
from scipy.integrate import trapezoid

from bitrate_ladder_mcp.core.api import (
    DataError,
    EmptyInputError,
    InsufficientSamplesError,
    OverlapError,
    SequenceMismatchError,
    UsageError,
)
from bitrate_ladder_mcp.core.config import read_fixed_ladder_pairs, DEFAULT_FIXED_LADDER_PATH
from bitrate_ladder_mcp.core.evaluation import (
    ComparisonReport,
    RateQualityCurve,
    aggregate_report,
    bd_quality,
    bd_rate,
    compare_ladders,
    delta_decode_time,
    distribution_summary,
    clip_to_overlap,
    interpolant,
    overlap,
    render_table,
    write_histogram_csv,
)
from bitrate_ladder_mcp.core.ladders import (
    FixedLadderSpec,
    Ladder,
    LadderMethod,
    LadderRung,
    build_fixed_ladder,
    build_rqt_pf_ladder,
)

from .conftest import point


def make_ladder(rows, method=LadderMethod.DYN_RES, sequence="seq", alpha=None):
    """rows: (bitrate_kbps, decode_time_s, xpsnr) per present rung, or None for an absent rung."""
    rungs = []
    for i, row in enumerate(rows):
        selected = None
        if row is not None:
            bitrate, decode_time, xpsnr = row
            selected = point(sequence, 1080, 50 - i, bitrate, decode_time, xpsnr=xpsnr, psnr=xpsnr - 1.0)
        rungs.append(LadderRung(float(i + 1), selected))
    return Ladder(method, sequence, "xpsnr", tuple(rungs), alpha)


REFERENCE_ROWS = [(200.0, 1.0, 32.0), (600.0, 2.0, 36.0), (1500.0, 3.0, 39.0), (4000.0, 4.0, 42.0)]


# BD-rate and BD-quality


def test_identical_curves_give_zero():
    curve = RateQualityCurve.from_rates([200, 600, 1500, 4000], [32, 36, 39, 42])
    assert bd_rate(curve, curve) == 0.0
    assert bd_quality(curve, curve) == 0.0


@pytest.mark.parametrize("k", [0.5, 0.8, 1.25, 2.0])
def test_scaled_rates_give_exact_bd_rate(k):
    rates, qualities = [200, 600, 1500, 4000], [32, 36, 39, 42]
    reference = RateQualityCurve.from_rates(rates, qualities)
    method = RateQualityCurve.from_rates([k * r for r in rates], qualities)
    assert bd_rate(method, reference) == pytest.approx((k - 1.0) * 100.0, abs=1e-9)


def test_quality_offset_gives_exact_bd_quality():
    rates = [200, 600, 1500, 4000]
    reference = RateQualityCurve.from_rates(rates, [32, 36, 39, 42])
    method = RateQualityCurve.from_rates(rates, [33, 37, 40, 43])
    assert bd_quality(method, reference) == pytest.approx(1.0, abs=1e-9)
    assert bd_quality(reference, method) == pytest.approx(-1.0, abs=1e-9)


def test_two_sample_curves_use_linear_interpolation():
    reference = RateQualityCurve.from_rates([100, 1000], [30, 40])
    method = RateQualityCurve.from_rates([100, 1000], [31, 41])
    assert bd_quality(method, reference) == pytest.approx(1.0, abs=1e-12)
    x, y = reference.quality_over_rate()
    assert float(interpolant(x, y)(2.5)) == pytest.approx(35.0)


def test_non_overlapping_curves_raise():
    low = RateQualityCurve.from_rates([100, 200, 300], [30, 31, 32])
    high = RateQualityCurve.from_rates([1000, 2000, 3000], [40, 41, 42])
    with pytest.raises(OverlapError):
        bd_rate(low, high)
    with pytest.raises(OverlapError):
        bd_quality(low, high)
    with pytest.raises(OverlapError):
        overlap(np.array([1.0, 2.0]), np.array([2.0, 3.0]), "quality")


def test_single_sample_curve_is_insufficient():
    one = RateQualityCurve.from_rates([500], [35])
    many = RateQualityCurve.from_rates([200, 600, 1500], [32, 36, 39])
    with pytest.raises(InsufficientSamplesError):
        bd_rate(one, many)
    with pytest.raises(InsufficientSamplesError):
        bd_quality(many, one)


def test_repeated_samples_collapse_to_the_best_value():
    curve = RateQualityCurve.from_rates([500, 500, 700, 900], [35, 36, 36, 38])
    quality_x, rate_y = curve.rate_over_quality()
    assert list(quality_x) == [35, 36, 38]
    assert rate_y[1] == math.log10(500)
    rate_x, quality_y = curve.quality_over_rate()
    assert len(rate_x) == 3
    assert quality_y[0] == 36


def oracle_mean_difference(method_xy, reference_xy, panels=100_000):
    (xm, ym), (xr, yr) = method_xy, reference_xy
    low, high = max(xm[0], xr[0]), min(xm[-1], xr[-1])
    grid = np.linspace(low, high, panels + 1)
    f_method = interpolant(*clip_to_overlap(xm, ym, low, high))
    f_reference = interpolant(*clip_to_overlap(xr, yr, low, high))
    difference = f_method(grid) - f_reference(grid)
    return trapezoid(difference, grid) / (high - low)


def random_curve(rng, size):
    rates = np.sort(10 ** rng.uniform(2.0, 4.2, size))
    qualities = np.sort(rng.uniform(28.0, 46.0, size))
    return RateQualityCurve.from_rates(rates.tolist(), qualities.tolist())


def test_bd_metrics_match_dense_trapezoid_oracle(rng):
    checked = 0
    for _ in range(500):
        method = random_curve(rng, int(rng.integers(4, 13)))
        reference = random_curve(rng, int(rng.integers(4, 13)))
        try:
            rate = bd_rate(method, reference)
        except OverlapError:
            continue
        d = oracle_mean_difference(method.rate_over_quality(), reference.rate_over_quality())
        assert rate == pytest.approx((10.0 ** d - 1.0) * 100.0, abs=0.01)
        try:
            quality = bd_quality(method, reference)
        except OverlapError:
            continue
        expected = oracle_mean_difference(method.quality_over_rate(), reference.quality_over_rate())
        assert quality == pytest.approx(expected, abs=0.001)
        checked += 1
    assert checked > 250


def test_samples_beyond_the_overlap_do_not_change_bd_rate():
    reference = RateQualityCurve.from_rates([200, 400, 800, 1600], [30, 34, 37, 39])
    method = RateQualityCurve.from_rates([180, 350, 720, 1500], [30.5, 34.5, 37.5, 39.5])
    extended = RateQualityCurve.from_rates([180, 350, 720, 1500, 5000], [30.5, 34.5, 37.5, 39.5, 40.2])
    padded = RateQualityCurve.from_rates([100, 200, 400, 800, 1600], [27, 30, 34, 37, 39])
    expected = bd_rate(method, reference)
    assert bd_rate(extended, reference) == pytest.approx(expected, abs=1e-12)
    assert bd_rate(method, padded) == pytest.approx(expected, abs=1e-12)


def with_sample(curve, log_rate, quality):
    return RateQualityCurve(curve.samples + ((log_rate, quality),))


def test_bd_rate_ignores_samples_outside_the_overlap_on_random_curves(rng):
    checked = 0
    for _ in range(300):
        method = random_curve(rng, int(rng.integers(3, 10)))
        reference = random_curve(rng, int(rng.integers(3, 10)))
        try:
            expected = bd_rate(method, reference)
        except OverlapError:
            continue
        # Extend whichever curve already reaches further at each end
        (qm, rm), (qr, rr) = method.rate_over_quality(), reference.rate_over_quality()
        top, top_q, top_r = (method, qm, rm) if qm[-1] >= qr[-1] else (reference, qr, rr)
        top_extended = with_sample(top, float(top_r[-1]) + 0.2, float(top_q[-1]) + rng.uniform(0.1, 3.0))
        if top is method:
            method = top_extended
        else:
            reference = top_extended
        (qm, rm), (qr, rr) = method.rate_over_quality(), reference.rate_over_quality()
        bottom, bottom_q, bottom_r = (method, qm, rm) if qm[0] <= qr[0] else (reference, qr, rr)
        bottom_extended = with_sample(bottom, float(bottom_r[0]) - 0.2, float(bottom_q[0]) - rng.uniform(0.1, 3.0))
        if bottom is method:
            method = bottom_extended
        else:
            reference = bottom_extended
        assert bd_rate(method, reference) == pytest.approx(expected, abs=1e-9)
        checked += 1
    assert checked > 100


def test_bd_rate_is_antisymmetric(rng):
    checked = 0
    for _ in range(300):
        a = random_curve(rng, int(rng.integers(2, 10)))
        b = random_curve(rng, int(rng.integers(2, 10)))
        try:
            forward, backward = bd_rate(a, b), bd_rate(b, a)
        except OverlapError:
            continue
        assert (1.0 + forward / 100.0) * (1.0 + backward / 100.0) == pytest.approx(1.0, abs=1e-12)
        checked += 1
    assert checked > 100


def test_interpolant_never_overshoots(rng):
    for _ in range(200):
        x, y = random_curve(rng, int(rng.integers(3, 13))).rate_over_quality()
        values = interpolant(x, y)(np.linspace(x[0], x[-1], 2001))
        assert np.all(np.diff(values) >= -1e-12)
        assert values.min() >= y.min() - 1e-12
        assert values.max() <= y.max() + 1e-12


# Decode-time delta


def test_delta_decode_time():
    reference = make_ladder([(200.0, 40.0, 32.0), (600.0, 60.0, 36.0)], LadderMethod.FIXED)
    faster = make_ladder([(200.0, 30.0, 32.0), (600.0, 50.0, 36.0)])
    assert delta_decode_time(faster, reference) == pytest.approx(-20.0)
    same_total = make_ladder([(200.0, 50.0, 32.0), (600.0, 50.0, 36.0)])
    assert delta_decode_time(same_total, reference) == 0.0


def test_delta_decode_time_sums_present_rungs_only():
    reference = make_ladder([(200.0, 1.0, 32.0), (600.0, 1.0, 36.0)], LadderMethod.FIXED)
    method = make_ladder([None, (600.0, 1.0, 36.0)], LadderMethod.DEFAULT)
    assert delta_decode_time(method, reference) == pytest.approx(-50.0)


def test_delta_decode_time_is_unchanged_by_scaling_all_times(rng):
    for _ in range(100):
        size = int(rng.integers(1, 13))
        method_times = rng.uniform(0.05, 20.0, size)
        reference_times = rng.uniform(0.05, 20.0, size)
        c = float(10 ** rng.uniform(-3, 3))

        def ladders(scale):
            method = make_ladder([(100.0 * (i + 1), scale * t, 30.0 + i) for i, t in enumerate(method_times)])
            reference = make_ladder([(100.0 * (i + 1), scale * t, 30.0 + i) for i, t in enumerate(reference_times)],
                                    LadderMethod.FIXED)
            return method, reference

        assert delta_decode_time(*ladders(c)) == pytest.approx(delta_decode_time(*ladders(1.0)), rel=1e-9, abs=1e-9)


def test_delta_decode_time_errors():
    reference = make_ladder(REFERENCE_ROWS, LadderMethod.FIXED)
    with pytest.raises(SequenceMismatchError):
        delta_decode_time(make_ladder(REFERENCE_ROWS, sequence="other"), reference)
    with pytest.raises(EmptyInputError):
        delta_decode_time(make_ladder([None, None]), reference)


# Comparison reports


def test_compare_identical_ladders_is_all_zero(synthetic_set):
    ladder = build_rqt_pf_ladder(synthetic_set, 0.5, "xpsnr")
    report = compare_ladders(ladder, ladder)
    assert report.bdr == {"psnr": 0.0, "xpsnr": 0.0, "vmaf": 0.0}
    assert report.bd_quality == {"psnr": 0.0, "xpsnr": 0.0, "vmaf": 0.0}
    assert report.delta_t_d == 0.0
    assert report.sequences_included == 1
    assert report.sequences_skipped == []


def test_compare_against_fixed_ladder(synthetic_set):
    fixed = build_fixed_ladder(synthetic_set, FixedLadderSpec(read_fixed_ladder_pairs(DEFAULT_FIXED_LADDER_PATH)))
    report = compare_ladders(build_rqt_pf_ladder(synthetic_set, 0.75, "xpsnr"), fixed)
    assert report.method == "rqt-pf(0.75)"
    assert report.reference == "fixed"
    assert report.reference_name == "FixedLadder"
    assert all(isinstance(report.value(key), float) for key in ("bdr_xpsnr", "bdq_vmaf", "delta_t_d"))


def test_uncomputable_metrics_are_skipped_not_fatal():
    reference = make_ladder(REFERENCE_ROWS, LadderMethod.FIXED)
    method = make_ladder([None, None, None, (4000.0, 1.0, 42.0)])
    report = compare_ladders(method, reference, metrics=("xpsnr",))
    assert report.bdr["xpsnr"] is None
    assert report.bd_quality["xpsnr"] is None
    assert report.delta_t_d == pytest.approx(-90.0)
    assert report.absent_rungs == 3
    assert report.sequences_included == 0
    assert {s["metric"] for s in report.sequences_skipped} == {"bdr_xpsnr", "bdq_xpsnr"}


def test_missing_metric_is_skipped():
    reference = make_ladder(REFERENCE_ROWS, LadderMethod.FIXED)
    report = compare_ladders(make_ladder(REFERENCE_ROWS), reference, metrics=("vmaf", "xpsnr"))
    assert report.bdr["vmaf"] is None
    assert report.bdr["xpsnr"] == 0.0
    assert report.sequences_included == 1


def test_compare_rejects_different_sequences():
    with pytest.raises(SequenceMismatchError):
        compare_ladders(make_ladder(REFERENCE_ROWS, sequence="a"), make_ladder(REFERENCE_ROWS, sequence="b"))


def test_aggregate_means_and_skip_accounting():
    reports = [
        ComparisonReport("dynres", "fixed", sequence="a", bdr={"xpsnr": -10.0}, bd_quality={"xpsnr": 0.5},
                         delta_t_d=20.0, sequences_included=1, absent_rungs=1),
        ComparisonReport("dynres", "fixed", sequence="b", bdr={"xpsnr": -20.0}, bd_quality={"xpsnr": 1.5},
                         delta_t_d=40.0, sequences_included=1),
        ComparisonReport("dynres", "fixed", sequence="c", bdr={"xpsnr": None}, bd_quality={"xpsnr": None},
                         delta_t_d=0.0, sequences_included=0,
                         sequences_skipped=[{"sequence": "c", "metric": "bdr_xpsnr", "reason": "r"}]),
    ]
    aggregate = aggregate_report(reports)
    assert aggregate.bdr["xpsnr"] == pytest.approx(-15.0)
    assert aggregate.bd_quality["xpsnr"] == pytest.approx(1.0)
    assert aggregate.delta_t_d == pytest.approx(20.0)
    assert aggregate.metric_counts == {"bdr_xpsnr": 2, "bdq_xpsnr": 2, "delta_t_d": 3}
    assert aggregate.sequences_included == 2
    assert aggregate.absent_rungs == 1
    assert {"sequence": "c", "metric": "all", "reason": "no BD metric could be computed"} in aggregate.sequences_skipped
    assert len(aggregate.sequences_skipped) == 2


def test_aggregate_rejects_mixed_methods():
    with pytest.raises(DataError):
        aggregate_report([ComparisonReport("dynres", "fixed"), ComparisonReport("qt-pf", "fixed")])
    with pytest.raises(EmptyInputError):
        aggregate_report([])


# Table


def table_report(name, bdr_x, delta):
    return ComparisonReport(name, "fixed", method_name=name, reference_name="FixedLadder",
                            bdr={"xpsnr": bdr_x}, delta_t_d=delta)


def test_table_marks_best_and_second_best():
    table = render_table([table_report("A", -5.0, 10.0), table_report("B", -12.5, -30.0),
                          table_report("C", 3.0, -20.0)])
    lines = table.splitlines()
    assert lines[0] == lines[3] == lines[-1]
    assert set(lines[0]) == {"="}
    assert "vs FixedLadder" in lines[2]
    row_a, row_b, row_c = lines[4:7]
    assert "**-12.50**" in row_b and "**-30.00**" in row_b
    assert "_-5.00_" in row_a and "_-20.00_" in row_c
    assert "n/a" in row_a
    assert table.endswith("\n")


def test_table_marks_only_best_of_two_and_none_when_plain():
    reports = [table_report("A", -5.0, 10.0), table_report("B", -12.5, -30.0)]
    marked = render_table(reports)
    assert "**-12.50**" in marked and "**-30.00**" in marked
    assert "_-5.00_" not in marked and "_10.00_" not in marked
    assert "**" not in render_table(reports, marks=False)


# Histograms


def test_single_bin_has_density_one():
    histogram = distribution_summary([make_ladder(REFERENCE_ROWS)], "bitrate", 1)
    assert histogram.densities == [1.0]
    assert histogram.edges == [200.0, 4000.0]


def test_identical_values_give_a_degenerate_bin():
    histogram = distribution_summary([make_ladder([(500.0, 2.0, 35.0)] * 3)], "decode_time", 10)
    assert histogram.bins() == [(2.0, 2.0, 1.0)]
    assert histogram.stats["count"] == 3.0


def test_histogram_densities():
    ladder = make_ladder([(100.0, 1.0, 30.0), (200.0, 1.0, 31.0), (300.0, 3.0, 32.0), (400.0, 3.0, 33.0)])
    histogram = distribution_summary([ladder], "decode_time", 2)
    assert histogram.densities == [0.5, 0.5]
    assert math.fsum(distribution_summary([ladder], "bitrate", 7).densities) == pytest.approx(1.0)


def test_histogram_pools_ladders_and_skips_absent_rungs():
    histogram = distribution_summary([make_ladder([None, (100.0, 1.0, 30.0)]),
                                      make_ladder([(300.0, 2.0, 30.0)], sequence="other")], "bitrate", 4)
    assert histogram.stats == {"count": 2.0, "min": 100.0, "max": 300.0, "mean": 200.0, "median": 200.0}


def test_histogram_errors():
    ladder = make_ladder(REFERENCE_ROWS)
    with pytest.raises(DataError, match="vmaf"):
        distribution_summary([ladder], "vmaf", 5)
    with pytest.raises(UsageError):
        distribution_summary([ladder], "ssim", 5)
    with pytest.raises(UsageError):
        distribution_summary([ladder], "bitrate", 0)
    with pytest.raises(EmptyInputError):
        distribution_summary([make_ladder([None])], "bitrate", 5)


def test_histogram_csv(tmp_path):
    ladder = make_ladder([(100.0, 1.0, 30.0), (200.0, 1.0, 31.0), (300.0, 3.0, 32.0), (400.0, 3.0, 33.0)])
    path = write_histogram_csv(distribution_summary([ladder], "decode_time", 2), tmp_path / "h.csv", "abc")
    assert path.read_text().splitlines() == [
        "# run_manifest=abc",
        "# field=decode_time",
        "# count=4.0",
        "# min=1.0",
        "# max=3.0",
        "# mean=2.0",
        "# median=2.0",
        "bin_left,bin_right,density",
        "1.0,2.0,0.5",
        "2.0,3.0,0.5",
    ]
