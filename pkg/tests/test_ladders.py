"""Tests for the ladder builders."""

import json

import pytest

from bitrate_ladder_mcp.core.api import DataError, UsageError
from bitrate_ladder_mcp.core.config import DEFAULT_TARGETS_MBPS
from bitrate_ladder_mcp.core.measurements import MeasurementSet, SequenceId
from bitrate_ladder_mcp.core.ladders import (
    FixedLadderSpec,
    Ladder,
    LadderMethod,
    TargetBitrateSet,
    build_default_ladder,
    build_dynres_ladder,
    build_fixed_ladder,
    build_ladder,
    build_qt_pf_ladder,
    build_rqt_pf_ladder,
    ladder_file_name,
    read_ladder,
    target_kbps,
    write_ladder,
)
from bitrate_ladder_mcp.core.pareto import pareto_front_mv

from .conftest import point, random_set


def make_set(points, native=2160):
    return MeasurementSet(SequenceId("seq", native), points)


def selected_keys(ladder):
    return [r.selected.key if r.selected else None for r in ladder.rungs]


# TargetBitrateSet


def test_default_targets_are_the_twelve_hls_rates():
    targets = TargetBitrateSet()
    assert len(targets) == 12
    assert targets.targets == DEFAULT_TARGETS_MBPS


@pytest.mark.parametrize("targets", [(), (0.3, 0.3), (0.6, 0.3), (0.0, 1.0), (-1.0, 1.0)])
def test_invalid_targets_are_rejected(targets):
    with pytest.raises(UsageError):
        TargetBitrateSet(targets)


def test_target_conversion_is_exact_at_the_boundary():
    assert target_kbps(0.145) == 145.0
    ladder = build_dynres_ladder(make_set([point(bitrate=145.0)]), TargetBitrateSet((0.145,)))
    assert ladder.rungs[0].feasible


# RQT-PF and QT-PF


def test_rqt_pf_samples_front_members_per_target():
    # alpha = 0 keeps the front in (bitrate, quality)
    points = [point(qp=40, bitrate=100.0, xpsnr=30), point(qp=30, bitrate=500.0, xpsnr=35),
              point(qp=20, bitrate=2000.0, xpsnr=40), point(qp=22, bitrate=2200.0, xpsnr=38)]
    ladder = build_rqt_pf_ladder(make_set(points), 0.0, "xpsnr", TargetBitrateSet((0.145, 0.6, 2.4)))
    assert [r.selected.bitrate_kbps for r in ladder.rungs] == [100.0, 500.0, 2000.0]


def test_target_below_every_bitrate_leaves_rung_absent():
    ladder = build_rqt_pf_ladder(make_set([point(bitrate=800.0)]), 0.5, "xpsnr", TargetBitrateSet((0.3, 0.9)))
    assert selected_keys(ladder) == [None, (1080, 30)]
    assert len(ladder.present()) == 1


def test_qt_pf_prefers_faster_of_equal_quality_points():
    points = [point(qp=30, decode_time=2.0, bitrate=500.0, xpsnr=38),
              point(resolution=720, qp=30, decode_time=1.0, bitrate=600.0, xpsnr=38)]
    ladder = build_qt_pf_ladder(make_set(points), "xpsnr", TargetBitrateSet((1.0,)))
    assert ladder.rungs[0].selected.key == (720, 30)
    assert ladder.alpha is None
    assert ladder.method == LadderMethod.QT_PF


def test_qt_pf_skews_to_fast_low_resolution_points():
    points = []
    for resolution, speed in ((540, 0.2), (1080, 1.0), (2160, 4.0)):
        for qp, bitrate in ((42, 300.0), (32, 1200.0), (22, 5000.0)):
            quality = 30 + resolution / 360 + (42 - qp) / 2
            points.append(point(resolution=resolution, qp=qp, bitrate=bitrate * resolution / 1080,
                                decode_time=speed * bitrate / 1000, xpsnr=quality))
    ladder = build_qt_pf_ladder(make_set(points), "xpsnr", TargetBitrateSet((0.3, 1.6, 8.1)))
    front = pareto_front_mv(make_set(points), 1.0, "xpsnr").keys()
    assert all(r.selected.key in front for r in ladder.present())
    assert ladder.rungs[0].selected.resolution == 540


def test_single_point_fills_every_feasible_rung():
    ladder = build_rqt_pf_ladder(make_set([point(bitrate=250.0)]), 0.25, "xpsnr")
    assert selected_keys(ladder) == [None] + [(1080, 30)] * 11


# DynRes


def test_dynres_picks_the_best_xpsnr():
    points = [point(resolution=720, qp=30, bitrate=2000.0, xpsnr=41.0),
              point(resolution=1080, qp=34, bitrate=2100.0, xpsnr=41.5)]
    ladder = build_dynres_ladder(make_set(points), TargetBitrateSet((2.4,)))
    assert ladder.rungs[0].selected.resolution == 1080
    assert ladder.quality_metric == "xpsnr"


def test_dynres_breaks_quality_ties_on_decode_time_then_bitrate():
    points = [point(resolution=720, qp=30, bitrate=2000.0, decode_time=1.5, xpsnr=41.0),
              point(resolution=1080, qp=34, bitrate=2100.0, decode_time=1.0, xpsnr=41.0),
              point(resolution=540, qp=24, bitrate=1900.0, decode_time=1.0, xpsnr=41.0)]
    ladder = build_dynres_ladder(make_set(points), TargetBitrateSet((2.4,)))
    assert ladder.rungs[0].selected.key == (540, 24)


def test_dynres_needs_xpsnr():
    with pytest.raises(DataError):
        build_dynres_ladder(make_set([point(xpsnr=None, psnr=40.0)]))


# Default


def test_default_uses_native_resolution_only():
    points = [point(resolution=720, qp=30, bitrate=100.0, xpsnr=35),
              point(resolution=2160, qp=40, bitrate=400.0, xpsnr=38),
              point(resolution=2160, qp=30, bitrate=3000.0, xpsnr=44)]
    ladder = build_default_ladder(make_set(points), "xpsnr")
    assert ladder.rungs[0].selected is None
    assert all(r.selected.resolution == 2160 for r in ladder.present())
    assert ladder.rungs[-1].selected.key == (2160, 30)


def test_default_without_native_points_is_an_error():
    with pytest.raises(DataError, match="native"):
        build_default_ladder(make_set([point(resolution=720)]), "xpsnr")


def test_default_lowest_rung_absent_on_synthetic_content(synthetic_sets):
    for measurement_set in synthetic_sets:
        native = measurement_set.at_resolution(measurement_set.sequence.native_resolution)
        ladder = build_default_ladder(measurement_set, "xpsnr")
        if min(p.bitrate_kbps for p in native) > 145.0:
            assert not ladder.rungs[0].feasible


# Fixed


def test_fixed_takes_highest_fitting_bitrate_at_mandated_resolution():
    points = [point(resolution=720, qp=q, bitrate=b) for q, b in ((34, 1800.0), (32, 2200.0), (30, 3000.0))]
    ladder = build_fixed_ladder(make_set(points), FixedLadderSpec(((2.4, 720),)))
    rung = ladder.rungs[0]
    assert rung.selected.bitrate_kbps == 2200.0
    assert not rung.over_target


def test_fixed_falls_back_to_lowest_bitrate_and_flags_it():
    points = [point(resolution=360, qp=q, bitrate=b) for q, b in ((50, 200.0), (40, 500.0))]
    ladder = build_fixed_ladder(make_set(points), FixedLadderSpec(((0.145, 360),)))
    rung = ladder.rungs[0]
    assert rung.selected.bitrate_kbps == 200.0
    assert rung.over_target
    assert ladder.to_json()["rungs"][0]["over_target"] is True


def test_fixed_with_missing_resolution_is_an_error():
    with pytest.raises(DataError, match="1440"):
        build_fixed_ladder(make_set([point(resolution=720)]), FixedLadderSpec(((2.4, 1440),)))


def test_fixed_spec_rejects_undeclared_resolutions():
    with pytest.raises(UsageError):
        FixedLadderSpec(((0.3, 360), (0.9, 900))).validate()
    with pytest.raises(UsageError):
        FixedLadderSpec(((0.9, 360), (0.3, 540)))


# Dispatch


def test_build_ladder_alpha_rules(synthetic_set):
    with pytest.raises(UsageError, match="alpha is required"):
        build_ladder(synthetic_set, "rqt-pf", "xpsnr")
    with pytest.raises(UsageError, match="only applies"):
        build_ladder(synthetic_set, "dynres", "xpsnr", alpha=0.5)
    with pytest.raises(UsageError, match="within"):
        build_ladder(synthetic_set, "rqt-pf", "xpsnr", alpha=1.5)
    with pytest.raises(UsageError, match="Unknown ladder method"):
        build_ladder(synthetic_set, "convex-hull", "xpsnr")
    with pytest.raises(UsageError, match="fixed ladder specification"):
        build_ladder(synthetic_set, "fixed", "xpsnr")
    assert build_ladder(synthetic_set, "rqt-pf", "xpsnr", alpha=0.75).label == "rqt-pf(0.75)"


def test_labels_and_file_names(synthetic_set):
    ladder = build_rqt_pf_ladder(synthetic_set, 0.25, "xpsnr")
    assert ladder.display_name == "RQT-PF (alpha=0.25)"
    assert ladder_file_name(ladder) == f"{synthetic_set.name}__rqt-pf-0.25.json"
    assert build_dynres_ladder(synthetic_set).display_name == "DynResXPSNR"


# Properties on random instances


def test_ladder_invariants_on_random_sets(rng):
    targets = TargetBitrateSet()
    for _ in range(200):
        measurement_set = random_set(rng, int(rng.integers(1, 127)), ties=bool(rng.integers(0, 2)))
        alpha = float(rng.uniform(0, 1))
        front = pareto_front_mv(measurement_set, alpha, "xpsnr").keys()
        built = [build_rqt_pf_ladder(measurement_set, alpha, "xpsnr", targets),
                 build_qt_pf_ladder(measurement_set, "xpsnr", targets),
                 build_dynres_ladder(measurement_set, targets)]
        if measurement_set.at_resolution(2160):
            built.append(build_default_ladder(measurement_set, "xpsnr", targets))

        assert all(r.selected.key in front for r in built[0].present())
        qt_front = pareto_front_mv(measurement_set, 1.0, "xpsnr").keys()
        assert all(r.selected.key in qt_front for r in built[1].present())

        for ladder in built:
            assert len(ladder.rungs) == len(targets)
            assert [r.target_mbps for r in ladder.rungs] == list(targets)
            present = ladder.selected_points()
            assert all(r.selected.bitrate_kbps <= target_kbps(r.target_mbps) for r in ladder.present())
            assert all(a.xpsnr <= b.xpsnr for a, b in zip(present, present[1:]))
            assert all(a.bitrate_kbps <= b.bitrate_kbps for a, b in zip(present, present[1:]))
            # Once a rung is filled, every higher rung is too
            feasible = [r.feasible for r in ladder.rungs]
            assert feasible == sorted(feasible)


def test_rate_only_rqt_pf_matches_dynres_without_quality_ties(rng):
    for _ in range(200):
        measurement_set = random_set(rng, int(rng.integers(1, 127)))
        rqt = build_rqt_pf_ladder(measurement_set, 0.0, "xpsnr")
        dynres = build_dynres_ladder(measurement_set)
        assert selected_keys(rqt) == selected_keys(dynres)


# Ladder JSON


def test_ladder_json_round_trip(tmp_path, synthetic_set):
    for ladder in (build_rqt_pf_ladder(synthetic_set, 0.5, "xpsnr"), build_default_ladder(synthetic_set, "vmaf")):
        path = write_ladder(ladder, tmp_path, run_manifest="abc")
        document = json.loads(path.read_text())
        assert document["header"]["run_manifest"] == "abc"
        assert ("alpha" in document["header"]) == (ladder.method == LadderMethod.RQT_PF)
        assert read_ladder(path) == ladder


def test_malformed_ladder_json_is_a_data_error(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{\"header\": {}}")
    with pytest.raises(DataError, match="Malformed"):
        read_ladder(path)
    path.write_text("not json")
    with pytest.raises(DataError):
        read_ladder(path)
    with pytest.raises(DataError):
        Ladder.from_json({"rungs": []})
