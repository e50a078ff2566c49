"""Pipeline commands: measure, front, ladder, compare, report and benchmark.

Each command reads files, writes files into an output directory together with
a ``run_manifest.json``, and returns the paths it wrote. Argument parsing and
exit codes live in ``server.main``.
"""

from concurrent.futures import ProcessPoolExecutor
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, Tuple
import asyncio
import os
import pathlib

from .api import DataError, EmptyInputError, UsageError
from .config import (
    DEFAULT_ALPHAS,
    HarnessConfig,
    LadderSettings,
    load_harness_config,
    load_ladder_settings,
)
from .evaluation import (
    ComparisonReport,
    aggregate_report,
    compare_ladders,
    distribution_summary,
    render_table,
    write_histogram_csv,
)
from .harness import (
    Runner,
    export_measurements,
    plan_jobs,
    read_resume_manifest,
    run_jobs,
    subprocess_runner,
    tool_versions,
    write_failures,
)
from .ladders import (
    FixedLadderSpec,
    Ladder,
    LadderMethod,
    TargetBitrateSet,
    build_ladder,
    read_ladder,
    write_ladder,
)
from .manifest import MANIFEST_FILE_NAME, RunManifest
from .measurements import MeasurementSet, load_measurements, parse_sequence_metadata
from .pareto import SPACE_3D, ParetoFront, as_alpha, pareto_front
from .utils import expand_paths, logger, slugify, write_json

MEASUREMENTS_FILE = "measurements.csv"
FAILURES_FILE = "failures.csv"
JOB_MANIFEST_FILE = "jobs.jsonl"
COMPARISON_JSON = "comparison.json"
COMPARISON_TABLE = "comparison.txt"
DEFAULT_REPORT_FIELDS = ("decode_time", "bitrate", "xpsnr", "vmaf")
# Files in a ladder directory that are not ladders
NON_LADDER_FILES = {MANIFEST_FILE_NAME, COMPARISON_JSON}
# Row order of comparison tables
METHOD_ORDER = (LadderMethod.DEFAULT, LadderMethod.DYN_RES, LadderMethod.QT_PF, LadderMethod.RQT_PF, LadderMethod.FIXED)
# Methods whose distributions are summarised by the benchmark
HISTOGRAM_METHODS = (LadderMethod.RQT_PF, LadderMethod.QT_PF, LadderMethod.DYN_RES)


def parallel_map(func: Callable, items: Sequence, jobs: int = 1) -> List:
    """Map over disjoint work items, in worker processes when jobs > 1; order is kept."""
    if jobs < 1:
        raise UsageError("--jobs must be >= 1")
    if jobs == 1 or len(items) <= 1:
        return [func(item) for item in items]
    with ProcessPoolExecutor(max_workers=min(jobs, len(items))) as pool:
        return list(pool.map(func, items))


def _out_dir(out: os.PathLike) -> pathlib.Path:
    out = pathlib.Path(out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def load_sets(
    measurements_path: os.PathLike,
    settings: LadderSettings,
    metadata_path: Optional[os.PathLike] = None,
) -> List[MeasurementSet]:
    return load_measurements(pathlib.Path(measurements_path), metadata_path, settings.resolutions, settings.qps)


def ladder_paths(paths: Iterable[os.PathLike]) -> List[pathlib.Path]:
    """Expand directories to the ladder JSON files inside them."""
    return [p for p in expand_paths(paths, ".json") if p.name not in NON_LADDER_FILES]


def read_ladders(paths: Iterable[os.PathLike]) -> List[Ladder]:
    files = ladder_paths(paths)
    if not files:
        raise EmptyInputError("No ladder files given")
    return [read_ladder(path) for path in files]


def method_sort_key(ladder: Ladder) -> Tuple[int, float, str]:
    return (METHOD_ORDER.index(ladder.method), ladder.alpha or 0.0, ladder.sequence)


def group_by_label(ladders: Iterable[Ladder]) -> Dict[str, Dict[str, Ladder]]:
    """{method label: {sequence: ladder}} in table order."""
    groups: Dict[str, Dict[str, Ladder]] = {}
    for ladder in sorted(ladders, key=method_sort_key):
        by_sequence = groups.setdefault(ladder.label, {})
        if ladder.sequence in by_sequence:
            raise DataError(f"Two {ladder.label} ladders for sequence {ladder.sequence}")
        by_sequence[ladder.sequence] = ladder
    return groups


def compare_groups(
    method_ladders: Iterable[Ladder],
    reference_ladders: Iterable[Ladder],
) -> List[Tuple[ComparisonReport, List[ComparisonReport]]]:
    """Aggregate and per-sequence reports of every method against the single reference method."""
    references = group_by_label(reference_ladders)
    if len(references) != 1:
        raise UsageError("Reference ladders must all use one method", {"methods": sorted(references)})
    reference = next(iter(references.values()))

    results = []
    for label, by_sequence in group_by_label(method_ladders).items():
        shared = sorted(set(by_sequence) & set(reference))
        if not shared:
            raise DataError(
                f"{label} and the reference ladders have no sequence in common",
                {"method_sequences": sorted(by_sequence), "reference_sequences": sorted(reference)},
            )
        per_sequence = [compare_ladders(by_sequence[s], reference[s]) for s in shared]
        aggregate = aggregate_report(per_sequence)
        for sequence in sorted(set(by_sequence) ^ set(reference)):
            logger.warning(f"{label}: sequence {sequence} has no counterpart and is left out")
            aggregate.sequences_skipped.append({"sequence": sequence, "metric": "all", "reason": "no counterpart ladder"})
        results.append((aggregate, per_sequence))
    return results


def write_comparison(
    results: List[Tuple[ComparisonReport, List[ComparisonReport]]],
    out_dir: pathlib.Path,
    manifest_id: str,
    marks: bool = True,
) -> List[pathlib.Path]:
    reference = results[0][0].reference if results else None
    document = {
        "header": {"reference": reference, "run_manifest": manifest_id},
        "methods": [
            {"aggregate": aggregate.to_json(), "per_sequence": [r.to_json() for r in per_sequence]}
            for aggregate, per_sequence in results
        ],
    }
    json_path = write_json(out_dir / COMPARISON_JSON, document)
    table_path = out_dir / COMPARISON_TABLE
    table = render_table([aggregate for aggregate, _ in results], marks=marks)
    table_path.write_text(f"# run_manifest={manifest_id}\n" + table, encoding="utf-8", newline="\n")
    logger.info(f"Wrote {table_path}")
    return [json_path, table_path]


def write_histograms(
    ladders: Iterable[Ladder],
    fields: Sequence[str],
    bins: int,
    out_dir: pathlib.Path,
    manifest_id: str,
) -> List[pathlib.Path]:
    """One `<method>__<field>.csv` per method label and field."""
    paths = []
    for label, by_sequence in group_by_label(ladders).items():
        group = list(by_sequence.values())
        for field in fields:
            histogram = distribution_summary(group, field, bins)
            paths.append(write_histogram_csv(histogram, out_dir / f"{slugify(label)}__{field}.csv", manifest_id))
    return paths


# Measurement


def cmd_measure(
    config_path: os.PathLike,
    sequences_path: os.PathLike,
    out: os.PathLike,
    resume: bool = False,
    runner: Runner = subprocess_runner,
) -> List[pathlib.Path]:
    """
    Run the harness over every sequence of a metadata CSV.

    Writes measurements.csv, failures.csv, the jobs.jsonl resume manifest and
    run_manifest.json. Without resume, the resume manifest starts empty.
    """
    config = load_harness_config(config_path)
    out_dir = _out_dir(out)
    workdir = pathlib.Path(config.workdir)
    if not workdir.is_absolute():
        config = HarnessConfig.from_dict({**config.to_dict(), "workdir": str(out_dir / workdir)})

    sequences_path = pathlib.Path(sequences_path)
    if not sequences_path.exists():
        raise UsageError(f"Sequence list not found: {sequences_path}")
    with open(sequences_path, newline="", encoding="utf-8") as handle:
        sequences = parse_sequence_metadata(handle)

    job_manifest = out_dir / JOB_MANIFEST_FILE
    if not resume and job_manifest.exists():
        job_manifest.unlink()
    plan = plan_jobs(sequences.values(), config, read_resume_manifest(job_manifest))
    print(f"Planned {len(plan)} jobs ({sum(j.skippable for j in plan)} already done)")

    async def measure():
        versions = await tool_versions(config, runner)
        results = await run_jobs(plan, config, job_manifest, runner)
        return versions, results

    versions, results = asyncio.run(measure())

    snapshot = load_harness_config(config_path).to_dict()
    manifest = RunManifest.for_inputs({"command": "measure", "harness": snapshot}, [config_path, sequences_path], versions)
    paths = [manifest.write(out_dir)]
    with open(out_dir / MEASUREMENTS_FILE, "w", newline="", encoding="utf-8") as handle:
        export_measurements(results, handle, sequences, config.resolutions, config.qps, manifest.manifest_id)
    paths.append(out_dir / MEASUREMENTS_FILE)
    with open(out_dir / FAILURES_FILE, "w", newline="", encoding="utf-8") as handle:
        failed = write_failures(results, handle)
    paths.append(out_dir / FAILURES_FILE)

    print(f"{len(results) - failed} jobs succeeded, {failed} failed")
    return paths


# Fronts and ladders


def _front_worker(task) -> Tuple[str, ParetoFront]:
    measurement_set, space, metric, alpha = task
    front = pareto_front(measurement_set, space, metric, alpha)
    return measurement_set.name, front


def cmd_front(
    measurements_path: os.PathLike,
    space: str,
    out: os.PathLike,
    alpha: Optional[float] = None,
    metric: Optional[str] = None,
    config_path: Optional[os.PathLike] = None,
    metadata_path: Optional[os.PathLike] = None,
    jobs: int = 1,
) -> List[pathlib.Path]:
    """Write `<sequence>__front-<space>.json` for every sequence."""
    if space == SPACE_3D and alpha is not None:
        raise UsageError("alpha only applies to the mv objective space")
    settings = load_ladder_settings(config_path)
    metric = metric or settings.quality_metric
    sets = load_sets(measurements_path, settings, metadata_path)
    out_dir = _out_dir(out)

    manifest = RunManifest.for_inputs(
        {"command": "front", "space": space, "alpha": alpha, "quality_metric": metric},
        [p for p in (measurements_path, metadata_path) if p is not None],
    )
    fronts = parallel_map(_front_worker, [(s, space, metric, alpha) for s in sets], jobs)
    suffix = space if space == SPACE_3D else f"{space}-{alpha:g}"
    paths = [manifest.write(out_dir)]
    for sequence, front in fronts:
        paths.append(write_json(out_dir / f"{sequence}__front-{suffix}.json", front.to_json(sequence, manifest.manifest_id)))
    print(f"Wrote {len(fronts)} fronts to {out_dir}")
    return paths


def _ladder_worker(task) -> List[Ladder]:
    measurement_set, methods, metric, targets, fixed_spec = task
    return [
        build_ladder(measurement_set, method, metric, alpha, targets, fixed_spec if method == LadderMethod.FIXED.value else None)
        for method, alpha in methods
    ]


def build_all(
    sets: Sequence[MeasurementSet],
    methods: Sequence[Tuple[str, Optional[float]]],
    metric: str,
    targets: TargetBitrateSet,
    fixed_spec: Optional[FixedLadderSpec],
    jobs: int = 1,
) -> List[Ladder]:
    """Build each (method, alpha) ladder for each sequence, one work item per sequence."""
    per_sequence = parallel_map(_ladder_worker, [(s, methods, metric, targets, fixed_spec) for s in sets], jobs)
    return [ladder for ladders in per_sequence for ladder in ladders]


def _fixed_spec(settings: LadderSettings) -> FixedLadderSpec:
    spec = FixedLadderSpec(settings.fixed_ladder_pairs())
    spec.validate(settings.resolutions)
    return spec


def cmd_ladder(
    measurements_path: os.PathLike,
    method: str,
    out: os.PathLike,
    alpha: Optional[float] = None,
    metric: Optional[str] = None,
    targets: Optional[Sequence[float]] = None,
    config_path: Optional[os.PathLike] = None,
    metadata_path: Optional[os.PathLike] = None,
    jobs: int = 1,
) -> List[pathlib.Path]:
    """Write one ladder JSON per sequence for one method."""
    try:
        method = LadderMethod(method).value
    except ValueError:
        raise UsageError(f"Unknown ladder method: {method}", {"allowed": [m.value for m in LadderMethod]})
    if method == LadderMethod.RQT_PF.value and alpha is None:
        raise UsageError("--alpha is required for --method rqt-pf")
    if method != LadderMethod.RQT_PF.value and alpha is not None:
        raise UsageError(f"--alpha only applies to rqt-pf, not {method}")
    if alpha is not None:
        as_alpha(alpha)

    settings = load_ladder_settings(config_path)
    metric = metric or settings.quality_metric
    target_set = TargetBitrateSet.of(targets or settings.targets_mbps)
    sets = load_sets(measurements_path, settings, metadata_path)
    fixed_spec = _fixed_spec(settings) if method == LadderMethod.FIXED.value else None
    out_dir = _out_dir(out)

    config: Dict[str, Any] = {
        "command": "ladder",
        "method": method,
        "alpha": alpha,
        "quality_metric": metric,
        "targets_mbps": list(target_set),
    }
    if fixed_spec is not None:
        config["fixed_ladder"] = [list(entry) for entry in fixed_spec.entries]
    manifest = RunManifest.for_inputs(config, [p for p in (measurements_path, metadata_path) if p is not None])

    ladders = build_all(sets, [(method, alpha)], metric, target_set, fixed_spec, jobs)
    paths = [manifest.write(out_dir)]
    paths.extend(write_ladder(ladder, out_dir, manifest.manifest_id) for ladder in ladders)
    print(f"Wrote {len(ladders)} {method} ladders to {out_dir}")
    return paths


# Evaluation


def cmd_compare(
    method_paths: Sequence[os.PathLike],
    reference_paths: Sequence[os.PathLike],
    out: os.PathLike,
    marks: bool = True,
) -> List[pathlib.Path]:
    """Write comparison.json and the comparison.txt table."""
    method_files = ladder_paths(method_paths)
    reference_files = ladder_paths(reference_paths)
    results = compare_groups(read_ladders(method_files), read_ladders(reference_files))
    out_dir = _out_dir(out)
    manifest = RunManifest.for_inputs({"command": "compare"}, sorted(set(method_files) | set(reference_files)))
    paths = [manifest.write(out_dir)]
    paths.extend(write_comparison(results, out_dir, manifest.manifest_id, marks))
    print(render_table([aggregate for aggregate, _ in results], marks=marks), end="")
    return paths


def cmd_report(
    ladder_files: Sequence[os.PathLike],
    out: os.PathLike,
    fields: Sequence[str] = DEFAULT_REPORT_FIELDS,
    bins: Optional[int] = None,
    config_path: Optional[os.PathLike] = None,
) -> List[pathlib.Path]:
    """Write one histogram CSV per (method, field)."""
    bins = bins or load_ladder_settings(config_path).bins
    files = ladder_paths(ladder_files)
    ladders = read_ladders(files)
    out_dir = _out_dir(out)
    manifest = RunManifest.for_inputs({"command": "report", "fields": list(fields), "bins": bins}, files)
    paths = [manifest.write(out_dir)]
    paths.extend(write_histograms(ladders, fields, bins, out_dir, manifest.manifest_id))
    print(f"Wrote {len(paths) - 1} histograms to {out_dir}")
    return paths


def cmd_benchmark(
    measurements_path: os.PathLike,
    out: os.PathLike,
    alphas: Optional[Sequence[float]] = None,
    metric: Optional[str] = None,
    targets: Optional[Sequence[float]] = None,
    config_path: Optional[os.PathLike] = None,
    metadata_path: Optional[os.PathLike] = None,
    bins: Optional[int] = None,
    jobs: int = 1,
    marks: bool = True,
) -> List[pathlib.Path]:
    """
    The full method comparison: every method against the fixed ladder.

    Ladders go to <out>/ladders, the comparison to <out>, and the decode time,
    bitrate, XPSNR and VMAF histograms of the RQT-PF, QT-PF and DynRes ladders
    to <out>/histograms.
    """
    settings = load_ladder_settings(config_path)
    metric = metric or settings.quality_metric
    alphas = list(alphas or settings.alphas or DEFAULT_ALPHAS)
    target_set = TargetBitrateSet.of(targets or settings.targets_mbps)
    bins = bins or settings.bins
    sets = load_sets(measurements_path, settings, metadata_path)
    fixed_spec = _fixed_spec(settings)
    out_dir = _out_dir(out)

    methods: List[Tuple[str, Optional[float]]] = [
        (LadderMethod.DEFAULT.value, None),
        (LadderMethod.DYN_RES.value, None),
        (LadderMethod.QT_PF.value, None),
    ]
    methods.extend((LadderMethod.RQT_PF.value, alpha) for alpha in alphas)
    methods.append((LadderMethod.FIXED.value, None))

    manifest = RunManifest.for_inputs(
        {
            "command": "benchmark",
            "alphas": alphas,
            "quality_metric": metric,
            "targets_mbps": list(target_set),
            "fixed_ladder": [list(entry) for entry in fixed_spec.entries],
            "bins": bins,
        },
        [p for p in (measurements_path, metadata_path) if p is not None],
    )
    paths = [manifest.write(out_dir)]

    ladders = build_all(sets, methods, metric, target_set, fixed_spec, jobs)
    paths.extend(write_ladder(ladder, out_dir / "ladders", manifest.manifest_id) for ladder in ladders)

    reference = [l for l in ladders if l.method == LadderMethod.FIXED]
    contenders = [l for l in ladders if l.method != LadderMethod.FIXED]
    results = compare_groups(contenders, reference)
    paths.extend(write_comparison(results, out_dir, manifest.manifest_id, marks))

    summarised = [l for l in ladders if l.method in HISTOGRAM_METHODS]
    paths.extend(write_histograms(summarised, DEFAULT_REPORT_FIELDS, bins, out_dir / "histograms", manifest.manifest_id))

    print(render_table([aggregate for aggregate, _ in results], marks=marks), end="")
    return paths
