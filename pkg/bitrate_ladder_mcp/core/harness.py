"""Encode / decode / metric orchestration over the (resolution x QP) grid.

Every external step is a command template from HarnessConfig. Jobs run as
asyncio subprocesses, at most ``parallel_jobs`` at a time. Finished jobs are
appended to a line-delimited JSON resume manifest by a single writer task, so
an interrupted run can be restarted and only the missing jobs execute.
"""

from dataclasses import asdict, dataclass, replace
from typing import Any, Awaitable, Callable, Dict, Iterable, List, Optional, Sequence, TextIO, Tuple
import asyncio
import csv
import json
import os
import pathlib
import re
import shlex
import sys
import time

from .api import ToolError, UsageError
from .config import HarnessConfig
from .measurements import EncodePoint, MeasurementSet, SequenceId, serialize_measurements
from .utils import format_float, logger

STATUS_OK = "ok"
STATUS_FAILED = "failed"
FAILURE_COLUMNS = ("sequence", "resolution", "qp", "stage", "exit_status")
LOG_EXCERPT_CHARS = 2000

# `key=value` lines, plus the summaries ffmpeg's psnr, xpsnr and libvmaf filters print
METRIC_PATTERNS: Dict[str, Tuple[re.Pattern, ...]] = {
    "psnr": (
        re.compile(r"^\s*psnr(?:_db)?\s*=\s*([-+0-9.eE]+)\s*$", re.IGNORECASE | re.MULTILINE),
        re.compile(r"PSNR .*?average:([-+0-9.eE]+)"),
    ),
    "xpsnr": (
        re.compile(r"^\s*xpsnr(?:_db)?\s*=\s*([-+0-9.eE]+)\s*$", re.IGNORECASE | re.MULTILINE),
        re.compile(r"XPSNR\s+y:\s*([-+0-9.eE]+)"),
    ),
    "vmaf": (
        re.compile(r"^\s*vmaf\s*=\s*([-+0-9.eE]+)\s*$", re.IGNORECASE | re.MULTILINE),
        re.compile(r"VMAF score[:=]?\s*([-+0-9.eE]+)"),
    ),
}
DECODE_TIME_PATTERN = re.compile(r"^\s*decode_time_s\s*=\s*([0-9.eE+-]+)\s*$", re.MULTILINE)


@dataclass(frozen=True)
class ProcessOutcome:
    returncode: int
    stdout: str
    stderr: str
    elapsed_s: float


Runner = Callable[[List[str], Optional[str]], Awaitable[ProcessOutcome]]


async def subprocess_runner(argv: List[str], cwd: Optional[str] = None) -> ProcessOutcome:
    """Run one external command and time it with the wall clock."""
    start = time.perf_counter()
    try:
        process = await asyncio.create_subprocess_exec(
            *argv,
            cwd=cwd,
            stdout=asyncio.subprocess.PIPE,
            stderr=asyncio.subprocess.PIPE,
        )
    except FileNotFoundError:
        raise ToolError(f"Tool not found: {argv[0]}", {"argv": argv})
    try:
        stdout, stderr = await process.communicate()
    except asyncio.CancelledError:
        process.kill()
        await process.wait()
        raise
    elapsed = time.perf_counter() - start
    return ProcessOutcome(
        process.returncode,
        stdout.decode("utf-8", errors="replace"),
        stderr.decode("utf-8", errors="replace"),
        elapsed,
    )


@dataclass(frozen=True)
class Job:
    """One (sequence, resolution, qp) cell of the grid."""
    sequence: SequenceId
    resolution: int
    qp: int
    skippable: bool = False

    @property
    def key(self) -> Tuple[str, int, int]:
        return (self.sequence.name, self.resolution, self.qp)

    @property
    def job_id(self) -> str:
        return f"{self.sequence.name}__{self.resolution}p__qp{self.qp}"


@dataclass
class JobResult:
    sequence: str
    resolution: int
    qp: int
    status: str = STATUS_OK
    bitstream_size: Optional[int] = None
    bitrate_kbps: Optional[float] = None
    decode_time_s: Optional[float] = None
    psnr: Optional[float] = None
    xpsnr: Optional[float] = None
    vmaf: Optional[float] = None
    stage: Optional[str] = None
    exit_status: Optional[int] = None
    log: str = ""

    @property
    def key(self) -> Tuple[str, int, int]:
        return (self.sequence, self.resolution, self.qp)

    @property
    def ok(self) -> bool:
        return self.status == STATUS_OK

    def to_point(self) -> EncodePoint:
        return EncodePoint(
            sequence=self.sequence,
            resolution=self.resolution,
            qp=self.qp,
            bitrate_kbps=self.bitrate_kbps,
            decode_time_s=self.decode_time_s,
            psnr=self.psnr,
            xpsnr=self.xpsnr,
            vmaf=self.vmaf,
        )

    def to_json(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_json(cls, data: Dict[str, Any]) -> "JobResult":
        known = set(cls.__dataclass_fields__)
        return cls(**{k: v for k, v in data.items() if k in known})


def read_resume_manifest(path: Optional[os.PathLike]) -> Dict[Tuple[str, int, int], JobResult]:
    """
    Successful results recorded in a resume manifest, by job key.

    A torn last line (the run was killed mid-write) is ignored; failed jobs are
    not returned so they are attempted again.
    """
    if path is None or not pathlib.Path(path).exists():
        return {}
    completed: Dict[Tuple[str, int, int], JobResult] = {}
    with open(path, encoding="utf-8") as handle:
        for line_number, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                result = JobResult.from_json(json.loads(line))
            except (json.JSONDecodeError, TypeError) as e:
                logger.warning(f"{path}:{line_number}: ignoring unreadable manifest line ({e})")
                continue
            if result.ok:
                completed[result.key] = result
            else:
                completed.pop(result.key, None)
    logger.debug(f"Resume manifest {path}: {len(completed)} completed jobs")
    return completed


def _has_torn_line(path: os.PathLike) -> bool:
    """True if the file is non-empty and does not end with a newline."""
    path = pathlib.Path(path)
    if not path.exists() or path.stat().st_size == 0:
        return False
    with open(path, "rb") as handle:
        handle.seek(-1, os.SEEK_END)
        return handle.read(1) != b"\n"


def plan_jobs(
    sequences: Iterable[SequenceId],
    config: HarnessConfig,
    completed: Optional[Dict[Tuple[str, int, int], JobResult]] = None,
) -> List[Job]:
    """
    Enumerate every job, ordered by sequence name, then resolution, then QP.

    Args:
        sequences: Sequences to measure
        config: Harness configuration (defines the grid)
        completed: Results from a resume manifest; matching jobs are marked skippable

    Returns:
        |sequences| * |R| * |Q| jobs
    """
    completed = completed or {}
    plan = []
    for sequence in sorted(sequences, key=lambda s: s.name):
        for resolution in sorted(config.resolutions):
            for qp in sorted(config.qps):
                plan.append(Job(sequence, resolution, qp, (sequence.name, resolution, qp) in completed))
    logger.debug(f"Planned {len(plan)} jobs, {sum(j.skippable for j in plan)} skippable")
    return plan


def parse_metric_output(text: str) -> Dict[str, float]:
    """Pick the quality values out of metric tool output; the last match wins."""
    values = {}
    for metric, patterns in METRIC_PATTERNS.items():
        for pattern in patterns:
            matches = pattern.findall(text)
            if matches:
                values[metric] = float(matches[-1])
                break
    return values


def parse_decode_time(text: str) -> Optional[float]:
    matches = DECODE_TIME_PATTERN.findall(text)
    return float(matches[-1]) if matches else None


def job_fields(job: Job, config: HarnessConfig) -> Dict[str, Any]:
    """Values substituted into the command templates of one job."""
    sequence = job.sequence
    stem = pathlib.Path(config.workdir) / sequence.name / f"{sequence.name}_{job.resolution}p_qp{job.qp}"
    source = config.source_pattern.format(sequence=sequence.name)
    return {
        "python": sys.executable,
        "sequence": sequence.name,
        "source": source,
        "bitstream": str(stem.with_suffix(".bit")),
        "decoded": str(stem.with_suffix(".yuv")),
        "width": config.width_for(job.resolution),
        "height": job.resolution,
        "ref_width": config.width_for(sequence.native_resolution),
        "ref_height": sequence.native_resolution,
        "qp": job.qp,
        "threads": config.threads_per_job,
        "fps": format_float(sequence.frame_rate) if sequence.frame_rate else "",
        "frames": sequence.frame_count or "",
    }


def render_command(template: str, fields: Dict[str, Any]) -> List[str]:
    """Split a template into argv, then fill the placeholders of each token."""
    return [token.format(**fields) for token in shlex.split(template)]


def _excerpt(outcome: ProcessOutcome) -> str:
    text = (outcome.stdout + outcome.stderr).strip()
    return text[-LOG_EXCERPT_CHARS:]


async def run_job(job: Job, config: HarnessConfig, runner: Runner = subprocess_runner) -> JobResult:
    """Encode, decode `repeats` times and measure quality for one job."""
    fields = job_fields(job, config)
    result = JobResult(job.sequence.name, job.resolution, job.qp)
    pathlib.Path(fields["bitstream"]).parent.mkdir(parents=True, exist_ok=True)

    def fail(stage: str, exit_status: Optional[int], log: str) -> JobResult:
        logger.error(f"{job.job_id}: {stage} failed (exit status {exit_status})")
        return replace(result, status=STATUS_FAILED, stage=stage, exit_status=exit_status, log=log)

    encode = await runner(render_command(config.encode_template, {
        **fields, "input": fields["source"], "output": fields["bitstream"],
    }), None)
    if encode.returncode != 0:
        return fail("encode", encode.returncode, _excerpt(encode))
    try:
        size = os.path.getsize(fields["bitstream"])
    except OSError:
        return fail("encode", encode.returncode, f"no bitstream written to {fields['bitstream']}")
    if size <= 0:
        return fail("encode", encode.returncode, "empty bitstream")

    decode_times = []
    for _ in range(config.repeats):
        decode = await runner(render_command(config.decode_template, {
            **fields, "input": fields["bitstream"], "output": fields["decoded"],
        }), None)
        if decode.returncode != 0:
            return fail("decode", decode.returncode, _excerpt(decode))
        reported = parse_decode_time(decode.stdout) if config.decode_time_from_output else None
        decode_times.append(reported if reported is not None else decode.elapsed_s)

    metric = await runner(render_command(config.metric_template, {
        **fields, "input": fields["decoded"], "reference": fields["source"],
    }), None)
    if metric.returncode != 0:
        return fail("metric", metric.returncode, _excerpt(metric))
    quality = parse_metric_output(metric.stdout + "\n" + metric.stderr)
    if not quality:
        return fail("metric", metric.returncode, "unparseable metric output: " + _excerpt(metric))

    duration = job.sequence.duration_s
    return replace(
        result,
        bitstream_size=size,
        bitrate_kbps=size * 8 / duration / 1000.0,
        decode_time_s=min(decode_times),
        log=_excerpt(metric),
        **quality,
    )


async def run_jobs(
    plan: Sequence[Job],
    config: HarnessConfig,
    manifest_path: Optional[os.PathLike] = None,
    runner: Runner = subprocess_runner,
) -> List[JobResult]:
    """
    Execute a plan and return one JobResult per job, in plan order.

    Skippable jobs are taken from the resume manifest. A failing job is
    recorded and the run continues; a missing tool aborts the run and cancels
    every job still running or waiting.
    """
    missing = sorted({j.sequence.name for j in plan if j.sequence.duration_s is None})
    if missing:
        raise UsageError(
            "fps and frame_count are required to compute bitrates",
            {"sequences_without_metadata": missing},
        )

    completed = read_resume_manifest(manifest_path)
    semaphore = asyncio.Semaphore(config.parallel_jobs)
    finished: asyncio.Queue = asyncio.Queue()

    async def writer() -> None:
        torn = manifest_path is not None and _has_torn_line(manifest_path)
        handle = open(manifest_path, "a", encoding="utf-8") if manifest_path else None
        try:
            if torn:
                handle.write("\n")
            while True:
                result = await finished.get()
                if result is None:
                    return
                if handle is not None:
                    handle.write(json.dumps(result.to_json(), sort_keys=True) + "\n")
                    handle.flush()
        finally:
            if handle is not None:
                handle.close()

    async def execute(job: Job) -> JobResult:
        if job.skippable and job.key in completed:
            return completed[job.key]
        async with semaphore:
            logger.debug(f"Running {job.job_id}")
            result = await run_job(job, config, runner)
        await finished.put(result)
        return result

    if manifest_path is not None:
        pathlib.Path(manifest_path).parent.mkdir(parents=True, exist_ok=True)
    writer_task = asyncio.create_task(writer())
    tasks = [asyncio.create_task(execute(job)) for job in plan]
    try:
        results = await asyncio.gather(*tasks)
    except BaseException:
        for task in tasks:
            task.cancel()
        await asyncio.gather(*tasks, return_exceptions=True)
        raise
    finally:
        await finished.put(None)
        await writer_task

    failures = sum(not r.ok for r in results)
    logger.info(f"Ran {len(plan)} jobs: {len(results) - failures} ok, {failures} failed")
    return list(results)


def export_measurements(
    results: Sequence[JobResult],
    stream: TextIO,
    sequences: Optional[Dict[str, SequenceId]] = None,
    resolutions: Optional[Sequence[int]] = None,
    qps: Optional[Sequence[int]] = None,
    run_manifest: Optional[str] = None,
) -> List[MeasurementSet]:
    """Write successful results in the measurement CSV format and return them as sets."""
    successes = [r for r in results if r.ok]
    if not successes:
        raise ToolError("No job succeeded; nothing to export", {"failed": len(results)})
    sequences = sequences or {}
    grouped: Dict[str, List[EncodePoint]] = {}
    for result in successes:
        grouped.setdefault(result.sequence, []).append(result.to_point())
    sets = []
    for name in sorted(grouped):
        sequence = sequences.get(name) or SequenceId(name, max(resolutions or [p.resolution for p in grouped[name]]))
        sets.append(MeasurementSet(sequence, grouped[name]))
    serialize_measurements(sets, stream, resolutions, qps, run_manifest)
    return sets


def write_failures(results: Sequence[JobResult], stream: TextIO) -> int:
    """Write the failure sidecar CSV and return the number of failed jobs."""
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(FAILURE_COLUMNS)
    failed = [r for r in results if not r.ok]
    for result in sorted(failed, key=lambda r: r.key):
        writer.writerow([
            result.sequence,
            result.resolution,
            result.qp,
            result.stage,
            "" if result.exit_status is None else result.exit_status,
        ])
    return len(failed)


async def tool_versions(config: HarnessConfig, runner: Runner = subprocess_runner) -> Dict[str, str]:
    """First output line of each configured version command."""
    versions = {}
    for name, command in sorted(config.version_commands.items()):
        try:
            outcome = await runner(render_command(command, {"python": sys.executable}), None)
        except ToolError:
            versions[name] = "unavailable"
            continue
        lines = [l.strip() for l in (outcome.stdout + "\n" + outcome.stderr).splitlines() if l.strip()]
        versions[name] = lines[0] if lines and outcome.returncode == 0 else "unavailable"
    return versions
