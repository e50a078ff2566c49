"""
Pytest configuration for bitrate ladder tests

This file provides common fixtures and configuration for all tests.
"""

import os
import pathlib
import tempfile

# Keep test logs out of the user's config directory
os.environ.setdefault("BITRATE_LADDER_LOG_DIR", tempfile.mkdtemp(prefix="bitrate-ladder-logs-"))

import numpy as np
import pytest

from bitrate_ladder_mcp.core.harness import ProcessOutcome
from bitrate_ladder_mcp.core.measurements import EncodePoint, MeasurementSet, SequenceId
from bitrate_ladder_mcp.core.stub_tool import synthetic_dataset

REPO_ROOT = pathlib.Path(__file__).resolve().parent.parent
RESOLUTIONS = (360, 540, 720, 1080, 1440, 2160)
QPS = tuple(range(10, 51, 2))


def point(sequence="seq", resolution=1080, qp=30, bitrate=1000.0, decode_time=1.0,
          xpsnr=40.0, psnr=None, vmaf=None) -> EncodePoint:
    """Short-hand EncodePoint constructor used across the tests."""
    return EncodePoint(sequence, resolution, qp, bitrate, decode_time, psnr=psnr, xpsnr=xpsnr, vmaf=vmaf)


def random_set(rng: np.random.Generator, size: int, sequence: str = "rand", ties: bool = False) -> MeasurementSet:
    """
    A random set of up to `size` points on distinct (resolution, qp) keys.

    With ties, values are drawn from a small grid so equal coordinates occur.
    """
    keys = [(r, q) for r in RESOLUTIONS for q in QPS]
    chosen = rng.choice(len(keys), size=min(size, len(keys)), replace=False)
    points = []
    for index in chosen:
        resolution, qp = keys[index]
        if ties:
            bitrate = float(rng.integers(1, 8) * 250)
            decode_time = float(rng.integers(1, 8) * 0.5)
            quality = float(rng.integers(30, 38))
        else:
            bitrate = float(rng.uniform(50, 20000))
            decode_time = float(rng.uniform(0.05, 10.0))
            quality = float(rng.uniform(25, 48))
        points.append(EncodePoint(sequence, resolution, qp, bitrate, decode_time,
                                  psnr=quality - 1.0, xpsnr=quality, vmaf=min(100.0, quality * 2.0)))
    return MeasurementSet(SequenceId(sequence, 2160), points)


@pytest.fixture
def make_point():
    """Factory for EncodePoints"""
    return point


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


@pytest.fixture(scope="session")
def synthetic_sets():
    """Four synthetic sequences on the full default grid"""
    return synthetic_dataset(("aerial_city", "harbor_pan", "night_street", "sports_field"))


@pytest.fixture(scope="session")
def synthetic_set(synthetic_sets):
    return synthetic_sets[0]


@pytest.fixture
def stub_config_path():
    return REPO_ROOT / "configs" / "stub_harness.json"


@pytest.fixture
def stub_sequences_path():
    return REPO_ROOT / "configs" / "sequences_stub.csv"


@pytest.fixture(autouse=True)
def pinned_timestamp(monkeypatch):
    """Pin manifest timestamps so repeated runs produce identical files"""
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "1700000000")


class FakeRunner:
    """
    Stand-in for the subprocess runner.

    Encode calls write a bitstream of `size_bytes`; decode calls return the next
    wall time from `decode_times`; metric calls print fixed quality values.
    Commands whose argv contains a string from `fail_on` exit with status 1.
    """

    def __init__(self, size_bytes=1_250_000, decode_times=(1.0,), fail_on=(), delay=0.0):
        self.size_bytes = size_bytes
        self.decode_times = list(decode_times)
        self.fail_on = tuple(fail_on)
        self.delay = delay
        self.calls = []
        self.active = 0
        self.max_active = 0
        self._decode_index = 0

    async def __call__(self, argv, cwd=None):
        import asyncio

        self.calls.append(list(argv))
        self.active += 1
        self.max_active = max(self.max_active, self.active)
        try:
            if self.delay:
                await asyncio.sleep(self.delay)
            command = " ".join(argv)
            if any(marker in command for marker in self.fail_on):
                return ProcessOutcome(1, "", "simulated failure", 0.01)
            stage = argv[1]
            if stage == "encode":
                output = pathlib.Path(argv[argv.index("--output") + 1])
                output.parent.mkdir(parents=True, exist_ok=True)
                output.write_bytes(b"\0" * self.size_bytes)
                return ProcessOutcome(0, "", "", 0.5)
            if stage == "decode":
                elapsed = self.decode_times[self._decode_index % len(self.decode_times)]
                self._decode_index += 1
                return ProcessOutcome(0, "", "", elapsed)
            return ProcessOutcome(0, "psnr=38.5\nxpsnr=40.25\nvmaf=91.0\n", "", 0.2)
        finally:
            self.active -= 1

    def count(self, stage):
        return sum(1 for argv in self.calls if argv[1] == stage)


FAKE_TEMPLATES = {
    "encode_template": "fake encode --qp {qp} --height {height} --input {input} --output {output}",
    "decode_template": "fake decode --input {input} --output {output}",
    "metric_template": "fake metric --input {input} --reference {reference}",
}


@pytest.fixture
def fake_runner_factory():
    return FakeRunner


@pytest.fixture
def fake_config(tmp_path):
    """HarnessConfig for the fake runner: 2 resolutions x 3 QPs"""
    from bitrate_ladder_mcp.core.config import HarnessConfig

    return HarnessConfig(resolutions=(540, 1080), qps=(22, 32, 42), workdir=str(tmp_path / "work"), **FAKE_TEMPLATES)


@pytest.fixture
def ten_second_sequence():
    """A 10 s clip: 250 frames at 25 fps"""
    return SequenceId("clip", 1080, 25.0, 250)
