"""Deterministic stand-in for the encoder, decoder and metric tools.

Every value is a seeded function of (sequence, resolution, qp), so whole
measurement runs can be reproduced byte for byte without a codec installed:

    python -m bitrate_ladder_mcp.core.stub_tool encode --sequence S --height 720 --qp 32 \
        --fps 30 --frames 60 --output s.bit
    python -m bitrate_ladder_mcp.core.stub_tool decode --input s.bit --output s.yuv
    python -m bitrate_ladder_mcp.core.stub_tool metric --input s.yuv --reference src.y4m

The model: bitrate falls with QP and grows with pixel count. Decode time grows
with the square of the pixel count and in proportion to bitrate, so the
composite objective trades resolution against rate differently for every
alpha. Quality saturates at a ceiling that rises with resolution, so
rate-quality curves of neighbouring resolutions cross.
"""

from fractions import Fraction
from typing import Dict, Iterable, List, Optional, Sequence
import argparse
import hashlib
import json
import math
import pathlib
import sys

from .config import DEFAULT_QPS, DEFAULT_RESOLUTIONS
from .measurements import EncodePoint, MeasurementSet, SequenceId

REFERENCE_HEIGHT = 2160
HEADER_PREFIX = "STUB "
# Rate (kbps) around which a unit-complexity 2160p encode stops gaining quality
KNEE_KBPS = 4500.0


def _unit(*parts) -> float:
    """Uniform value in [0, 1) keyed by the parts."""
    digest = hashlib.sha256("|".join(str(p) for p in parts).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") / 2.0 ** 64


def _jitter(spread: float, *parts) -> float:
    return 1.0 + spread * (_unit(*parts) - 0.5)


def sequence_traits(sequence: str) -> Dict[str, float]:
    """Content traits drawn once per sequence name."""
    return {
        "complexity": 0.5 + 1.5 * _unit("complexity", sequence),
        "cap_offset": -2.0 + 4.0 * _unit("offset", sequence),
        "speed": 0.8 + 0.45 * _unit("speed", sequence),
    }


def model_point(sequence: str, resolution: int, qp: int) -> Dict[str, float]:
    """Bitrate (kbps), decode time (s) and the three quality values of one encode."""
    traits = sequence_traits(sequence)
    area = (resolution / REFERENCE_HEIGHT) ** 2

    bitrate = 40000.0 * traits["complexity"] * area ** 0.75 * 2.0 ** (-(qp - 10) / 6.0)
    bitrate *= _jitter(0.01, "rate", sequence, resolution, qp)
    decode_time = traits["speed"] * (0.005 + 4.0 * area ** 2 * (bitrate / 1000.0))
    decode_time *= _jitter(0.01, "time", sequence, resolution, qp)

    knee = KNEE_KBPS * traits["complexity"] * area
    ceiling = 47.0 + traits["cap_offset"] - 3.0 * math.log2(REFERENCE_HEIGHT / resolution)
    xpsnr = ceiling - 10.0 * math.log10(1.0 + knee / bitrate) + 0.04 * (_unit("quality", sequence, resolution, qp) - 0.5)

    return {
        "bitrate_kbps": round(bitrate, 3),
        "decode_time_s": round(decode_time, 6),
        "psnr": round(xpsnr - 1.5, 4),
        "xpsnr": round(xpsnr, 4),
        "vmaf": round(min(100.0, max(0.0, 100.0 * (xpsnr - 25.0) / 22.0)), 4),
    }


def synthetic_measurement_set(
    sequence: str,
    resolutions: Sequence[int] = DEFAULT_RESOLUTIONS,
    qps: Sequence[int] = DEFAULT_QPS,
    native_resolution: Optional[int] = None,
) -> MeasurementSet:
    """Full (R x Q) grid of one synthetic sequence, straight from the model."""
    points = [
        EncodePoint(sequence=sequence, resolution=r, qp=q, **model_point(sequence, r, q))
        for r in resolutions
        for q in qps
    ]
    return MeasurementSet(SequenceId(sequence, native_resolution or max(resolutions)), points)


def synthetic_dataset(names: Iterable[str], **kwargs) -> List[MeasurementSet]:
    return [synthetic_measurement_set(name, **kwargs) for name in names]


def _read_header(path: pathlib.Path) -> Dict[str, object]:
    with open(path, "rb") as handle:
        line = handle.readline().decode("utf-8", errors="replace")
    if not line.startswith(HEADER_PREFIX):
        raise ValueError(f"{path} was not written by the stub tool")
    return json.loads(line[len(HEADER_PREFIX):])


def _write_with_header(path: pathlib.Path, header: Dict[str, object], size: int = 0) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    data = (HEADER_PREFIX + json.dumps(header, sort_keys=True) + "\n").encode("utf-8")
    with open(path, "wb") as handle:
        handle.write(data)
        # Sparse padding: only the file size matters
        handle.truncate(max(size, len(data)))


def cmd_encode(args) -> int:
    duration = float(args.frames / Fraction(args.fps))
    values = model_point(args.sequence, args.height, args.qp)
    size = int(round(values["bitrate_kbps"] * 1000.0 * duration / 8.0))
    header = {"sequence": args.sequence, "resolution": args.height, "qp": args.qp}
    _write_with_header(pathlib.Path(args.output), header, size)
    return 0


def cmd_decode(args) -> int:
    header = _read_header(pathlib.Path(args.input))
    _write_with_header(pathlib.Path(args.output), header)
    values = model_point(header["sequence"], header["resolution"], header["qp"])
    print(f"decode_time_s={values['decode_time_s']!r}")
    return 0


def cmd_metric(args) -> int:
    header = _read_header(pathlib.Path(args.input))
    values = model_point(header["sequence"], header["resolution"], header["qp"])
    for name in ("psnr", "xpsnr", "vmaf"):
        print(f"{name}={values[name]!r}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stub_tool", description="Deterministic fake codec toolchain")
    commands = parser.add_subparsers(dest="command", required=True)

    encode = commands.add_parser("encode", help="Write a bitstream whose size follows the rate model")
    encode.add_argument("--sequence", required=True)
    encode.add_argument("--height", type=int, required=True)
    encode.add_argument("--qp", type=int, required=True)
    encode.add_argument("--fps", default="30")
    encode.add_argument("--frames", type=int, default=60)
    encode.add_argument("--input", help="Ignored; accepted for template compatibility")
    encode.add_argument("--threads", type=int, default=1)
    encode.add_argument("--output", required=True)
    encode.set_defaults(handler=cmd_encode)

    decode = commands.add_parser("decode", help="Decode a stub bitstream and report decode time")
    decode.add_argument("--input", required=True)
    decode.add_argument("--output", required=True)
    decode.add_argument("--threads", type=int, default=1)
    decode.set_defaults(handler=cmd_decode)

    metric = commands.add_parser("metric", help="Report PSNR, XPSNR and VMAF of a decoded stub file")
    metric.add_argument("--input", required=True)
    metric.add_argument("--reference", help="Ignored; accepted for template compatibility")
    metric.set_defaults(handler=cmd_metric)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except (OSError, ValueError) as e:
        print(f"stub_tool: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
