"""Shared domain types, identifiers, and parameter bundles.

All types here are immutable value objects and safe to share between
threads. The engine configuration is a plain INI file (see
`EngineConfig.load`) naming streams, fusion defaults, filter defaults,
geometry defaults, and split definitions.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field

import numpy as np

from .errors import DuplicateStream, OverlappingSplits, UnknownStream, ZeroDimension

DEFAULT_STREAM_NAMES = (
    "full_image",
    "head",
    "dorsal_fin",
    "q1",
    "q2",
    "q1_sliced",
    "q2_sliced",
    "q1_s1",
    "q1_s2",
    "q1_s3",
    "q2_s1",
    "q2_s2",
    "q2_s3",
)

DEFAULT_ENSEMBLE_STREAMS = ("q1_sliced", "q2_sliced", "head", "dorsal_fin")


@dataclass(frozen=True, order=True)
class SampleId:
    """One salmon ROI occurrence.

    The (camera_id, trajectory_id, frame_index) triple is globally unique
    within a dataset; trajectory ids are scoped per camera, so the same
    trajectory_id on two cameras denotes two different tracks.
    """

    camera_id: int
    trajectory_id: int
    frame_index: int

    def __post_init__(self):
        if self.frame_index < 0:
            raise ValueError(f"frame_index must be >= 0, got {self.frame_index}")

    def __str__(self) -> str:
        return f"{self.camera_id}:{self.trajectory_id}:{self.frame_index}"

    @classmethod
    def parse(cls, text: str) -> "SampleId":
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError(f"sample id must be camera:traj:frame, got {text!r}")
        return cls(int(parts[0]), int(parts[1]), int(parts[2]))

    @property
    def trajectory(self) -> tuple[int, int]:
        """(camera_id, trajectory_id) key identifying this sample's track."""
        return (self.camera_id, self.trajectory_id)


def trajectory_key(camera_id: int, trajectory_id: int) -> tuple[int, int]:
    return (camera_id, trajectory_id)


def parse_trajectory(text: str) -> tuple[int, int]:
    """Parse a "camera:trajectory" string into a trajectory key."""
    parts = text.split(":")
    if len(parts) != 2:
        raise ValueError(f"trajectory must be camera:traj, got {text!r}")
    return (int(parts[0]), int(parts[1]))


def validate_registry(entries) -> dict[str, int]:
    """Validate (stream name, embedding dimension) pairs into a registry.

    Accepts any iterable of (name, dim) pairs or a mapping. Rejects
    duplicate names and zero/negative dimensions.
    """
    if hasattr(entries, "items"):
        entries = entries.items()
    registry: dict[str, int] = {}
    for name, dim in entries:
        name = str(name)
        dim = int(dim)
        if not name:
            raise DuplicateStream("stream name must be nonempty")
        if name in registry:
            raise DuplicateStream(f"stream {name!r} listed twice")
        if dim <= 0:
            raise ZeroDimension(f"stream {name!r} has dimension {dim}")
        registry[name] = dim
    return registry


@dataclass(frozen=True)
class FusionParams:
    """Parameters of the fused score: weight, temperature, rank offset, streams."""

    lam: float = 0.75
    tau: float = 0.7
    k: int = 20
    streams: tuple[str, ...] = DEFAULT_ENSEMBLE_STREAMS

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lambda must be in [0, 1], got {self.lam}")
        if self.tau <= 0:
            raise ValueError(f"tau must be > 0, got {self.tau}")
        if self.k < 0:
            raise ValueError(f"k must be >= 0, got {self.k}")
        if not self.streams:
            raise ValueError("streams must be nonempty")
        object.__setattr__(self, "streams", tuple(self.streams))

    def replace(self, **kwargs) -> "FusionParams":
        current = {"lam": self.lam, "tau": self.tau, "k": self.k, "streams": self.streams}
        current.update(kwargs)
        return FusionParams(**current)


@dataclass(frozen=True)
class FilterParams:
    """Track and sample filtering thresholds."""

    l_diag: float = 600.0
    min_traj_length: int = 20
    frame_stride: int = 5
    min_foreground_fraction: float = 0.25

    def __post_init__(self):
        if self.l_diag <= 0:
            raise ValueError("l_diag must be > 0")
        if self.min_traj_length <= 0:
            raise ValueError("min_traj_length must be > 0")
        if self.frame_stride <= 0:
            raise ValueError("frame_stride must be > 0")
        if not 0.0 < self.min_foreground_fraction < 1.0:
            raise ValueError("min_foreground_fraction must be in (0, 1)")


@dataclass(frozen=True)
class SplitSpec:
    """One split assignment rule: camera plus [start, end) frame range."""

    name: str
    camera_id: int
    frame_start: int
    frame_end: int

    def __post_init__(self):
        if self.frame_end <= self.frame_start:
            raise ValueError(
                f"split {self.name!r}: empty frame range [{self.frame_start}, {self.frame_end})"
            )

    def contains(self, camera_id: int, frame_index: int) -> bool:
        return camera_id == self.camera_id and self.frame_start <= frame_index < self.frame_end


def check_split_specs(specs: list[SplitSpec]) -> None:
    """Reject split ranges that overlap on the same camera.

    Overlap within one split name violates the SplitSpec invariant;
    overlap across names would make sample assignment ambiguous. Both
    raise OverlappingSplits.
    """
    by_camera: dict[int, list[SplitSpec]] = {}
    for spec in specs:
        by_camera.setdefault(spec.camera_id, []).append(spec)
    for camera_id, group in by_camera.items():
        group = sorted(group, key=lambda s: s.frame_start)
        for a, b in zip(group, group[1:]):
            if b.frame_start < a.frame_end:
                raise OverlappingSplits(
                    f"camera {camera_id}: ranges [{a.frame_start},{a.frame_end}) "
                    f"({a.name}) and [{b.frame_start},{b.frame_end}) ({b.name}) overlap"
                )


@dataclass(frozen=True)
class GeometryParams:
    """Slice-geometry parameters: support direction offset, cut fractions, overlap."""

    corner_offset_deg: float = 70.0
    cut_fractions: tuple[float, float] = (0.3, 0.7)
    overlap_fraction: float = 2.0 / 14.0

    def __post_init__(self):
        c1, c2 = self.cut_fractions
        if not 0.0 < c1 < c2 < 1.0:
            raise ValueError(f"cut fractions must satisfy 0 < c1 < c2 < 1, got {self.cut_fractions}")
        if not 0.0 < self.corner_offset_deg < 90.0:
            raise ValueError("corner_offset_deg must be in (0, 90)")
        if self.overlap_fraction < 0:
            raise ValueError("overlap_fraction must be >= 0")
        object.__setattr__(self, "cut_fractions", (float(c1), float(c2)))


@dataclass(frozen=True)
class EngineConfig:
    """Full engine configuration: registry, defaults, and split specs."""

    registry: dict[str, int]
    fusion: FusionParams = FusionParams()
    filter: FilterParams = FilterParams()
    geometry: GeometryParams = GeometryParams()
    splits: tuple[SplitSpec, ...] = ()

    def __post_init__(self):
        for stream in self.fusion.streams:
            if stream not in self.registry:
                raise UnknownStream(f"fusion stream {stream!r} is not in the stream registry")
        check_split_specs(list(self.splits))
        object.__setattr__(self, "splits", tuple(self.splits))

    @classmethod
    def load(cls, path) -> "EngineConfig":
        parser = _make_parser()
        with open(path, "r", encoding="utf-8") as fh:
            try:
                parser.read_file(fh, source=str(path))
            except configparser.DuplicateOptionError as exc:
                if exc.section == "streams":
                    raise DuplicateStream(f"stream {exc.option!r} listed twice") from exc
                raise
        return cls.from_parser(parser)

    @classmethod
    def loads(cls, text: str) -> "EngineConfig":
        parser = _make_parser()
        try:
            parser.read_string(text)
        except configparser.DuplicateOptionError as exc:
            if exc.section == "streams":
                raise DuplicateStream(f"stream {exc.option!r} listed twice") from exc
            raise
        return cls.from_parser(parser)

    @classmethod
    def from_parser(cls, parser: configparser.ConfigParser) -> "EngineConfig":
        registry = validate_registry(
            [(name, parser.getint("streams", name)) for name in parser.options("streams")]
        )

        fusion = FusionParams()
        if parser.has_section("fusion"):
            sec = parser["fusion"]
            streams = fusion.streams
            if "streams" in sec:
                streams = tuple(s.strip() for s in sec["streams"].split(",") if s.strip())
            fusion = FusionParams(
                lam=sec.getfloat("lambda", fusion.lam),
                tau=sec.getfloat("tau", fusion.tau),
                k=sec.getint("k", fusion.k),
                streams=streams,
            )

        filt = FilterParams()
        if parser.has_section("filter"):
            sec = parser["filter"]
            filt = FilterParams(
                l_diag=sec.getfloat("l_diag", filt.l_diag),
                min_traj_length=sec.getint("min_traj_length", filt.min_traj_length),
                frame_stride=sec.getint("frame_stride", filt.frame_stride),
                min_foreground_fraction=sec.getfloat(
                    "min_foreground_fraction", filt.min_foreground_fraction
                ),
            )

        geometry = GeometryParams()
        if parser.has_section("geometry"):
            sec = parser["geometry"]
            cuts = geometry.cut_fractions
            if "cut_fractions" in sec:
                parts = [float(x) for x in sec["cut_fractions"].split(",")]
                if len(parts) != 2:
                    raise ValueError("cut_fractions must be two comma-separated reals")
                cuts = (parts[0], parts[1])
            geometry = GeometryParams(
                corner_offset_deg=sec.getfloat("corner_offset_deg", geometry.corner_offset_deg),
                cut_fractions=cuts,
                overlap_fraction=sec.getfloat("overlap_fraction", geometry.overlap_fraction),
            )

        splits: list[SplitSpec] = []
        if parser.has_section("splits"):
            for name in parser.options("splits"):
                for chunk in parser.get("splits", name).split(","):
                    chunk = chunk.strip()
                    if not chunk:
                        continue
                    fields = chunk.split(":")
                    if len(fields) != 3:
                        raise ValueError(
                            f"split {name!r}: expected camera:start:end, got {chunk!r}"
                        )
                    splits.append(
                        SplitSpec(name, int(fields[0]), int(fields[1]), int(fields[2]))
                    )

        return cls(registry=registry, fusion=fusion, filter=filt, geometry=geometry,
                   splits=tuple(splits))

    def dumps(self) -> str:
        parser = _make_parser()
        parser.add_section("streams")
        for name, dim in self.registry.items():
            parser.set("streams", name, str(dim))
        parser.add_section("fusion")
        parser.set("fusion", "lambda", _fmt(self.fusion.lam))
        parser.set("fusion", "tau", _fmt(self.fusion.tau))
        parser.set("fusion", "k", str(self.fusion.k))
        parser.set("fusion", "streams", ", ".join(self.fusion.streams))
        parser.add_section("filter")
        parser.set("filter", "l_diag", _fmt(self.filter.l_diag))
        parser.set("filter", "min_traj_length", str(self.filter.min_traj_length))
        parser.set("filter", "frame_stride", str(self.filter.frame_stride))
        parser.set("filter", "min_foreground_fraction", _fmt(self.filter.min_foreground_fraction))
        parser.add_section("geometry")
        parser.set("geometry", "corner_offset_deg", _fmt(self.geometry.corner_offset_deg))
        parser.set("geometry", "cut_fractions",
                   ", ".join(_fmt(c) for c in self.geometry.cut_fractions))
        parser.set("geometry", "overlap_fraction", _fmt(self.geometry.overlap_fraction))
        if self.splits:
            parser.add_section("splits")
            grouped: dict[str, list[SplitSpec]] = {}
            for spec in self.splits:
                grouped.setdefault(spec.name, []).append(spec)
            for name, group in grouped.items():
                parser.set(
                    "splits", name,
                    ", ".join(f"{s.camera_id}:{s.frame_start}:{s.frame_end}" for s in group),
                )
        buf = io.StringIO()
        parser.write(buf)
        return buf.getvalue()

    def dump(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.dumps())

    def split_specs(self, name: str) -> list[SplitSpec]:
        return [s for s in self.splits if s.name == name]


def _make_parser() -> configparser.ConfigParser:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str  # stream names are case-sensitive
    return parser


def _fmt(x: float) -> str:
    """Shortest round-trip decimal for a float."""
    return repr(float(x))


def default_config(dims: int | dict[str, int] = 512) -> EngineConfig:
    """Config with the default stream registry, all streams at `dims`."""
    if isinstance(dims, dict):
        registry = validate_registry(dims)
    else:
        registry = validate_registry([(name, dims) for name in DEFAULT_STREAM_NAMES])
    return EngineConfig(registry=registry)


def derived_rng(seed: int, *key: int) -> np.random.Generator:
    """Deterministic child generator for (seed, key...).

    Children with distinct keys are statistically independent, so work
    partitioned by key produces output independent of execution order
    and thread count.
    """
    return np.random.default_rng(np.random.SeedSequence((int(seed),) + tuple(int(k) for k in key)))
