"""Tracker-output parsing, filtering rules, and dataset split construction.

Filtering runs in two passes. Detection-level: drop boxes with diagonal
below l_diag and boxes with any occluded body part. Track-level: within
each (camera, trajectory) the longest run of consecutive surviving
frames is retained (ties to the earliest start) and dropped entirely if
shorter than min_traj_length. Split construction then strides the
retained run, keeps only samples where both quarter masks exist with
enough foreground, and assigns samples to splits by camera and frame
range.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import EngineConfig, FilterParams, SampleId, SplitSpec, check_split_specs
from .errors import (
    DegeneratePolygon,
    DuplicateEmbedding,
    DuplicateFrameInTrack,
    MalformedRecord,
    UnknownStream,
)
from .geometry import polygon_area
from .records import (
    Detection,
    SampleRecord,
    VerifiedMatch,
    iter_record_lines,
    normalize_embedding,
    parse_detection_line,
    read_embeddings,
    read_matches,
    read_samples,
    write_samples,
)


@dataclass
class Track:
    """Detections of one trajectory, ordered by strictly increasing frame."""

    camera_id: int
    trajectory_id: int
    detections: list[Detection] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.detections)

    @property
    def frames(self) -> list[int]:
        return [d.sample_id.frame_index for d in self.detections]


def parse_tracks(path) -> list[Track]:
    """Parse a detections file into tracks grouped by (camera, trajectory).

    Tracks come out sorted by (camera, trajectory) with frames ascending.
    Raises MalformedRecord with the offending line number, or
    DuplicateFrameInTrack when one (camera, traj, frame) appears twice.
    """
    grouped: dict[tuple[int, int], dict[int, Detection]] = {}
    for number, line in iter_record_lines(path):
        detection, _ = parse_detection_line(line, number)
        sid = detection.sample_id
        frames = grouped.setdefault(sid.trajectory, {})
        if sid.frame_index in frames:
            raise DuplicateFrameInTrack(
                f"line {number}: duplicate frame {sid.frame_index} in track "
                f"{sid.camera_id}:{sid.trajectory_id}"
            )
        frames[sid.frame_index] = detection

    tracks = []
    for (camera_id, trajectory_id), frames in sorted(grouped.items()):
        detections = [frames[f] for f in sorted(frames)]
        tracks.append(Track(camera_id, trajectory_id, detections))
    return tracks


def _longest_run(detections: list[Detection]) -> list[Detection]:
    """Longest gap-free (consecutive-frame) run; earliest start wins ties."""
    best: list[Detection] = []
    current: list[Detection] = []
    for det in detections:
        if current and det.sample_id.frame_index != current[-1].sample_id.frame_index + 1:
            if len(current) > len(best):
                best = current
            current = []
        current.append(det)
    if len(current) > len(best):
        best = current
    return best


def filter_detections(tracks: list[Track], params: FilterParams) -> list[Track]:
    """Apply the diagonal, occlusion, longest-run, and min-length rules."""
    kept: list[Track] = []
    for track in tracks:
        survivors = [
            d for d in track.detections
            if d.diagonal >= params.l_diag and not d.occluded
        ]
        run = _longest_run(survivors)
        if len(run) >= params.min_traj_length:
            kept.append(Track(track.camera_id, track.trajectory_id, run))
    return kept


def foreground_fraction(mask_polygon) -> float:
    """Polygon area over the area of its axis-aligned bounding rectangle.

    Computed analytically (shoelace over bounds product), so it is exact
    for polygon masks and needs no rasterization.
    """
    poly = np.asarray(mask_polygon, dtype=np.float64)
    area = polygon_area(poly)
    if area == 0.0:
        raise DegeneratePolygon("mask polygon has zero area")
    width = float(poly[:, 0].max() - poly[:, 0].min())
    height = float(poly[:, 1].max() - poly[:, 1].min())
    return area / (width * height)


def build_split(tracks: list[Track], splits: list[SplitSpec],
                params: FilterParams) -> list[SampleRecord]:
    """Stride-sample filtered tracks and assign samples to splits.

    Keeps every frame_stride-th detection starting at each track's first
    retained frame; a sample survives only when both Q1 and Q2 masks are
    present and each exceeds min_foreground_fraction. Samples outside
    every split range are dropped.
    """
    check_split_specs(splits)
    records: list[SampleRecord] = []
    for track in tracks:
        for det in track.detections[::params.frame_stride]:
            masks = det.quarter_masks
            if not all(kind in masks for kind in ("Q1", "Q2")):
                continue
            if any(
                foreground_fraction(masks[kind]) <= params.min_foreground_fraction
                for kind in ("Q1", "Q2")
            ):
                continue
            sid = det.sample_id
            for spec in splits:
                if spec.contains(sid.camera_id, sid.frame_index):
                    records.append(SampleRecord(detection=det, split=spec.name))
                    break
    return records


class EmbeddingSet:
    """Unit-norm float32 vectors keyed by (sample, stream)."""

    def __init__(self, registry: dict[str, int]):
        self.registry = dict(registry)
        self._data: dict[str, dict[SampleId, np.ndarray]] = {}

    def add(self, sample_id: SampleId, stream: str, vec: np.ndarray,
            normalize: bool = True) -> None:
        if stream not in self.registry:
            raise UnknownStream(f"stream {stream!r} is not in the registry")
        per_stream = self._data.setdefault(stream, {})
        if sample_id in per_stream:
            raise DuplicateEmbedding(f"duplicate embedding for ({sample_id}, {stream})")
        if normalize:
            vec = normalize_embedding(np.asarray(vec, dtype=np.float32), stream,
                                      self.registry[stream])
        per_stream[sample_id] = vec

    def get(self, sample_id: SampleId, stream: str) -> np.ndarray:
        return self._data[stream][sample_id]

    def has(self, sample_id: SampleId, stream: str) -> bool:
        return stream in self._data and sample_id in self._data[stream]

    def streams(self) -> list[str]:
        return sorted(self._data)

    def samples(self, stream: str) -> list[SampleId]:
        return sorted(self._data.get(stream, ()))

    def stream_vectors(self, stream: str) -> dict[SampleId, np.ndarray]:
        return self._data.get(stream, {})

    def __len__(self) -> int:
        return sum(len(v) for v in self._data.values())


def load_embeddings(path, registry: dict[str, int],
                    into: EmbeddingSet | None = None) -> EmbeddingSet:
    """Load one RFE1 file, validating against the registry and normalizing."""
    embeddings = into if into is not None else EmbeddingSet(registry)
    stream, dim, rows = read_embeddings(path)
    if stream not in registry:
        raise UnknownStream(f"{path}: stream {stream!r} is not in the registry")
    for sample_id, vec in rows:
        if vec.shape[0] != dim:
            raise MalformedRecord(f"{path}: truncated vector for {sample_id}")
        embeddings.add(sample_id, stream, vec)
    return embeddings


def load_embeddings_dir(directory, registry: dict[str, int]) -> EmbeddingSet:
    """Load every .rfe file under a directory into one embedding set."""
    embeddings = EmbeddingSet(registry)
    for path in sorted(Path(directory).glob("*.rfe")):
        load_embeddings(path, registry, into=embeddings)
    return embeddings


@dataclass
class Dataset:
    """A materialized dataset directory: config, samples, embeddings, matches."""

    config: EngineConfig
    samples: list[SampleRecord]
    embeddings: EmbeddingSet
    matches: list[VerifiedMatch] = field(default_factory=list)

    def split(self, name: str) -> list[SampleRecord]:
        return [r for r in self.samples if r.split == name]

    def split_ids(self, name: str) -> list[SampleId]:
        return sorted(r.sample_id for r in self.samples if r.split == name)

    def by_id(self) -> dict[SampleId, SampleRecord]:
        return {r.sample_id: r for r in self.samples}


def write_dataset(directory, dataset: Dataset) -> None:
    from .records import write_embeddings, write_matches  # local to keep module surface tidy

    root = Path(directory)
    (root / "embeddings").mkdir(parents=True, exist_ok=True)
    dataset.config.dump(root / "config.ini")
    write_samples(root / "samples.txt", sorted(dataset.samples, key=lambda r: r.sample_id))
    for stream in dataset.embeddings.streams():
        write_embeddings(root / "embeddings" / f"{stream}.rfe", stream,
                         dataset.embeddings.stream_vectors(stream))
    if dataset.matches:
        write_matches(root / "matches.txt", dataset.matches)


def load_dataset(directory) -> Dataset:
    root = Path(directory)
    config = EngineConfig.load(root / "config.ini")
    samples = read_samples(root / "samples.txt")
    embeddings_dir = root / "embeddings"
    if embeddings_dir.is_dir():
        embeddings = load_embeddings_dir(embeddings_dir, config.registry)
    else:
        embeddings = EmbeddingSet(config.registry)
    matches_path = root / "matches.txt"
    matches = read_matches(matches_path) if matches_path.exists() else []
    return Dataset(config=config, samples=samples, embeddings=embeddings, matches=matches)
