"""File formats: record lines, RFE1 embedding files, RFS1 score files.

Record lines are semicolon-separated ``key=value`` fields:

  camera=1;traj=7;frame=100;fish_bbox=10,20,300,400;part=head:100,50,40,40:0;mask=Q1:0 0 10 0 10 4 0 4

  - ``fish_bbox`` is x,y,w,h in pixels.
  - ``part`` repeats per body part: name:x,y,w,h:occluded(0|1).
  - ``mask`` repeats per quarter: Q1|Q2 then the polygon as space-separated
    x y pairs (>= 3 vertices).
  - Dataset sample lines add ``split=<name>``; blank lines and ``#``
    comments are skipped everywhere.

Verified-match lines:

  query=1:42;gallery=2:17;status=confirmed;annotator=alice;ts=0

RFE1 embedding files are little-endian binary: magic ``RFE1``, u32 name
length, stream name (utf-8), u32 dimension, u32 record count, then per
record camera:u32, traj:u32, frame:u32 and dimension float32 values.

RFS1 score files hold per-stream query x gallery cosine matrices:
magic ``RFS1``, the fusion params used at retrieval time, the query and
gallery sample ids, then one float64 row-major matrix per stream.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .core import FusionParams, SampleId
from .errors import (
    DimensionMismatch,
    DuplicateEmbedding,
    MalformedRecord,
    NonFiniteValue,
    UnknownStream,
)
from .geometry import polygon_area

PART_NAMES = ("head", "dorsal_fin", "tail_fin")
QUARTER_KINDS = ("Q1", "Q2")
MATCH_STATUSES = ("confirmed", "rejected", "unsure")


@dataclass(eq=False)
class Detection:
    """One tracked salmon occurrence with part boxes and quarter masks."""

    sample_id: SampleId
    fish_bbox: tuple[float, float, float, float]
    part_bboxes: dict[str, tuple[float, float, float, float]] = field(default_factory=dict)
    occlusion_flags: dict[str, bool] = field(default_factory=dict)
    quarter_masks: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def diagonal(self) -> float:
        return float(np.hypot(self.fish_bbox[2], self.fish_bbox[3]))

    @property
    def occluded(self) -> bool:
        return any(self.occlusion_flags.values())


@dataclass(eq=False)
class SampleRecord:
    """A detection admitted to a dataset split."""

    detection: Detection
    split: str

    @property
    def sample_id(self) -> SampleId:
        return self.detection.sample_id


@dataclass(frozen=True)
class VerifiedMatch:
    """Annotator decision on a cross-camera trajectory pair."""

    query_trajectory: tuple[int, int]
    gallery_trajectory: tuple[int, int]
    status: str
    annotator: str
    timestamp: str = "0"

    def __post_init__(self):
        if self.status not in MATCH_STATUSES:
            raise ValueError(f"status must be one of {MATCH_STATUSES}, got {self.status!r}")


def confirmed_pairs(matches) -> dict[tuple[int, int], set[tuple[int, int]]]:
    """Latest-wins reduction of a decision log to confirmed query->gallery sets."""
    latest: dict[tuple[tuple[int, int], tuple[int, int]], VerifiedMatch] = {}
    for m in matches:
        latest[(m.query_trajectory, m.gallery_trajectory)] = m
    confirmed: dict[tuple[int, int], set[tuple[int, int]]] = {}
    for (query, gallery), m in latest.items():
        if m.status == "confirmed":
            confirmed.setdefault(query, set()).add(gallery)
    return confirmed


# --- record line codec ---

def _fields(line: str, line_number: int) -> list[tuple[str, str]]:
    out = []
    for chunk in line.strip().split(";"):
        if not chunk:
            continue
        if "=" not in chunk:
            raise MalformedRecord(f"field {chunk!r} is not key=value", line_number)
        key, value = chunk.split("=", 1)
        out.append((key.strip(), value.strip()))
    return out


def _parse_bbox(text: str, line_number: int) -> tuple[float, float, float, float]:
    parts = text.split(",")
    if len(parts) != 4:
        raise MalformedRecord(f"bbox needs 4 comma-separated values, got {text!r}", line_number)
    try:
        x, y, w, h = (float(p) for p in parts)
    except ValueError as exc:
        raise MalformedRecord(f"bad bbox number in {text!r}", line_number) from exc
    return (x, y, w, h)


def parse_detection_line(line: str, line_number: int = 0) -> tuple[Detection, str | None]:
    """Parse one record line; returns (detection, split-or-None)."""
    values: dict[str, str] = {}
    parts: dict[str, tuple] = {}
    occluded: dict[str, bool] = {}
    masks: dict[str, np.ndarray] = {}
    split: str | None = None

    for key, value in _fields(line, line_number):
        if key == "part":
            sub = value.split(":")
            if len(sub) != 3:
                raise MalformedRecord(f"part must be name:bbox:occluded, got {value!r}", line_number)
            name = sub[0]
            if name not in PART_NAMES:
                raise MalformedRecord(f"unknown part {name!r}", line_number)
            parts[name] = _parse_bbox(sub[1], line_number)
            if sub[2] not in ("0", "1"):
                raise MalformedRecord(f"occluded flag must be 0 or 1, got {sub[2]!r}", line_number)
            occluded[name] = sub[2] == "1"
        elif key == "mask":
            sub = value.split(":", 1)
            if len(sub) != 2 or sub[0] not in QUARTER_KINDS:
                raise MalformedRecord(f"mask must be Q1|Q2:coords, got {value!r}", line_number)
            try:
                coords = np.array([float(v) for v in sub[1].split()], dtype=np.float64)
            except ValueError as exc:
                raise MalformedRecord(f"bad mask coordinate in {value!r}", line_number) from exc
            if coords.size < 6 or coords.size % 2:
                raise MalformedRecord(
                    f"mask polygon needs >= 3 x,y vertex pairs, got {coords.size} values",
                    line_number,
                )
            poly = coords.reshape(-1, 2)
            if polygon_area(poly) == 0.0:
                raise MalformedRecord(f"mask {sub[0]} polygon has zero area", line_number)
            masks[sub[0]] = poly
        elif key == "split":
            split = value
        elif key in ("camera", "traj", "frame", "fish_bbox"):
            values[key] = value
        else:
            raise MalformedRecord(f"unknown field {key!r}", line_number)

    for required in ("camera", "traj", "frame", "fish_bbox"):
        if required not in values:
            raise MalformedRecord(f"missing field {required!r}", line_number)
    try:
        sample_id = SampleId(int(values["camera"]), int(values["traj"]), int(values["frame"]))
    except ValueError as exc:
        raise MalformedRecord(str(exc), line_number) from exc
    bbox = _parse_bbox(values["fish_bbox"], line_number)
    if bbox[2] <= 0 or bbox[3] <= 0:
        raise MalformedRecord(f"fish_bbox must have positive width and height, got {bbox}", line_number)

    detection = Detection(sample_id=sample_id, fish_bbox=bbox, part_bboxes=parts,
                          occlusion_flags=occluded, quarter_masks=masks)
    return detection, split


def _fmt_float(x: float) -> str:
    return repr(float(x))


def format_detection_line(detection: Detection, split: str | None = None) -> str:
    sid = detection.sample_id
    fields = [
        f"camera={sid.camera_id}",
        f"traj={sid.trajectory_id}",
        f"frame={sid.frame_index}",
        "fish_bbox=" + ",".join(_fmt_float(v) for v in detection.fish_bbox),
    ]
    for name in sorted(detection.part_bboxes):
        bbox = ",".join(_fmt_float(v) for v in detection.part_bboxes[name])
        flag = "1" if detection.occlusion_flags.get(name, False) else "0"
        fields.append(f"part={name}:{bbox}:{flag}")
    for kind in sorted(detection.quarter_masks):
        coords = " ".join(_fmt_float(v) for v in detection.quarter_masks[kind].ravel())
        fields.append(f"mask={kind}:{coords}")
    if split is not None:
        fields.append(f"split={split}")
    return ";".join(fields)


def iter_record_lines(path):
    """Yield (line_number, stripped_line) skipping blanks and comments."""
    with open(path, "r", encoding="utf-8") as fh:
        for number, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            yield number, line


def read_detections(path) -> list[Detection]:
    return [parse_detection_line(line, n)[0] for n, line in iter_record_lines(path)]


def read_samples(path) -> list[SampleRecord]:
    out = []
    for n, line in iter_record_lines(path):
        detection, split = parse_detection_line(line, n)
        if split is None:
            raise MalformedRecord("sample record is missing the split field", n)
        out.append(SampleRecord(detection=detection, split=split))
    return out


def write_samples(path, samples) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in samples:
            fh.write(format_detection_line(record.detection, record.split) + "\n")


# --- verified match codec ---

def parse_match_line(line: str, line_number: int = 0) -> VerifiedMatch:
    values = dict(_fields(line, line_number))
    for required in ("query", "gallery", "status", "annotator"):
        if required not in values:
            raise MalformedRecord(f"missing field {required!r}", line_number)
    try:
        query = tuple(int(v) for v in values["query"].split(":"))
        gallery = tuple(int(v) for v in values["gallery"].split(":"))
    except ValueError as exc:
        raise MalformedRecord("bad trajectory reference", line_number) from exc
    if len(query) != 2 or len(gallery) != 2:
        raise MalformedRecord("trajectory references must be camera:traj", line_number)
    try:
        return VerifiedMatch(query, gallery, values["status"], values["annotator"],
                             values.get("ts", "0"))
    except ValueError as exc:
        raise MalformedRecord(str(exc), line_number) from exc


def format_match_line(match: VerifiedMatch) -> str:
    q = f"{match.query_trajectory[0]}:{match.query_trajectory[1]}"
    g = f"{match.gallery_trajectory[0]}:{match.gallery_trajectory[1]}"
    return (f"query={q};gallery={g};status={match.status};"
            f"annotator={match.annotator};ts={match.timestamp}")


def read_matches(path) -> list[VerifiedMatch]:
    return [parse_match_line(line, n) for n, line in iter_record_lines(path)]


def write_matches(path, matches) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for match in matches:
            fh.write(format_match_line(match) + "\n")


# --- RFE1 embedding files ---

_RFE_MAGIC = b"RFE1"


def write_embeddings(path, stream: str, vectors: dict[SampleId, np.ndarray]) -> None:
    """Write one stream's embedding file; records sorted by sample id."""
    items = sorted(vectors.items())
    if items:
        dim = int(items[0][1].shape[0])
    else:
        dim = 0
    name = stream.encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_RFE_MAGIC)
        fh.write(struct.pack("<I", len(name)))
        fh.write(name)
        fh.write(struct.pack("<II", dim, len(items)))
        for sid, vec in items:
            fh.write(struct.pack("<III", sid.camera_id, sid.trajectory_id, sid.frame_index))
            fh.write(np.ascontiguousarray(vec, dtype="<f4").tobytes())


def read_embeddings(path) -> tuple[str, int, list[tuple[SampleId, np.ndarray]]]:
    """Read an RFE1 file; returns (stream name, dimension, records)."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _RFE_MAGIC:
            raise MalformedRecord(f"{path}: bad magic {magic!r}, expected RFE1")
        (name_len,) = struct.unpack("<I", fh.read(4))
        stream = fh.read(name_len).decode("utf-8")
        dim, count = struct.unpack("<II", fh.read(8))
        records = []
        for _ in range(count):
            camera, traj, frame = struct.unpack("<III", fh.read(12))
            raw = fh.read(4 * dim)
            if len(raw) != 4 * dim:
                raise MalformedRecord(f"{path}: truncated record")
            vec = np.frombuffer(raw, dtype="<f4").astype(np.float32)
            records.append((SampleId(camera, traj, frame), vec))
    return stream, dim, records


def normalize_embedding(vec: np.ndarray, stream: str, expected_dim: int) -> np.ndarray:
    """Validate and L2-normalize one loaded vector."""
    if vec.shape[0] != expected_dim:
        raise DimensionMismatch(
            f"stream {stream!r}: vector has dimension {vec.shape[0]}, registry says {expected_dim}"
        )
    if not np.all(np.isfinite(vec)):
        raise NonFiniteValue(f"stream {stream!r}: vector contains non-finite values")
    norm = float(np.linalg.norm(vec.astype(np.float64)))
    if norm == 0.0:
        raise NonFiniteValue(f"stream {stream!r}: zero-norm vector cannot be normalized")
    return (vec.astype(np.float64) / norm).astype(np.float32)


# --- RFS1 score files ---

_RFS_MAGIC = b"RFS1"


@dataclass
class ScoresArtifact:
    """Per-stream cosine matrices between a query split and a gallery split."""

    query_split: str
    gallery_split: str
    query_ids: list[SampleId]
    gallery_ids: list[SampleId]
    cosines: dict[str, np.ndarray]
    fusion: FusionParams

    def stream_names(self) -> list[str]:
        return sorted(self.cosines)


def _pack_ids(ids) -> bytes:
    arr = np.array([(s.camera_id, s.trajectory_id, s.frame_index) for s in ids],
                   dtype="<u4").reshape(-1, 3)
    return arr.tobytes()


def _unpack_ids(raw: bytes, count: int) -> list[SampleId]:
    arr = np.frombuffer(raw, dtype="<u4").reshape(count, 3)
    return [SampleId(int(c), int(t), int(f)) for c, t, f in arr]


def write_scores(path, artifact: ScoresArtifact) -> None:
    streams = artifact.stream_names()
    with open(path, "wb") as fh:
        fh.write(_RFS_MAGIC)
        header = ";".join([
            f"query_split={artifact.query_split}",
            f"gallery_split={artifact.gallery_split}",
            f"lambda={artifact.fusion.lam!r}",
            f"tau={artifact.fusion.tau!r}",
            f"k={artifact.fusion.k}",
            "streams=" + ",".join(artifact.fusion.streams),
        ]).encode("utf-8")
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        fh.write(struct.pack("<III", len(artifact.query_ids), len(artifact.gallery_ids),
                             len(streams)))
        fh.write(_pack_ids(artifact.query_ids))
        fh.write(_pack_ids(artifact.gallery_ids))
        for stream in streams:
            name = stream.encode("utf-8")
            matrix = np.ascontiguousarray(artifact.cosines[stream], dtype="<f8")
            if matrix.shape != (len(artifact.query_ids), len(artifact.gallery_ids)):
                raise DimensionMismatch(
                    f"stream {stream!r}: matrix shape {matrix.shape} does not match id lists"
                )
            fh.write(struct.pack("<I", len(name)))
            fh.write(name)
            fh.write(matrix.tobytes())


def read_scores(path) -> ScoresArtifact:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _RFS_MAGIC:
            raise MalformedRecord(f"{path}: bad magic {magic!r}, expected RFS1")
        (header_len,) = struct.unpack("<I", fh.read(4))
        header = dict(
            chunk.split("=", 1) for chunk in fh.read(header_len).decode("utf-8").split(";")
        )
        n_q, n_g, n_streams = struct.unpack("<III", fh.read(12))
        query_ids = _unpack_ids(fh.read(12 * n_q), n_q)
        gallery_ids = _unpack_ids(fh.read(12 * n_g), n_g)
        cosines = {}
        for _ in range(n_streams):
            (name_len,) = struct.unpack("<I", fh.read(4))
            stream = fh.read(name_len).decode("utf-8")
            raw = fh.read(8 * n_q * n_g)
            cosines[stream] = np.frombuffer(raw, dtype="<f8").reshape(n_q, n_g).copy()
        fusion = FusionParams(
            lam=float(header["lambda"]),
            tau=float(header["tau"]),
            k=int(header["k"]),
            streams=tuple(header["streams"].split(",")),
        )
    return ScoresArtifact(
        query_split=header["query_split"],
        gallery_split=header["gallery_split"],
        query_ids=query_ids,
        gallery_ids=gallery_ids,
        cosines=cosines,
        fusion=fusion,
    )
