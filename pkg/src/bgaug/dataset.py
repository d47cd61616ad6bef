"""Dataset manifests, train/val splitting, epoch planning and archive writers."""

from __future__ import annotations

import concurrent.futures
import csv
import hashlib
import json
import math
import multiprocessing
import os
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np

from . import imaging
from .augment import AugParams, Mode, SamplingRanges, augment_sample, sample_params
from .background import BackgroundPool
from .constants import (
    BATCH_SIZE, CROP_HEIGHT, FRAME_HEIGHT, FRAME_WIDTH, STEPS_PER_EPOCH, VALIDATION_FRACTION,
)
from .errors import ConfigError, DataError, FormatError
from .mask import load_prepared_mask
from .pose import RelativePose, format_float
from .rng import MASK64, Purpose, derive_substream

MANIFEST_VERSION = 1
# Reserved epoch key for the one-off train/val shuffle.
SPLIT_EPOCH = MASK64
# Validation samples are keyed at this offset so they never share a substream with training samples.
VAL_INDEX_OFFSET = 1 << 40

PACKED_MAGIC = b"BGA1"
PACKED_HEADER = struct.Struct("<4sIHH")
PACKED_LABEL = struct.Struct("<3f")


# --- manifest ----------------------------------------------------------------

@dataclass
class ManifestEntry:
    frame: str
    label: RelativePose
    subject_id: str = ""
    mask: Optional[str] = None
    detections: Optional[str] = None
    override_person_index: Optional[int] = None
    id: Optional[str] = None

    @property
    def frame_id(self) -> str:
        if self.id:
            return self.id
        return Path(self.frame).with_suffix("").as_posix().replace("/", "_")

    def to_json(self) -> dict:
        d = {
            "frame": self.frame,
            "mask": self.mask,
            "detections": self.detections,
            "label": {"x": self.label.x, "y": self.label.y, "phi": self.label.phi},
            "subject_id": self.subject_id,
            "override_person_index": self.override_person_index,
        }
        if self.id:
            d["id"] = self.id
        return d


@dataclass
class DatasetManifest:
    frame_dir: Path
    entries: list[ManifestEntry]
    frame_size: tuple[int, int] = (FRAME_WIDTH, FRAME_HEIGHT)
    version: int = MANIFEST_VERSION

    def resolve(self, rel: str) -> Path:
        return self.frame_dir / rel

    def to_json(self, relative_to: Optional[Path] = None) -> dict:
        frame_dir = self.frame_dir
        if relative_to is not None:
            frame_dir = Path(os.path.relpath(self.frame_dir, relative_to))
        return {
            "version": self.version,
            "frame_dir": frame_dir.as_posix(),
            "frame_size": list(self.frame_size),
            "entries": [e.to_json() for e in self.entries],
        }

    def save(self, path: str | os.PathLike) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        doc = self.to_json(relative_to=path.parent.resolve())
        path.write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")


def _parse_entry(raw: dict, pos: int) -> ManifestEntry:
    try:
        label = raw["label"]
        entry = ManifestEntry(
            frame=str(raw["frame"]),
            label=RelativePose(float(label["x"]), float(label["y"]), float(label["phi"])),
            subject_id=str(raw.get("subject_id", "")),
            mask=raw.get("mask"),
            detections=raw.get("detections"),
            override_person_index=raw.get("override_person_index"),
            id=raw.get("id"),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"manifest entry {pos}: missing or invalid field ({exc})") from None
    if entry.override_person_index is not None and not isinstance(entry.override_person_index, int):
        raise FormatError(f"manifest entry {pos}: override_person_index must be an integer")
    return entry


def load_manifest(path: str | os.PathLike) -> DatasetManifest:
    """Read a manifest; ``frame_dir`` is taken relative to the manifest's directory."""
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(doc, dict) or "entries" not in doc:
        raise FormatError(f"{path}: not a dataset manifest")
    if doc.get("version", MANIFEST_VERSION) != MANIFEST_VERSION:
        raise FormatError(f"{path}: unsupported manifest version {doc.get('version')}")
    frame_dir = Path(doc.get("frame_dir", "."))
    if not frame_dir.is_absolute():
        frame_dir = (path.parent / frame_dir).resolve()
    frame_size = tuple(int(v) for v in doc.get("frame_size", (FRAME_WIDTH, FRAME_HEIGHT)))
    entries = [_parse_entry(raw, i) for i, raw in enumerate(doc["entries"])]
    ids = [e.frame_id for e in entries]
    if len(set(ids)) != len(ids):
        raise FormatError(f"{path}: duplicate frame ids")
    return DatasetManifest(frame_dir, entries, frame_size)


def load_frame(manifest: DatasetManifest, entry: ManifestEntry) -> np.ndarray:
    img = imaging.read_gray(manifest.resolve(entry.frame))
    w, h = manifest.frame_size
    if img.shape != (h, w):
        raise FormatError(f"{entry.frame}: frame is {img.shape[1]}x{img.shape[0]}, expected {w}x{h}")
    return img


# --- split and epoch planning ---------------------------------------------------

def split_counts(n: int, fraction: float) -> tuple[int, int]:
    if not 0 < fraction < 1:
        raise ConfigError(f"split fraction must be in (0, 1), got {fraction}")
    # round() guards against 0.8 * n landing a hair above an integer
    n_train = math.ceil(round((1.0 - fraction) * n, 9))
    return n_train, n - n_train


def split_train_val(n_entries: int, fraction: float = VALIDATION_FRACTION,
                    seed: int = 0) -> tuple[list[int], list[int]]:
    """Shuffle entry indices with the Split substream and cut train/val."""
    if n_entries == 0:
        raise DataError("cannot split an empty manifest")
    n_train, _ = split_counts(n_entries, fraction)
    order = list(range(n_entries))
    rng = derive_substream(seed, SPLIT_EPOCH, 0, Purpose.SPLIT)
    for i in range(n_entries - 1, 0, -1):
        j = rng.integers(0, i)
        order[i], order[j] = order[j], order[i]
    return order[:n_train], order[n_train:]


@dataclass(frozen=True)
class EpochPlan:
    seed: int
    epochs: int = 1
    steps_per_epoch: int = STEPS_PER_EPOCH
    batch_size: int = BATCH_SIZE
    mode: Mode = Mode.BGAUG
    split_fraction: float = VALIDATION_FRACTION

    def __post_init__(self):
        if self.epochs < 0 or self.steps_per_epoch < 0 or self.batch_size < 0:
            raise ConfigError("epochs, steps and batch size must be non-negative")

    @property
    def samples_per_epoch(self) -> int:
        return self.steps_per_epoch * self.batch_size

    def to_json(self) -> dict:
        d = asdict(self)
        d["mode"] = self.mode.value
        return d


@dataclass(frozen=True)
class SampleJob:
    epoch: int
    index: int  # substream key within the epoch
    source: int  # manifest entry index


def build_epoch(plan: EpochPlan, train: Sequence[int], epoch: int) -> list[SampleJob]:
    """Choose the source frame of each of the epoch's samples, with replacement."""
    if not train:
        raise DataError("training list is empty")
    jobs = []
    for k in range(plan.samples_per_epoch):
        pick = derive_substream(plan.seed, epoch, k, Purpose.SPLIT).integers(0, len(train) - 1)
        jobs.append(SampleJob(epoch, k, train[pick]))
    return jobs


def validation_epoch(val: Sequence[int], epoch: int) -> list[SampleJob]:
    """Every validation frame once, augmented with its own substreams."""
    return [SampleJob(epoch, VAL_INDEX_OFFSET + k, src) for k, src in enumerate(val)]


# --- generation --------------------------------------------------------------

@dataclass
class Sample:
    job: SampleJob
    params: AugParams
    image: np.ndarray
    label: RelativePose


@dataclass
class GenerationContext:
    """Everything a worker needs to render samples. Read-only once built."""

    manifest: DatasetManifest
    seed: int
    mode: Mode
    ranges: SamplingRanges = field(default_factory=SamplingRanges)
    pool: Optional[BackgroundPool] = None
    frames: dict = field(default_factory=dict)
    masks: dict = field(default_factory=dict)  # uint8, decoded to alpha per sample
    crop_height: int = CROP_HEIGHT

    def load(self, sources: Iterable[int]) -> None:
        """Decode the frames (and masks, for BgAug) the jobs will touch."""
        sources = sorted(set(sources))
        if self.mode is Mode.BGAUG:
            missing = [self.manifest.entries[i].frame for i in sources if not self.manifest.entries[i].mask]
            if missing:
                listing = "\n  ".join(missing[:50])
                more = f"\n  ... and {len(missing) - 50} more" if len(missing) > 50 else ""
                raise ConfigError(f"BgAug needs masks; {len(missing)} entries have none:\n  {listing}{more}")
            if self.pool is None:
                raise ConfigError("BgAug mode needs a background pool (--pool or BGAUG_POOL)")
        w, h = self.manifest.frame_size
        for i in sources:
            if i in self.frames:
                continue
            entry = self.manifest.entries[i]
            self.frames[i] = load_frame(self.manifest, entry)
            if self.mode is Mode.BGAUG:
                alpha = load_prepared_mask(self.manifest.resolve(entry.mask), w, h)
                self.masks[i] = imaging.quantize(alpha * 255.0)

    def params_for(self, job: SampleJob) -> AugParams:
        return sample_params(
            self.seed, job.epoch, job.index, self.mode, self.pool, self.ranges,
            max_row_offset=self.manifest.frame_size[1] - self.crop_height,
        )

    def render(self, source: int, params: AugParams) -> np.ndarray:
        alpha = None
        if params.mode is Mode.BGAUG:
            alpha = self.masks[source] / 255.0
        return augment_sample(self.frames[source], alpha, self.pool, params, self.crop_height)

    def make_sample(self, job: SampleJob) -> Sample:
        params = self.params_for(job)
        label = self.manifest.entries[job.source].label
        return Sample(job, params, self.render(job.source, params), label)


_WORKER_CTX: Optional[GenerationContext] = None


def _init_worker(ctx: Optional[GenerationContext]) -> None:
    global _WORKER_CTX
    if ctx is not None:
        _WORKER_CTX = ctx


def _run_chunk(jobs: list[SampleJob]) -> list[Sample]:
    return [_WORKER_CTX.make_sample(job) for job in jobs]


def generate(ctx: GenerationContext, jobs: Sequence[SampleJob], workers: int = 1,
             chunk_size: int = 128) -> Iterator[Sample]:
    """Render jobs in order. Output does not depend on ``workers``."""
    if workers <= 1 or len(jobs) <= chunk_size:
        for job in jobs:
            yield ctx.make_sample(job)
        return
    global _WORKER_CTX
    chunks = [list(jobs[i : i + chunk_size]) for i in range(0, len(jobs), chunk_size)]
    if "fork" in multiprocessing.get_all_start_methods():
        # Forked workers inherit the decoded frames instead of unpickling them.
        _WORKER_CTX = ctx
        mp_ctx, init_arg = multiprocessing.get_context("fork"), None
    else:
        mp_ctx, init_arg = multiprocessing.get_context("spawn"), ctx
    try:
        with concurrent.futures.ProcessPoolExecutor(
            max_workers=workers, mp_context=mp_ctx, initializer=_init_worker, initargs=(init_arg,)
        ) as executor:
            for batch in executor.map(_run_chunk, chunks):
                yield from batch
    finally:
        _WORKER_CTX = None


# --- writers -----------------------------------------------------------------

def sample_name(job: SampleJob) -> str:
    return f"e{job.epoch:03d}_s{job.index:06d}"


def params_record(sample: Sample, manifest: DatasetManifest) -> dict:
    entry = manifest.entries[sample.job.source]
    return {
        "sample": sample_name(sample.job),
        "epoch": sample.job.epoch,
        "index": sample.job.index,
        "source": sample.job.source,
        "frame_id": entry.frame_id,
        "params": sample.params.to_json(),
    }


class PackedWriter:
    """Single-file archive: header, then per sample pixels and three float32 labels."""

    def __init__(self, path: Path, width: int, height: int):
        self.path = path
        self.width, self.height = width, height
        self.count = 0
        self._fh = open(path, "wb")
        self._fh.write(PACKED_HEADER.pack(PACKED_MAGIC, 0, width, height))

    def write(self, name: str, image: np.ndarray, label: RelativePose) -> None:
        if image.shape != (self.height, self.width):
            raise ValueError(f"sample {name} is {image.shape}, archive expects {(self.height, self.width)}")
        self._fh.write(np.ascontiguousarray(image, dtype=np.uint8).tobytes())
        self._fh.write(PACKED_LABEL.pack(*label))
        self.count += 1

    def close(self) -> None:
        self._fh.seek(0)
        self._fh.write(PACKED_HEADER.pack(PACKED_MAGIC, self.count, self.width, self.height))
        self._fh.close()

    def files(self) -> list[Path]:
        return [self.path]


class PngCsvWriter:
    """One PNG per sample plus a ``labels.csv`` keyed by sample name."""

    def __init__(self, out_dir: Path):
        self.out_dir = out_dir
        self.count = 0
        self._names: list[str] = []
        self._labels = open(out_dir / "labels.csv", "w", newline="", encoding="utf-8")
        self._csv = csv.writer(self._labels, lineterminator="\n")
        self._csv.writerow(["frame_id", "x", "y", "phi"])

    def write(self, name: str, image: np.ndarray, label: RelativePose) -> None:
        imaging.write_gray(self.out_dir / f"{name}.png", image)
        # float32 is the archive precision for labels in both formats.
        self._csv.writerow([name] + [format_float(float(np.float32(v))) for v in label])
        self._names.append(name)
        self.count += 1

    def close(self) -> None:
        self._labels.close()

    def files(self) -> list[Path]:
        return [self.out_dir / "labels.csv"] + [self.out_dir / f"{n}.png" for n in self._names]


def digest_files(paths: Iterable[Path]) -> str:
    h = hashlib.sha256()
    for p in paths:
        with open(p, "rb") as fh:
            for block in iter(lambda: fh.read(1 << 20), b""):
                h.update(block)
    return h.hexdigest()


def write_dataset(samples: Iterable[Sample], out_dir: str | os.PathLike, fmt: str,
                  manifest: DatasetManifest, width: int, height: int,
                  extra: Optional[dict] = None) -> dict:
    """Write samples in ``png`` or ``packed`` format plus ``params.jsonl`` and ``manifest.json``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if fmt == "packed":
        writer = PackedWriter(out_dir / "samples.bga", width, height)
    elif fmt in ("png", "png+csv"):
        writer = PngCsvWriter(out_dir)
    else:
        raise ConfigError(f"unknown output format {fmt!r}")
    params_path = out_dir / "params.jsonl"
    with open(params_path, "w", encoding="utf-8") as params_fh:
        try:
            for sample in samples:
                writer.write(sample_name(sample.job), sample.image, sample.label)
                params_fh.write(json.dumps(params_record(sample, manifest), sort_keys=True) + "\n")
        finally:
            writer.close()
    summary = {
        "format": "packed" if fmt == "packed" else "png+csv",
        "count": writer.count,
        "width": width,
        "height": height,
        "sha256": digest_files(writer.files()),
        "params_sha256": digest_files([params_path]),
    }
    if extra:
        summary.update(extra)
    (out_dir / "manifest.json").write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n",
                                           encoding="utf-8")
    return summary


def read_packed(path: str | os.PathLike) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(images[n, h, w] uint8, labels[n, 3] float32)``."""
    data = Path(path).read_bytes()
    if len(data) < PACKED_HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, count, width, height = PACKED_HEADER.unpack_from(data)
    if magic != PACKED_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    record = width * height + PACKED_LABEL.size
    if len(data) != packed_size(count, width, height):
        raise FormatError(f"{path}: size {len(data)} does not match {count} records of {record} bytes")
    body = np.frombuffer(data, dtype=np.uint8, offset=PACKED_HEADER.size).reshape(count, record)
    images = body[:, : width * height].reshape(count, height, width).copy()
    labels = body[:, width * height :].copy().view("<f4").reshape(count, 3)
    return images, labels


def packed_size(count: int, width: int, height: int) -> int:
    return PACKED_HEADER.size + count * (width * height + PACKED_LABEL.size)


def read_png_dataset(out_dir: str | os.PathLike) -> tuple[list[str], np.ndarray, np.ndarray]:
    """Read back a png+csv dataset as ``(names, images, labels)``."""
    out_dir = Path(out_dir)
    with open(out_dir / "labels.csv", newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))[1:]
    names = [r[0] for r in rows]
    labels = np.array([[float(v) for v in r[1:]] for r in rows], dtype=np.float32).reshape(-1, 3)
    images = np.array([imaging.read_gray(out_dir / f"{n}.png") for n in names], dtype=np.uint8)
    return names, images, labels
