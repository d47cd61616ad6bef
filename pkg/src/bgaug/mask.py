"""Subject selection and alpha mattes from per-frame segmentation output."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import imaging
from .errors import FormatError

PERSON = "person"
MASK_THRESHOLD = 128
DEFAULT_SOFTEN_SIGMA = 1.0


@dataclass(frozen=True)
class Detection:
    class_label: str
    score: float
    bbox: tuple[int, int, int, int]  # x0, y0, w, h
    mask_ref: str

    @property
    def area(self) -> int:
        return self.bbox[2] * self.bbox[3]

    def to_json(self) -> dict:
        return {
            "class": self.class_label,
            "score": self.score,
            "bbox": list(self.bbox),
            "mask": self.mask_ref,
        }


def parse_detection(record: dict, frame_w: Optional[int] = None, frame_h: Optional[int] = None) -> Detection:
    try:
        label = str(record["class"])
        score = float(record["score"])
        x0, y0, w, h = (int(v) for v in record["bbox"])
        mask_ref = str(record["mask"])
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"malformed detection record {record!r}: {exc}") from None
    if not 0.0 <= score <= 1.0:
        raise FormatError(f"detection score {score} outside [0, 1]")
    if w <= 0 or h <= 0 or x0 < 0 or y0 < 0:
        raise FormatError(f"degenerate bounding box {[x0, y0, w, h]}")
    if frame_w is not None and frame_h is not None and (x0 + w > frame_w or y0 + h > frame_h):
        raise FormatError(f"bounding box {[x0, y0, w, h]} exceeds {frame_w}x{frame_h} frame")
    return Detection(label, score, (x0, y0, w, h), mask_ref)


def load_detections(path: str | os.PathLike, frame_w: Optional[int] = None, frame_h: Optional[int] = None) -> list[Detection]:
    """Read one frame's detections JSON array.

    Mask references are resolved relative to the JSON file's directory.
    """
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        try:
            records = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(records, list):
        raise FormatError(f"{path}: expected a JSON array of detections")
    detections = []
    for rec in records:
        det = parse_detection(rec, frame_w, frame_h)
        mask_path = Path(det.mask_ref)
        if not mask_path.is_absolute():
            det = Detection(det.class_label, det.score, det.bbox, str(path.parent / mask_path))
        detections.append(det)
    return detections


def select_primary_person(detections: Sequence[Detection]) -> Optional[Detection]:
    """Pick the person with the largest bounding box.

    Ties on area go to the higher score, then to the earlier list position.
    Returns ``None`` when nothing is labelled ``person``.
    """
    best = None
    for det in detections:
        if det.class_label != PERSON:
            continue
        if best is None or (det.area, det.score) > (best.area, best.score):
            best = det
    return best


def decode_mask(mask_ref: str | os.PathLike, frame_w: int, frame_h: int) -> np.ndarray:
    """Load a binary mask file as a float alpha plane (values exactly 0.0 or 1.0)."""
    img = imaging.read_gray(mask_ref)
    if img.shape != (frame_h, frame_w):
        raise FormatError(
            f"{mask_ref}: mask is {img.shape[1]}x{img.shape[0]}, frame is {frame_w}x{frame_h}"
        )
    return (img >= MASK_THRESHOLD).astype(np.float64)


def soften_mask(alpha: np.ndarray, sigma: float = DEFAULT_SOFTEN_SIGMA) -> np.ndarray:
    if sigma < 0:
        raise ValueError(f"sigma must be non-negative, got {sigma}")
    if sigma == 0:
        return alpha
    return np.clip(imaging.gaussian_blur(alpha, sigma), 0.0, 1.0)


def encode_mask(alpha: np.ndarray) -> np.ndarray:
    """Alpha plane to the 8-bit stored form, ``round(alpha * 255)``."""
    return imaging.quantize(np.clip(alpha, 0.0, 1.0) * 255.0)


def load_prepared_mask(path: str | os.PathLike, frame_w: int, frame_h: int) -> np.ndarray:
    """Read a mask written by :func:`encode_mask` back into an alpha plane."""
    img = imaging.read_gray(path)
    if img.shape != (frame_h, frame_w):
        raise FormatError(
            f"{path}: mask is {img.shape[1]}x{img.shape[0]}, frame is {frame_w}x{frame_h}"
        )
    return img.astype(np.float64) / 255.0


def prepare_mask(
    detections: Sequence[Detection],
    frame_w: int,
    frame_h: int,
    sigma: float = DEFAULT_SOFTEN_SIGMA,
    override_index: Optional[int] = None,
) -> tuple[Optional[Detection], Optional[np.ndarray]]:
    """Select the subject and build its (softened) alpha matte.

    ``override_index`` picks a detection by list position instead of the
    largest-person rule; it must still refer to a ``person``.
    """
    if override_index is not None:
        if not 0 <= override_index < len(detections):
            raise FormatError(
                f"override index {override_index} out of range for {len(detections)} detections"
            )
        chosen = detections[override_index]
        if chosen.class_label != PERSON:
            raise FormatError(f"override index {override_index} is a {chosen.class_label!r}, not a person")
    else:
        chosen = select_primary_person(detections)
    if chosen is None:
        return None, None
    alpha = decode_mask(chosen.mask_ref, frame_w, frame_h)
    return chosen, soften_mask(alpha, sigma)
