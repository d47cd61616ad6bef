"""Repository of replacement backgrounds and deterministic background sampling."""

from __future__ import annotations

import logging
import os
import threading
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import imaging
from .errors import ConfigError
from .rng import RngStream

logger = logging.getLogger(__name__)

DEFAULT_CACHE_BYTES = 512 * 1024 * 1024


@dataclass(frozen=True)
class PoolEntry:
    path: str  # relative to the pool root, POSIX separators
    width: int
    height: int


def cover_size(width: int, height: int, target_w: int, target_h: int) -> tuple[int, int]:
    """Smallest aspect-preserving size that covers the target rectangle."""
    scale = max(target_w / width, target_h / height)
    # floor(x + 0.5) rather than round(): no banker's rounding at exact halves.
    scaled_w = max(target_w, int(np.floor(width * scale + 0.5)))
    scaled_h = max(target_h, int(np.floor(height * scale + 0.5)))
    return scaled_w, scaled_h


class _ByteLRU:
    """Thread-safe LRU keyed by entry index and bounded by total array bytes."""

    def __init__(self, budget: int):
        self.budget = budget
        self._items: OrderedDict[int, np.ndarray] = OrderedDict()
        self._bytes = 0
        self._lock = threading.Lock()

    def get(self, key: int):
        with self._lock:
            value = self._items.get(key)
            if value is not None:
                self._items.move_to_end(key)
            return value

    def put(self, key: int, value: np.ndarray) -> None:
        if value.nbytes > self.budget:
            return
        with self._lock:
            if key in self._items:
                return
            self._items[key] = value
            self._bytes += value.nbytes
            while self._bytes > self.budget:
                _, old = self._items.popitem(last=False)
                self._bytes -= old.nbytes


@dataclass
class BackgroundPool:
    root: Path
    entries: list[PoolEntry]
    target_w: int
    target_h: int
    skipped: int = 0
    cache_bytes: int = DEFAULT_CACHE_BYTES
    _cache: _ByteLRU = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        self._cache = _ByteLRU(self.cache_bytes)

    def __len__(self) -> int:
        return len(self.entries)

    def __getstate__(self):
        state = self.__dict__.copy()
        del state["_cache"]
        return state

    def __setstate__(self, state):
        self.__dict__.update(state)
        self._cache = _ByteLRU(self.cache_bytes)

    def scaled_size(self, index: int) -> tuple[int, int]:
        e = self.entries[index]
        return cover_size(e.width, e.height, self.target_w, self.target_h)

    def scaled_background(self, index: int) -> np.ndarray:
        """Grayscale, cover-scaled version of one entry (cached)."""
        cached = self._cache.get(index)
        if cached is not None:
            return cached
        entry = self.entries[index]
        gray = imaging.read_gray(self.root / entry.path)
        if gray.shape != (entry.height, entry.width):
            raise ConfigError(f"{entry.path}: image changed size since the pool was indexed")
        scaled = imaging.resize_bilinear(gray, *self.scaled_size(index))
        scaled.setflags(write=False)
        self._cache.put(index, scaled)
        return scaled

    def render(self, index: int, crop_x: int, crop_y: int) -> np.ndarray:
        return imaging.crop(self.scaled_background(index), crop_x, crop_y, self.target_w, self.target_h)

    def stats(self) -> dict:
        widths = [e.width for e in self.entries]
        heights = [e.height for e in self.entries]
        return {
            "root": str(self.root),
            "entries": len(self.entries),
            "skipped": self.skipped,
            "min_width": min(widths),
            "max_width": max(widths),
            "min_height": min(heights),
            "max_height": max(heights),
        }


def load_pool(root_dir: str | os.PathLike, target_w: int, target_h: int,
              cache_bytes: int = DEFAULT_CACHE_BYTES) -> BackgroundPool:
    """Index every usable image below ``root_dir`` in relative-path order.

    Files that fail to open, or that are smaller than a quarter of the target
    in either dimension, are skipped and counted.
    """
    root = Path(root_dir)
    if not root.is_dir():
        raise ConfigError(f"background pool directory {root} does not exist")
    candidates = sorted(
        p.relative_to(root).as_posix()
        for p in root.rglob("*")
        if p.is_file() and p.suffix.lower() in imaging.IMAGE_SUFFIXES
    )
    entries = []
    skipped = 0
    for rel in candidates:
        try:
            w, h = imaging.image_size(root / rel)
        except Exception as exc:  # PIL raises several unrelated types on corrupt files
            logger.warning("skipping undecodable background %s: %s", rel, exc)
            skipped += 1
            continue
        if 4 * w < target_w or 4 * h < target_h:
            logger.warning("skipping background %s: %dx%d is too small", rel, w, h)
            skipped += 1
            continue
        entries.append(PoolEntry(rel, w, h))
    if not entries:
        raise ConfigError(f"no usable background images in {root} ({skipped} skipped)")
    if skipped:
        logger.warning("background pool %s: %d files skipped", root, skipped)
    return BackgroundPool(root, entries, target_w, target_h, skipped, cache_bytes)


def sample_background_params(pool: BackgroundPool, rng: RngStream) -> tuple[int, int, int]:
    """Draw ``(entry, crop_x, crop_y)``; exactly three draws, in that order."""
    if not pool.entries:
        raise ConfigError("background pool is empty")
    index = rng.integers(0, len(pool.entries) - 1)
    scaled_w, scaled_h = pool.scaled_size(index)
    crop_x = rng.integers(0, scaled_w - pool.target_w)
    crop_y = rng.integers(0, scaled_h - pool.target_h)
    return index, crop_x, crop_y


def sample_background(pool: BackgroundPool, rng: RngStream) -> np.ndarray:
    return pool.render(*sample_background_params(pool, rng))
