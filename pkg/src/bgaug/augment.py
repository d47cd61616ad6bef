"""Background randomization, pitch and photometric augmentation.

A sample is produced in three steps, always in this order:

1. background randomization (``BgAug`` mode only): the subject is composited
   over a random background with the *over* operator;
2. pitch augmentation: a band of contiguous rows is cropped;
3. photometric augmentation: exposure, gamma, dynamic-range reduction, blur,
   additive noise, then vignetting.

All randomness is sampled up front into an :class:`AugParams` record, so the
transform itself is a pure function of (frame, alpha, pool, params).
"""

from __future__ import annotations

import enum
import functools
import math
from dataclasses import asdict, dataclass, fields
from typing import Mapping, Optional

import numpy as np

from . import imaging
from .background import BackgroundPool, sample_background_params
from .constants import CENTER_ROW_OFFSET, CROP_HEIGHT, MAX_ROW_OFFSET, PITCH_DELTA_TOP_DEG
from .errors import ConfigError
from .rng import Purpose, RngStream, derive_substream


class Mode(str, enum.Enum):
    AUG = "Aug"
    BGAUG = "BgAug"

    @classmethod
    def parse(cls, text: str) -> "Mode":
        for mode in cls:
            if text.lower() == mode.value.lower():
                return mode
        raise ConfigError(f"unknown mode {text!r}; expected 'aug' or 'bgaug'")


@dataclass(frozen=True)
class SamplingRanges:
    """Ranges the per-sample photometric knobs are drawn from (inclusive bounds)."""

    exposure_gain: tuple[float, float] = (0.7, 1.3)
    gamma: tuple[float, float] = (0.6, 1.4)
    dr_lo: tuple[float, float] = (0.0, 50.0)
    dr_hi: tuple[float, float] = (205.0, 255.0)
    blur_sigma: tuple[float, float] = (0.0, 1.5)
    blur_probability: float = 0.5
    noise_sigma: tuple[float, float] = (0.0, 8.0)
    vignette_f: tuple[float, float] = (0.7, 1.6)
    vignette_strength: tuple[float, float] = (0.0, 1.0)

    def __post_init__(self):
        for f in fields(self):
            if f.name == "blur_probability":
                continue
            lo, hi = getattr(self, f.name)
            if not lo <= hi:
                raise ConfigError(f"range {f.name} has lo > hi: {lo} > {hi}")
        if not 0.0 <= self.blur_probability <= 1.0:
            raise ConfigError(f"blur_probability must be in [0, 1], got {self.blur_probability}")
        if self.exposure_gain[0] <= 0 or self.gamma[0] <= 0 or self.vignette_f[0] <= 0:
            raise ConfigError("exposure_gain, gamma and vignette_f ranges must be positive")
        if self.dr_lo[0] < 0 or self.dr_hi[1] > 255 or self.dr_lo[1] >= self.dr_hi[0]:
            raise ConfigError("dynamic range bounds must satisfy 0 <= dr_lo < dr_hi <= 255")
        if self.blur_sigma[0] < 0 or self.noise_sigma[0] < 0:
            raise ConfigError("blur_sigma and noise_sigma ranges must be non-negative")
        if self.vignette_strength[0] < 0 or self.vignette_strength[1] > 1:
            raise ConfigError("vignette_strength range must lie within [0, 1]")

    @classmethod
    def from_mapping(cls, overrides: Mapping) -> "SamplingRanges":
        known = {f.name for f in fields(cls)}
        unknown = set(overrides) - known
        if unknown:
            raise ConfigError(f"unknown sampling range keys: {sorted(unknown)}")
        values = {}
        for key, value in overrides.items():
            try:
                if key == "blur_probability":
                    values[key] = float(value)
                else:
                    lo, hi = value
                    values[key] = (float(lo), float(hi))
            except (TypeError, ValueError):
                raise ConfigError(f"bad value for {key}: {value!r}") from None
        return cls(**values)

    def to_json(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}


@dataclass(frozen=True)
class AugParams:
    mode: Mode
    bg_entry: Optional[int]
    bg_crop: Optional[tuple[int, int]]
    row_offset: int
    exposure_gain: float
    gamma: float
    dr_lo: float
    dr_hi: float
    blur_sigma: float
    noise_sigma: float
    noise_seed: int
    vignette_f: float
    vignette_strength: float

    def validate(self, max_row_offset: int = MAX_ROW_OFFSET) -> None:
        if not 0 <= self.row_offset <= max_row_offset:
            raise ValueError(f"row_offset {self.row_offset} outside [0, {max_row_offset}]")
        if not (0 <= self.dr_lo < self.dr_hi <= 255):
            raise ValueError(f"invalid dynamic range ({self.dr_lo}, {self.dr_hi})")
        if self.exposure_gain <= 0 or self.gamma <= 0 or self.vignette_f <= 0:
            raise ValueError("exposure_gain, gamma and vignette_f must be positive")
        if self.blur_sigma < 0 or self.noise_sigma < 0:
            raise ValueError("blur_sigma and noise_sigma must be non-negative")
        if not 0 <= self.vignette_strength <= 1:
            raise ValueError(f"vignette_strength {self.vignette_strength} outside [0, 1]")
        if self.mode is Mode.BGAUG and (self.bg_entry is None or self.bg_crop is None):
            raise ValueError("BgAug params need a background entry and crop origin")

    def to_json(self) -> dict:
        d = {name: getattr(self, name) for name in self.__dataclass_fields__}
        d["mode"] = self.mode.value
        d["bg_crop"] = list(self.bg_crop) if self.bg_crop is not None else None
        return d

    @classmethod
    def from_json(cls, d: Mapping) -> "AugParams":
        d = dict(d)
        d["mode"] = Mode.parse(d["mode"])
        if d.get("bg_crop") is not None:
            d["bg_crop"] = tuple(int(v) for v in d["bg_crop"])
        return cls(**d)

    @classmethod
    def identity(cls, mode: Mode = Mode.AUG, row_offset: int = CENTER_ROW_OFFSET, **overrides) -> "AugParams":
        """Parameters whose photometric steps are all no-ops."""
        base = dict(
            mode=mode, bg_entry=None, bg_crop=None, row_offset=row_offset,
            exposure_gain=1.0, gamma=1.0, dr_lo=0.0, dr_hi=255.0, blur_sigma=0.0,
            noise_sigma=0.0, noise_seed=0, vignette_f=1.0, vignette_strength=0.0,
        )
        base.update(overrides)
        return cls(**base)


# --- single steps ------------------------------------------------------------

def composite_over(frame: np.ndarray, alpha: np.ndarray, background: np.ndarray) -> np.ndarray:
    """Real-valued *over*: ``alpha * frame + (1 - alpha) * background``."""
    if not frame.shape == alpha.shape == background.shape:
        raise ValueError(
            f"shape mismatch: frame {frame.shape}, alpha {alpha.shape}, background {background.shape}"
        )
    return alpha * frame + (1.0 - alpha) * background


def replace_background(frame: np.ndarray, alpha: np.ndarray, background: np.ndarray) -> np.ndarray:
    return imaging.quantize(composite_over(frame.astype(np.float64), alpha, background.astype(np.float64)))


def pitch_crop(frame: np.ndarray, row_offset: int, crop_height: int = CROP_HEIGHT) -> np.ndarray:
    """Keep rows ``[row_offset, row_offset + crop_height)``, verbatim."""
    max_offset = frame.shape[0] - crop_height
    if not 0 <= row_offset <= max_offset:
        raise ValueError(f"row_offset {row_offset} outside [0, {max_offset}]")
    return frame[row_offset : row_offset + crop_height].copy()


def offset_to_pitch_delta(row_offset: int, max_offset: int = MAX_ROW_OFFSET) -> float:
    """Approximate camera pitch change (degrees) relative to the centre crop.

    Linear in the offset: +14 degrees for the top band, 0 at the centre, -14 at
    the bottom. Informational only; labels are never adjusted.
    """
    if not 0 <= row_offset <= max_offset:
        raise ValueError(f"row_offset {row_offset} outside [0, {max_offset}]")
    center = max_offset / 2
    return (center - row_offset) * (PITCH_DELTA_TOP_DEG / center)


def apply_exposure(plane: np.ndarray, gain: float) -> np.ndarray:
    if gain <= 0:
        raise ValueError(f"exposure gain must be positive, got {gain}")
    return plane * gain


def apply_gamma(plane: np.ndarray, gamma: float) -> np.ndarray:
    if gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    return 255.0 * np.power(np.clip(plane, 0.0, 255.0) / 255.0, gamma)


def reduce_dynamic_range(plane: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Affinely squeeze [0, 255] into [lo, hi]."""
    if not 0 <= lo < hi <= 255:
        raise ValueError(f"need 0 <= lo < hi <= 255, got ({lo}, {hi})")
    return lo + plane * ((hi - lo) / 255.0)


def add_noise(plane: np.ndarray, sigma: float, rng: RngStream) -> np.ndarray:
    """Add i.i.d. Gaussian noise drawn from ``rng`` in row-major pixel order."""
    if sigma < 0:
        raise ValueError(f"noise sigma must be non-negative, got {sigma}")
    if sigma == 0:
        return plane
    noise = rng.normal_array(plane.size).reshape(plane.shape)
    return plane + sigma * noise


def vignette_gain(r, f: float):
    """Cosine-fourth falloff ``(1 + (r/f)^2)^-2`` at normalized radius ``r``."""
    q = 1.0 + (np.asarray(r, dtype=np.float64) / f) ** 2
    return 1.0 / (q * q)


@functools.lru_cache(maxsize=8)
def normalized_radius(height: int, width: int) -> np.ndarray:
    """Distance of each pixel centre from the image centre, over the half-diagonal."""
    ys = np.arange(height, dtype=np.float64) + 0.5 - height / 2.0
    xs = np.arange(width, dtype=np.float64) + 0.5 - width / 2.0
    r = np.hypot(ys[:, None], xs[None, :]) / (math.hypot(width, height) / 2.0)
    r.setflags(write=False)
    return r


def apply_vignette(plane: np.ndarray, f: float, strength: float) -> np.ndarray:
    if f <= 0:
        raise ValueError(f"vignette f must be positive, got {f}")
    if not 0 <= strength <= 1:
        raise ValueError(f"vignette strength must be in [0, 1], got {strength}")
    if strength == 0:
        return plane
    gain = vignette_gain(normalized_radius(*plane.shape), f)
    return plane * ((1.0 - strength) + strength * gain)


def photometric(plane: np.ndarray, params: AugParams) -> np.ndarray:
    """The float photometric chain; no quantization."""
    plane = apply_exposure(plane, params.exposure_gain)
    plane = apply_gamma(plane, params.gamma)
    plane = reduce_dynamic_range(plane, params.dr_lo, params.dr_hi)
    plane = imaging.gaussian_blur(plane, params.blur_sigma)
    plane = add_noise(plane, params.noise_sigma, RngStream(params.noise_seed))
    return apply_vignette(plane, params.vignette_f, params.vignette_strength)


# --- composed transform ------------------------------------------------------

def sample_params(
    seed: int,
    epoch: int,
    index: int,
    mode: Mode,
    pool: Optional[BackgroundPool] = None,
    ranges: SamplingRanges = SamplingRanges(),
    max_row_offset: int = MAX_ROW_OFFSET,
) -> AugParams:
    """Draw every random knob for one sample from its own substreams."""
    bg_entry = bg_crop = None
    if mode is Mode.BGAUG:
        if pool is None:
            raise ConfigError("BgAug mode needs a background pool")
        bg_entry, cx, cy = sample_background_params(
            pool, derive_substream(seed, epoch, index, Purpose.BACKGROUND)
        )
        bg_crop = (cx, cy)

    row_offset = derive_substream(seed, epoch, index, Purpose.PITCH).integers(0, max_row_offset)

    s = derive_substream(seed, epoch, index, Purpose.PHOTOMETRIC)
    exposure_gain = s.uniform(*ranges.exposure_gain)
    gamma = s.uniform(*ranges.gamma)
    dr_lo = s.uniform(*ranges.dr_lo)
    dr_hi = s.uniform(*ranges.dr_hi)
    # One draw decides both whether to blur and how much.
    u = s.random()
    p = ranges.blur_probability
    lo, hi = ranges.blur_sigma
    blur_sigma = lo + (hi - lo) * (u / p) if u < p else 0.0
    noise_sigma = s.uniform(*ranges.noise_sigma)
    vignette_f = s.uniform(*ranges.vignette_f)
    vignette_strength = s.uniform(*ranges.vignette_strength)

    noise_seed = derive_substream(seed, epoch, index, Purpose.NOISE).state

    return AugParams(
        mode=mode, bg_entry=bg_entry, bg_crop=bg_crop, row_offset=row_offset,
        exposure_gain=exposure_gain, gamma=gamma, dr_lo=dr_lo, dr_hi=dr_hi,
        blur_sigma=blur_sigma, noise_sigma=noise_sigma, noise_seed=noise_seed,
        vignette_f=vignette_f, vignette_strength=vignette_strength,
    )


def augment_sample(
    frame: np.ndarray,
    alpha: Optional[np.ndarray],
    pool: Optional[BackgroundPool],
    params: AugParams,
    crop_height: int = CROP_HEIGHT,
) -> np.ndarray:
    """Apply the full pipeline to one frame; the result is quantized once."""
    params.validate(frame.shape[0] - crop_height)
    rows = slice(params.row_offset, params.row_offset + crop_height)
    plane = frame[rows].astype(np.float64)
    if params.mode is Mode.BGAUG:
        if alpha is None:
            raise ConfigError("BgAug mode requires an alpha mask for every frame")
        if pool is None:
            raise ConfigError("BgAug mode needs a background pool")
        if alpha.shape != frame.shape:
            raise ValueError(f"alpha {alpha.shape} does not match frame {frame.shape}")
        # Compositing is per-pixel, so cropping first gives identical values.
        background = pool.render(params.bg_entry, *params.bg_crop)[rows].astype(np.float64)
        plane = composite_over(plane, alpha[rows], background)
    return imaging.quantize(photometric(plane, params))


def center_crop(frame: np.ndarray, crop_height: int = CROP_HEIGHT) -> np.ndarray:
    """Deterministic evaluation crop: the middle ``crop_height`` rows."""
    return pitch_crop(frame, (frame.shape[0] - crop_height) // 2, crop_height)
