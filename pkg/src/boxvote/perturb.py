"""Deterministic image and annotation perturbations.

Three conditions: horizontal flip (boxes remapped), unsharp-mask sharpening
and linear-RGB brightness scaling (boxes untouched). Images are uint8 sRGB
arrays of shape (height, width, 3). PNG I/O goes through Pillow; binary PPM
(P6) is read and written natively so a dependency-free bit-exact path exists.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image as PilImage

from .core import BBox, GroundTruthBox
from .errors import ParseError


class PerturbKind(str, Enum):
    FLIP_H = "FLIP_H"
    SHARPEN = "SHARPEN"
    BRIGHTNESS = "BRIGHTNESS"


@dataclass(frozen=True)
class PerturbSpec:
    """One perturbation with the parameters for its kind."""

    kind: PerturbKind
    sigma: float = 2.0
    amount: float = 1.0
    factor: float = 1.0

    def __post_init__(self):
        if self.kind is PerturbKind.SHARPEN:
            if self.sigma <= 0:
                raise ValueError(f"sigma must be > 0, got {self.sigma}")
            if self.amount < 0:
                raise ValueError(f"amount must be >= 0, got {self.amount}")
        if self.kind is PerturbKind.BRIGHTNESS and self.factor <= 0:
            raise ValueError(f"factor must be > 0, got {self.factor}")


# Condition tokens used by the harness and in dataset manifests. "N" is the
# untouched baseline; magnitudes are configurable at the CLI.
STANDARD_CONDITIONS: dict[str, PerturbSpec | None] = {
    "N": None,
    "F": PerturbSpec(PerturbKind.FLIP_H),
    "SUp": PerturbSpec(PerturbKind.SHARPEN, sigma=2.0, amount=1.0),
    "BUp": PerturbSpec(PerturbKind.BRIGHTNESS, factor=1.3),
    "BDn": PerturbSpec(PerturbKind.BRIGHTNESS, factor=0.7),
}


def _check_image(img: np.ndarray) -> np.ndarray:
    if img.ndim != 3 or img.shape[2] != 3 or img.dtype != np.uint8:
        raise ValueError(f"expected uint8 (H, W, 3) image, got {img.dtype} {img.shape}")
    return img


def flip_box_h(box: BBox, width: float) -> BBox:
    """Mirror a box around the vertical image axis: (x1, x2) -> (W-x2, W-x1)."""
    return BBox(width - box.x2, box.y1, width - box.x1, box.y2)


def flip_h(
    img: np.ndarray, gts: Sequence[GroundTruthBox]
) -> tuple[np.ndarray, list[GroundTruthBox]]:
    """Horizontally mirror pixels and ground-truth boxes."""
    _check_image(img)
    width = img.shape[1]
    flipped = np.ascontiguousarray(img[:, ::-1, :])
    boxes = [GroundTruthBox(flip_box_h(gt.box, width), gt.class_id) for gt in gts]
    return flipped, boxes


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Normalized 1-D Gaussian truncated at radius ceil(3*sigma)."""
    radius = math.ceil(3.0 * sigma)
    offsets = np.arange(-radius, radius + 1, dtype=float)
    kernel = np.exp(-(offsets**2) / (2.0 * sigma * sigma))
    return kernel / kernel.sum()


def gaussian_blur(img: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur in float64 with edge-clamp padding."""
    kernel = gaussian_kernel(sigma)
    radius = len(kernel) // 2
    out = img.astype(np.float64)
    for axis in (0, 1):
        pad = [(0, 0)] * out.ndim
        pad[axis] = (radius, radius)
        padded = np.pad(out, pad, mode="edge")
        acc = np.zeros_like(out)
        for k, weight in enumerate(kernel):
            sl = [slice(None)] * out.ndim
            sl[axis] = slice(k, k + out.shape[axis])
            acc += weight * padded[tuple(sl)]
        out = acc
    return out


def sharpen(img: np.ndarray, sigma: float, amount: float) -> np.ndarray:
    """Unsharp masking: img + amount * (img - blur), clamped to 8-bit range."""
    _check_image(img)
    if sigma <= 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    if amount < 0:
        raise ValueError(f"amount must be >= 0, got {amount}")
    base = img.astype(np.float64)
    high = base - gaussian_blur(img, sigma)
    out = base + amount * high
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


# Piecewise sRGB transfer functions (knees at 0.04045 / 0.0031308).

def srgb_to_linear(values: np.ndarray) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    return np.where(
        values <= 0.04045, values / 12.92, ((values + 0.055) / 1.055) ** 2.4
    )


def linear_to_srgb(values: np.ndarray) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    return np.where(
        values <= 0.0031308,
        values * 12.92,
        1.055 * np.power(values, 1.0 / 2.4) - 0.055,
    )


def brightness(img: np.ndarray, factor: float) -> np.ndarray:
    """Exposure scale in linear RGB: decode, multiply, re-encode, clamp."""
    _check_image(img)
    if factor <= 0:
        raise ValueError(f"factor must be > 0, got {factor}")
    linear = srgb_to_linear(img.astype(np.float64) / 255.0)
    scaled = np.clip(linear * factor, 0.0, 1.0)
    encoded = linear_to_srgb(scaled) * 255.0
    return np.clip(np.rint(encoded), 0, 255).astype(np.uint8)


def apply_perturbation(
    img: np.ndarray, gts: Sequence[GroundTruthBox], spec: PerturbSpec
) -> tuple[np.ndarray, list[GroundTruthBox]]:
    """Apply one perturbation to an image and its annotations."""
    if spec.kind is PerturbKind.FLIP_H:
        return flip_h(img, gts)
    if spec.kind is PerturbKind.SHARPEN:
        return sharpen(img, spec.sigma, spec.amount), list(gts)
    if spec.kind is PerturbKind.BRIGHTNESS:
        return brightness(img, spec.factor), list(gts)
    raise ValueError(f"unknown perturbation kind {spec.kind}")


def read_ppm(path: str | Path) -> np.ndarray:
    """Read a binary P6 PPM with maxval 255."""
    data = Path(path).read_bytes()
    tokens: list[bytes] = []
    pos = 0
    while len(tokens) < 4 and pos < len(data):
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if pos > start:
            tokens.append(data[start:pos])
    if len(tokens) < 4 or tokens[0] != b"P6":
        raise ParseError(f"not a binary P6 PPM: {path}", path=str(path))
    try:
        width, height, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    except ValueError:
        raise ParseError(f"malformed PPM header: {path}", path=str(path)) from None
    if maxval != 255:
        raise ParseError(f"only maxval 255 supported, got {maxval}", path=str(path))
    pos += 1  # single whitespace byte after maxval
    expected = width * height * 3
    raster = data[pos : pos + expected]
    if len(raster) != expected:
        raise ParseError(
            f"PPM raster truncated: expected {expected} bytes, got {len(raster)}",
            path=str(path),
        )
    return np.frombuffer(raster, dtype=np.uint8).reshape(height, width, 3).copy()


def write_ppm(path: str | Path, img: np.ndarray) -> None:
    _check_image(img)
    height, width = img.shape[:2]
    header = f"P6\n{width} {height}\n255\n".encode("ascii")
    Path(path).write_bytes(header + img.tobytes())


def read_image(path: str | Path) -> np.ndarray:
    """Read PNG (via Pillow) or binary PPM into a uint8 RGB array."""
    path = Path(path)
    if path.suffix.lower() == ".ppm":
        return read_ppm(path)
    with PilImage.open(path) as handle:
        return np.asarray(handle.convert("RGB"), dtype=np.uint8)


def write_image(path: str | Path, img: np.ndarray) -> None:
    _check_image(img)
    path = Path(path)
    if path.suffix.lower() == ".ppm":
        write_ppm(path, img)
    else:
        PilImage.fromarray(img).save(path)
