"""Equirectangular/rectilinear projection math.

Conventions, fixed so that independent implementations agree numerically:

* camera frame: +z forward, +x right, +y down;
* azimuth phi = atan2(x, z), measured clockwise from north when viewed
  from above (0 = forward, +90 = right); elevation psi = -asin(y);
* panorama column x = ((phi - frame_heading)/360 + 0.5) * width, wrapped
  into [0, width); row y = (0.5 - psi/180) * height, clamped to
  [0, height - 1]. Pixel centers sit at integer coordinates; the azimuth
  axis wraps, elevation does not.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .imaging import MASK_BACKGROUND


@dataclass(frozen=True)
class EquirectPanorama:
    """Full 360x180 panorama; width must be exactly twice the height."""

    image: np.ndarray          # (H, 2H, 3) float in [0, 1]
    frame_heading: float = 0.0  # real-world azimuth of column width/2, degrees

    def __post_init__(self):
        h, w = self.image.shape[:2]
        if w != 2 * h:
            raise ValueError(f"panorama must be 2:1, got {w}x{h}")

    @property
    def height(self) -> int:
        return self.image.shape[0]

    @property
    def width(self) -> int:
        return self.image.shape[1]


@dataclass(frozen=True)
class CameraModel:
    """Pinhole camera: horizontal FOV plus output raster size."""

    hfov: float    # degrees, in (0, 180)
    out_w: int
    out_h: int

    def __post_init__(self):
        if not 0.0 < self.hfov < 180.0:
            raise ValueError(f"hfov must be in (0, 180), got {self.hfov}")
        if self.out_w < 1 or self.out_h < 1:
            raise ValueError("output raster must be at least 1x1")

    @property
    def focal(self) -> float:
        return (self.out_w / 2.0) / math.tan(math.radians(self.hfov) / 2.0)


@dataclass(frozen=True)
class SlicePlan:
    """N yaw centers at even intervals, starting at 0."""

    n_slices: int = 8
    yaw_centers: tuple[float, ...] = field(init=False)

    def __post_init__(self):
        if self.n_slices < 2:
            raise ValueError("need at least 2 slices")
        step = 360.0 / self.n_slices
        object.__setattr__(self, "yaw_centers",
                           tuple(k * step for k in range(self.n_slices)))


def pixel_ray(cam: CameraModel, u: float, v: float) -> np.ndarray:
    """Unit direction through pixel (u, v); pixel centers at +0.5."""
    f = cam.focal
    d = np.array([(u + 0.5 - cam.out_w / 2.0) / f,
                  (v + 0.5 - cam.out_h / 2.0) / f,
                  1.0])
    return d / np.linalg.norm(d)


def camera_rays(cam: CameraModel) -> np.ndarray:
    """(out_h, out_w, 3) unit rays for the full raster."""
    f = cam.focal
    xs = (np.arange(cam.out_w, dtype=np.float64) + 0.5 - cam.out_w / 2.0) / f
    ys = (np.arange(cam.out_h, dtype=np.float64) + 0.5 - cam.out_h / 2.0) / f
    x, y = np.meshgrid(xs, ys)
    d = np.stack([x, y, np.ones_like(x)], axis=-1)
    return d / np.linalg.norm(d, axis=-1, keepdims=True)


def rotate_yaw(d: np.ndarray, yaw_deg: float) -> np.ndarray:
    """Rotate direction(s) about the vertical axis by yaw degrees."""
    c = math.cos(math.radians(yaw_deg))
    s = math.sin(math.radians(yaw_deg))
    x, y, z = d[..., 0], d[..., 1], d[..., 2]
    return np.stack([x * c + z * s, y, -x * s + z * c], axis=-1)


def dir_to_azel(d: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Unit direction(s) -> (azimuth, elevation) in degrees."""
    az = np.degrees(np.arctan2(d[..., 0], d[..., 2]))
    el = np.degrees(-np.arcsin(np.clip(d[..., 1], -1.0, 1.0)))
    return az, el


def azel_to_dir(az_deg, el_deg) -> np.ndarray:
    """(azimuth, elevation) in degrees -> unit direction(s)."""
    az = np.radians(np.asarray(az_deg, dtype=np.float64))
    el = np.radians(np.asarray(el_deg, dtype=np.float64))
    return np.stack([np.cos(el) * np.sin(az),
                     -np.sin(el),
                     np.cos(el) * np.cos(az)], axis=-1)


def dir_to_equirect(d: np.ndarray, pano: EquirectPanorama):
    """Map unit direction(s) to subpixel panorama coordinates (x, y)."""
    az, el = dir_to_azel(d)
    x = ((az - pano.frame_heading) / 360.0 + 0.5) * pano.width
    x = np.mod(x, pano.width)
    y = np.clip((0.5 - el / 180.0) * pano.height, 0.0, pano.height - 1.0)
    return x, y


def _sample_equirect(image: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Bilinear sample with azimuth wrap and elevation clamp.

    Pixel centers at integer coordinates; x wraps modulo width, y is clamped.
    """
    h, w = image.shape[:2]
    x0 = np.floor(x).astype(np.intp)
    y0 = np.floor(y).astype(np.intp)
    wx = (x - x0)[..., None]
    wy = (y - y0)[..., None]
    x0 = np.mod(x0, w)
    x1 = np.mod(x0 + 1, w)
    y0 = np.clip(y0, 0, h - 1)
    y1 = np.minimum(y0 + 1, h - 1)

    top = image[y0, x0] * (1.0 - wx) + image[y0, x1] * wx
    bot = image[y1, x0] * (1.0 - wx) + image[y1, x1] * wx
    return top * (1.0 - wy) + bot * wy


def slice_panorama(pano: EquirectPanorama, yaw: float, cam: CameraModel) -> np.ndarray:
    """Render the perspective view at the given yaw from a panorama."""
    rays = rotate_yaw(camera_rays(cam), yaw)
    x, y = dir_to_equirect(rays, pano)
    return _sample_equirect(pano.image, x, y)


def slice_all(pano: EquirectPanorama, plan: SlicePlan, cam: CameraModel) -> list[np.ndarray]:
    """All context slices in yaw (= orientation bin) order."""
    return [slice_panorama(pano, yaw, cam) for yaw in plan.yaw_centers]


def azimuth_to_label(theta: float, n: int = 8) -> int:
    """Orientation bin for an azimuth: bin k covers [k*360/n - 180/n, k*360/n + 180/n).

    Half-open on the upper edge; bin k is centered on yaw k*360/n.
    """
    if not math.isfinite(theta):
        raise ValueError(f"azimuth must be finite, got {theta}")
    if n < 2:
        raise ValueError("need at least 2 bins")
    half = 180.0 / n
    return int(math.floor(((theta + half) % 360.0) / (360.0 / n))) % n


def bin_center(label: int, n: int = 8) -> float:
    return label * (360.0 / n)


def rotate_equirect(pano: EquirectPanorama, delta: float) -> EquirectPanorama:
    """Shift panorama columns so that slice(rotate(p, d), yaw) == slice(p, yaw + d).

    Integer-column shifts are pixel-exact; fractional shifts interpolate
    between adjacent columns.
    """
    w = pano.width
    shift = delta / 360.0 * w
    k = round(shift)
    if abs(shift - k) < 1e-12:
        image = np.roll(pano.image, -k, axis=1)
    else:
        x = np.mod(np.arange(w, dtype=np.float64) + shift, w)
        x0 = np.floor(x).astype(np.intp)
        frac = (x - x0)[None, :, None]
        x0 = np.mod(x0, w)
        x1 = np.mod(x0 + 1, w)
        image = pano.image[:, x0] * (1.0 - frac) + pano.image[:, x1] * frac
    return EquirectPanorama(image=image, frame_heading=pano.frame_heading)


def slice_mask_nearest(mask: np.ndarray, yaw: float, cam: CameraModel,
                       frame_heading: float = 0.0) -> np.ndarray:
    """Slice a panorama-aligned label mask with nearest-neighbor sampling."""
    h, w = mask.shape
    rays = rotate_yaw(camera_rays(cam), yaw)
    az, el = dir_to_azel(rays)
    x = np.mod(((az - frame_heading) / 360.0 + 0.5) * w, w)
    y = np.clip((0.5 - el / 180.0) * h, 0.0, h - 1.0)
    xi = np.mod(np.rint(x).astype(np.intp), w)
    yi = np.clip(np.rint(y).astype(np.intp), 0, h - 1)
    out = mask[yi, xi]
    return out.astype(np.uint8) if out.dtype != np.uint8 else out


__all__ = [
    "EquirectPanorama", "CameraModel", "SlicePlan",
    "pixel_ray", "rotate_yaw", "dir_to_azel", "azel_to_dir",
    "dir_to_equirect", "slice_panorama", "slice_all",
    "azimuth_to_label", "bin_center", "rotate_equirect",
    "slice_mask_nearest", "MASK_BACKGROUND",
]
