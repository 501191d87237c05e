"""Deterministic procedural street scenes.

A scene is a camera standing on an infinite straight road, surrounded by
colored billboard landmarks (one per 45-degree sector, so every orientation
bin has a distinctive cue). Scenes render either as a full equirectangular
panorama (the street-view stand-in) or through a pinhole camera at an
arbitrary heading (the user-view stand-in), under clear-day, clear-night or
rainy-day photometry. Every render is a pure function of
(scene_seed, moment_seed, condition, resolution).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import geometry
from .geometry import CameraModel, EquirectPanorama
from .imaging import MASK_BACKGROUND, MASK_DIVIDER, MASK_ROAD
from .rng import SplitMix64, derive_seed, normal_array

ROAD_COLOR = (0.34, 0.34, 0.37)
DIVIDER_COLOR = (0.88, 0.84, 0.58)
STREAK_SHADE = 0.45
N_LANDMARKS = 8
MIN_LANDMARK_SEPARATION_DEG = 15.0
MIN_COLOR_DISTANCE = 0.15
MAX_GEN_ATTEMPTS = 1000


class GenerationError(RuntimeError):
    """Scene constraints could not be satisfied within the attempt budget."""


@dataclass(frozen=True)
class Landmark:
    azimuth: float          # degrees
    elevation: float        # degrees, in [0, 40]
    angular_width: float    # degrees
    angular_height: float   # degrees
    color: tuple[float, float, float]


@dataclass(frozen=True)
class Occluder:
    """Gray box standing in for a transient dynamic object."""

    azimuth: float
    elevation: float
    angular_width: float
    angular_height: float
    shade: float = 0.5


@dataclass(frozen=True)
class SceneSpec:
    scene_seed: int
    road_heading: float
    road_half_width_deg: float  # angular half-width of the road at the horizon
    landmarks: tuple[Landmark, ...]
    sky_top: tuple[float, float, float]
    sky_horizon: tuple[float, float, float]
    ground: tuple[float, float, float]


@dataclass(frozen=True)
class Condition:
    """Photometric weather/illumination model; clear_day is the identity."""

    kind: str               # clear_day | clear_night | rainy_day
    brightness: float = 1.0
    tint: tuple[float, float, float] = (0.0, 0.0, 0.0)
    noise_sigma: float = 0.0
    streak_density: float = 0.0  # expected rain streaks per image column


CLEAR_DAY = Condition("clear_day")
CLEAR_NIGHT = Condition("clear_night", brightness=0.25, tint=(0.0, 0.0, 0.05),
                        noise_sigma=0.02)
RAINY_DAY = Condition("rainy_day", streak_density=0.06)

CONDITIONS = {c.kind: c for c in (CLEAR_DAY, CLEAR_NIGHT, RAINY_DAY)}


@dataclass(frozen=True)
class Moment:
    """One capture instant: landmark jitter, lighting, transient occluders."""

    moment_seed: int
    position_jitter_deg: float = 2.0
    lighting_scale: float = 1.0
    occluders: tuple[Occluder, ...] = ()


def make_moment(moment_seed: int, position_jitter_deg: float = 2.0,
                n_occluders: int = 0) -> Moment:
    """Sample a Moment's lighting and occluders from its seed."""
    rng = SplitMix64(derive_seed(moment_seed, "moment"))
    lighting = rng.uniform(0.9, 1.1)
    occluders = []
    for _ in range(n_occluders):
        occluders.append(Occluder(
            azimuth=rng.uniform(0.0, 360.0),
            elevation=rng.uniform(-20.0, 10.0),
            angular_width=rng.uniform(8.0, 20.0),
            angular_height=rng.uniform(8.0, 16.0),
            shade=rng.uniform(0.35, 0.6),
        ))
    return Moment(moment_seed=moment_seed, position_jitter_deg=position_jitter_deg,
                  lighting_scale=lighting, occluders=tuple(occluders))


def _circular_separation_ok(azimuths: list[float], min_sep: float) -> bool:
    for i in range(len(azimuths)):
        for j in range(i + 1, len(azimuths)):
            d = abs(azimuths[i] - azimuths[j]) % 360.0
            if min(d, 360.0 - d) < min_sep:
                return False
    return True


def _colors_distinct(colors: list[tuple[float, float, float]], min_dist: float) -> bool:
    for i in range(len(colors)):
        for j in range(i + 1, len(colors)):
            d = max(abs(a - b) for a, b in zip(colors[i], colors[j]))
            if d < min_dist:
                return False
    return True


def gen_scene(scene_seed: int) -> SceneSpec:
    """Expand a 64-bit seed into a full scene description.

    Landmarks are placed one per 45-degree sector with a bounded offset, which
    keeps every pair at least 17 degrees apart and guarantees each orientation
    bin contains its own distinctively colored cue. Color sets are
    rejection-sampled until pairwise distinct.
    """
    rng = SplitMix64(derive_seed(scene_seed, "scene"))
    road_heading = rng.uniform(0.0, 360.0)
    road_half_width = rng.uniform(6.0, 12.0)
    sky_top = tuple(rng.uniform(0.60, 0.80) for _ in range(3))
    sky_horizon = tuple(rng.uniform(0.72, 0.92) for _ in range(3))
    ground_base = rng.uniform(0.45, 0.56)
    ground = (ground_base, ground_base * rng.uniform(0.9, 1.0), ground_base * 0.82)

    for _ in range(MAX_GEN_ATTEMPTS):
        azimuths = [(k * 45.0 + rng.uniform(-14.0, 14.0)) % 360.0
                    for k in range(N_LANDMARKS)]
        colors = [tuple(rng.uniform(0.15, 0.90) for _ in range(3))
                  for _ in range(N_LANDMARKS)]
        if not _circular_separation_ok(azimuths, MIN_LANDMARK_SEPARATION_DEG):
            continue
        if not _colors_distinct(colors, MIN_COLOR_DISTANCE):
            continue
        landmarks = []
        for az, color in zip(azimuths, colors):
            height = rng.uniform(9.0, 18.0)
            width = rng.uniform(7.0, 14.0)
            elevation = rng.uniform(height / 2.0, 40.0 - height / 2.0)
            landmarks.append(Landmark(azimuth=az, elevation=elevation,
                                      angular_width=width, angular_height=height,
                                      color=color))
        return SceneSpec(scene_seed=scene_seed, road_heading=road_heading,
                         road_half_width_deg=road_half_width,
                         landmarks=tuple(landmarks), sky_top=sky_top,
                         sky_horizon=sky_horizon, ground=ground)
    raise GenerationError(
        f"could not satisfy scene constraints for seed {scene_seed} "
        f"in {MAX_GEN_ATTEMPTS} attempts")


def _wrap180(delta: np.ndarray) -> np.ndarray:
    return np.mod(delta + 180.0, 360.0) - 180.0


def scene_eval(scene: SceneSpec, moment: Moment,
               az_deg: np.ndarray, el_deg: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Evaluate scene color and road mask at the given view directions.

    az/el arrays of any matching shape; returns (rgb shape+(3,), mask shape).
    The mask reflects pre-photometry geometry: road and divider labels, with
    occluders clearing whatever they hide.
    """
    az = np.asarray(az_deg, dtype=np.float64)
    el = np.asarray(el_deg, dtype=np.float64)
    shape = az.shape
    img = np.empty(shape + (3,), dtype=np.float64)
    mask = np.zeros(shape, dtype=np.uint8)

    sky = el > 0.0
    t = np.clip(el / 90.0, 0.0, 1.0)[..., None]
    top = np.asarray(scene.sky_top)
    horizon = np.asarray(scene.sky_horizon)
    img[:] = np.asarray(scene.ground)
    np.copyto(img, horizon + (top - horizon) * t, where=sky[..., None])

    # Road: band of directions within the half-width angle of the great
    # circle through the horizon points at road_heading and the nadir.
    band = np.cos(np.radians(el)) * np.sin(np.radians(scene.road_heading - az))
    below = el < 0.0
    road = below & (np.abs(band) <= math.sin(math.radians(scene.road_half_width_deg)))
    divider = below & (np.abs(band) <= math.sin(math.radians(0.1 * scene.road_half_width_deg)))
    img[road] = ROAD_COLOR
    img[divider] = DIVIDER_COLOR
    mask[road] = MASK_ROAD
    mask[divider] = MASK_DIVIDER

    jitter = SplitMix64(derive_seed(moment.moment_seed, "landmark-jitter"))
    bound = moment.position_jitter_deg
    for lm in scene.landmarks:
        az_actual = lm.azimuth + jitter.uniform(-bound, bound)
        inside = ((np.abs(_wrap180(az - az_actual)) <= lm.angular_width / 2.0)
                  & (np.abs(el - lm.elevation) <= lm.angular_height / 2.0))
        img[inside] = lm.color

    for occ in moment.occluders:
        inside = ((np.abs(_wrap180(az - occ.azimuth)) <= occ.angular_width / 2.0)
                  & (np.abs(el - occ.elevation) <= occ.angular_height / 2.0))
        img[inside] = (occ.shade, occ.shade, occ.shade)
        mask[inside] = MASK_BACKGROUND

    img = np.clip(img * moment.lighting_scale, 0.0, 1.0)
    return img, mask


def apply_condition(img: np.ndarray, cond: Condition, noise_seed: int) -> np.ndarray:
    """Apply a condition's photometry; clear_day returns the input unchanged."""
    if cond.kind == "clear_day":
        return img
    out = np.asarray(img, dtype=np.float64)
    if cond.kind == "rainy_day":
        luma = (0.299 * out[..., 0] + 0.587 * out[..., 1] + 0.114 * out[..., 2])
        out = 0.5 * out + 0.5 * luma[..., None]       # desaturate halfway
        out = (out - 0.5) * 0.7 + 0.5                 # reduce contrast
    else:
        out = out * cond.brightness + np.asarray(cond.tint)
    if cond.noise_sigma > 0.0:
        noise = normal_array(derive_seed(noise_seed, "noise"), out.size,
                             sigma=cond.noise_sigma)
        out = out + noise.reshape(out.shape)
    if cond.streak_density > 0.0:
        out = _draw_streaks(out, cond.streak_density,
                            derive_seed(noise_seed, "streaks"))
    return np.clip(out, 0.0, 1.0)


def _draw_streaks(img: np.ndarray, density: float, seed: int) -> np.ndarray:
    h, w = img.shape[:2]
    rng = SplitMix64(seed)
    out = img.copy()
    for _ in range(int(round(density * w))):
        x = rng.randint(w)
        y0 = rng.randint(h)
        length = max(2, h // 6 + rng.randint(max(1, h // 4)))
        alpha = 0.4
        y1 = min(h, y0 + length)
        out[y0:y1, x] = (1.0 - alpha) * out[y0:y1, x] + alpha * STREAK_SHADE
    return out


def render_equirect(scene: SceneSpec, cond: Condition, moment: Moment,
                    h: int) -> tuple[EquirectPanorama, np.ndarray]:
    """Render the 2h x h street-view panorama and its road mask."""
    if h < 32:
        raise ValueError(f"panorama height must be >= 32, got {h}")
    w = 2 * h
    az = (np.arange(w, dtype=np.float64) / w - 0.5) * 360.0
    el = (0.5 - np.arange(h, dtype=np.float64) / h) * 180.0
    az_grid, el_grid = np.meshgrid(az, el)
    img, mask = scene_eval(scene, moment, az_grid, el_grid)
    seed = derive_seed(scene.scene_seed, moment.moment_seed, "pano", cond.kind, h)
    img = apply_condition(img, cond, seed)
    return EquirectPanorama(image=img, frame_heading=0.0), mask


def render_userview(scene: SceneSpec, cond: Condition, moment: Moment,
                    heading: float, cam: CameraModel) -> tuple[np.ndarray, np.ndarray, int]:
    """Render a pinhole photo facing `heading` directly from the analytic scene.

    Samples the scene itself, not a rendered panorama, so user-views carry
    none of the panorama's resampling signature. Returns (image, mask, label).
    """
    rays = geometry.rotate_yaw(geometry.camera_rays(cam), heading)
    az, el = geometry.dir_to_azel(rays)
    img, mask = scene_eval(scene, moment, az, el)
    seed = derive_seed(scene.scene_seed, moment.moment_seed, "user", cond.kind,
                       int(round(heading * 1e6)))
    img = apply_condition(img, cond, seed)
    return img, mask, geometry.azimuth_to_label(heading, 8)


def view_road_mask(scene: SceneSpec, moment: Moment, heading: float,
                   cam: CameraModel) -> np.ndarray:
    """Analytic road mask for a pinhole view (used for street-slice targets)."""
    rays = geometry.rotate_yaw(geometry.camera_rays(cam), heading)
    az, el = geometry.dir_to_azel(rays)
    _, mask = scene_eval(scene, moment, az, el)
    return mask
