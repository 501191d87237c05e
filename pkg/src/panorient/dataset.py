"""Dataset construction: locations, splits, moments and sample expansion.

A dataset is a manifest of seeded locations split 9:1 into train and test.
Each location has one reference moment (whose clear-day panorama provides
the eight context slices) and at least one other moment. Renders are pure
functions of the manifest seeds, so the manifest alone reproduces every
image byte-for-byte; images are materialized lazily or exported on demand.

Sample domains:

* train: street-slice targets from other moments of train locations,
  clear-day only (the street-view training domain has no night/rain data);
* test upper bound: the same construction on test locations;
* test user-view: pinhole renders of a fresh moment at test locations,
  one heading per orientation bin per condition (balanced by construction).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from . import world
from .geometry import CameraModel, SlicePlan, bin_center
from .rng import SplitMix64, derive_seed

MANIFEST_NAME = "manifest.json"
MANIFEST_VERSION = "panorient-dataset-1"

DEFAULT_PANO_HEIGHT = 64
DEFAULT_CELL = 32
DEFAULT_SLICE_HFOV = 90.0
# 27mm-equivalent narrow-angle lens: 2*atan(18/27) = 67.4 degrees.
DEFAULT_USERVIEW_HFOV = 67.4
DEFAULT_N_MOMENTS = 2

STREET_SLICE = "street_slice"
USER_VIEW = "user_view"


@dataclass(frozen=True)
class LocationEntry:
    location_id: int
    scene_seed: int
    split: str                      # "train" | "test"
    moment_seeds: tuple[int, ...]   # element 0 is the reference moment
    user_moment_seed: int
    conditions: tuple[str, ...]


@dataclass(frozen=True)
class DatasetManifest:
    version: str
    seed: int
    n_locations: int
    pano_height: int
    cell: int
    slice_hfov: float
    userview_hfov: float
    n_slices: int
    locations: tuple[LocationEntry, ...]

    @property
    def train_locations(self) -> list[LocationEntry]:
        return [loc for loc in self.locations if loc.split == "train"]

    @property
    def test_locations(self) -> list[LocationEntry]:
        return [loc for loc in self.locations if loc.split == "test"]

    def slice_camera(self) -> CameraModel:
        return CameraModel(hfov=self.slice_hfov, out_w=self.cell, out_h=self.cell)

    def user_camera(self) -> CameraModel:
        return CameraModel(hfov=self.userview_hfov, out_w=self.cell, out_h=self.cell)

    def slice_plan(self) -> SlicePlan:
        return SlicePlan(n_slices=self.n_slices)


@dataclass(frozen=True)
class Sample:
    location_id: int
    target_source: str      # STREET_SLICE | USER_VIEW
    condition: str
    heading: float
    label: int
    context_moment: int     # seed of the moment providing the contexts
    target_moment: int      # seed of the moment the target comes from


def build_manifest(n_locations: int, seed: int,
                   n_moments: int = DEFAULT_N_MOMENTS,
                   pano_height: int = DEFAULT_PANO_HEIGHT,
                   cell: int = DEFAULT_CELL,
                   slice_hfov: float = DEFAULT_SLICE_HFOV,
                   userview_hfov: float = DEFAULT_USERVIEW_HFOV,
                   n_slices: int = 8) -> DatasetManifest:
    """Deterministic manifest with a 9:1 train/test location split."""
    if n_locations < 10:
        raise ValueError(f"need at least 10 locations, got {n_locations}")
    if n_moments < 2:
        raise ValueError("each location needs a reference moment plus one more")
    n_train = round(0.9 * n_locations)
    conditions = tuple(world.CONDITIONS)
    locations = []
    for i in range(n_locations):
        locations.append(LocationEntry(
            location_id=i,
            scene_seed=derive_seed(seed, "scene", i),
            split="train" if i < n_train else "test",
            moment_seeds=tuple(derive_seed(seed, "moment", i, j)
                               for j in range(n_moments)),
            user_moment_seed=derive_seed(seed, "user-moment", i),
            conditions=conditions,
        ))
    return DatasetManifest(
        version=MANIFEST_VERSION, seed=seed, n_locations=n_locations,
        pano_height=pano_height, cell=cell, slice_hfov=slice_hfov,
        userview_hfov=userview_hfov, n_slices=n_slices,
        locations=tuple(locations))


def manifest_to_json(manifest: DatasetManifest) -> str:
    doc = {
        "version": manifest.version,
        "seed": manifest.seed,
        "n_locations": manifest.n_locations,
        "pano_height": manifest.pano_height,
        "cell": manifest.cell,
        "slice_hfov": manifest.slice_hfov,
        "userview_hfov": manifest.userview_hfov,
        "n_slices": manifest.n_slices,
        "locations": [
            {
                "location_id": loc.location_id,
                "scene_seed": loc.scene_seed,
                "split": loc.split,
                "moment_seeds": list(loc.moment_seeds),
                "user_moment_seed": loc.user_moment_seed,
                "conditions": list(loc.conditions),
            }
            for loc in manifest.locations
        ],
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def manifest_from_json(text: str) -> DatasetManifest:
    doc = json.loads(text)
    if doc.get("version") != MANIFEST_VERSION:
        raise ValueError(f"unsupported manifest version {doc.get('version')!r}")
    locations = tuple(
        LocationEntry(
            location_id=entry["location_id"],
            scene_seed=entry["scene_seed"],
            split=entry["split"],
            moment_seeds=tuple(entry["moment_seeds"]),
            user_moment_seed=entry["user_moment_seed"],
            conditions=tuple(entry["conditions"]),
        )
        for entry in doc["locations"]
    )
    return DatasetManifest(
        version=doc["version"], seed=doc["seed"], n_locations=doc["n_locations"],
        pano_height=doc["pano_height"], cell=doc["cell"],
        slice_hfov=doc["slice_hfov"], userview_hfov=doc["userview_hfov"],
        n_slices=doc["n_slices"], locations=locations)


def build_dataset(n_locations: int, seed: int, out_dir,
                  n_moments: int = DEFAULT_N_MOMENTS,
                  pano_height: int = DEFAULT_PANO_HEIGHT,
                  cell: int = DEFAULT_CELL) -> DatasetManifest:
    """Build and persist a manifest under out_dir/manifest.json."""
    manifest = build_manifest(n_locations, seed, n_moments=n_moments,
                              pano_height=pano_height, cell=cell)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / MANIFEST_NAME).write_text(manifest_to_json(manifest), encoding="ascii")
    return manifest


def load_manifest(data_dir) -> DatasetManifest:
    path = Path(data_dir) / MANIFEST_NAME
    if not path.exists():
        raise FileNotFoundError(f"no {MANIFEST_NAME} in {data_dir}")
    return manifest_from_json(path.read_text(encoding="ascii"))


def _user_heading(manifest: DatasetManifest, loc: LocationEntry,
                  cond: str, label: int) -> float:
    """Deterministic heading inside bin `label` (not a bin center)."""
    step = 360.0 / manifest.n_slices
    rng = SplitMix64(derive_seed(loc.scene_seed, "uv-heading", cond, label))
    return (bin_center(label, manifest.n_slices)
            + rng.uniform(-0.5, 0.5) * step * 0.98) % 360.0


def train_samples(manifest: DatasetManifest) -> list[Sample]:
    """Street-domain training samples: other-moment slices, clear-day only."""
    out = []
    for loc in manifest.train_locations:
        ref = loc.moment_seeds[0]
        for target_moment in loc.moment_seeds[1:]:
            for k in range(manifest.n_slices):
                out.append(Sample(
                    location_id=loc.location_id, target_source=STREET_SLICE,
                    condition=world.CLEAR_DAY.kind,
                    heading=bin_center(k, manifest.n_slices), label=k,
                    context_moment=ref, target_moment=target_moment))
    return out


def upper_bound_samples(manifest: DatasetManifest) -> list[Sample]:
    """Held-out street-slice targets (same construction as training)."""
    out = []
    for loc in manifest.test_locations:
        ref = loc.moment_seeds[0]
        for k in range(manifest.n_slices):
            out.append(Sample(
                location_id=loc.location_id, target_source=STREET_SLICE,
                condition=world.CLEAR_DAY.kind,
                heading=bin_center(k, manifest.n_slices), label=k,
                context_moment=ref, target_moment=loc.moment_seeds[1]))
    return out


def same_moment_samples(manifest: DatasetManifest) -> list[Sample]:
    """Degenerate oracle set: target slice taken from the context moment."""
    out = []
    for loc in manifest.test_locations:
        ref = loc.moment_seeds[0]
        for k in range(manifest.n_slices):
            out.append(Sample(
                location_id=loc.location_id, target_source=STREET_SLICE,
                condition=world.CLEAR_DAY.kind,
                heading=bin_center(k, manifest.n_slices), label=k,
                context_moment=ref, target_moment=ref))
    return out


def user_view_samples(manifest: DatasetManifest,
                      conditions: tuple[str, ...] | None = None) -> list[Sample]:
    """Balanced user-view test set: one heading per bin per condition."""
    out = []
    for loc in manifest.test_locations:
        ref = loc.moment_seeds[0]
        for cond in (conditions or loc.conditions):
            for k in range(manifest.n_slices):
                out.append(Sample(
                    location_id=loc.location_id, target_source=USER_VIEW,
                    condition=cond,
                    heading=_user_heading(manifest, loc, cond, k), label=k,
                    context_moment=ref, target_moment=loc.user_moment_seed))
    return out


class RenderCache:
    """Memoized per-location renders (scenes, panoramas, slices, user-views).

    Rendering is deterministic, so memoization is purely a speed concern;
    everything here can be rebuilt from the manifest at any time.
    """

    def __init__(self, manifest: DatasetManifest):
        self.manifest = manifest
        self._locations = {loc.location_id: loc for loc in manifest.locations}
        self._scenes: dict[int, world.SceneSpec] = {}
        self._slices: dict[tuple[int, int], list] = {}
        self._slice_masks: dict[tuple[int, int], list] = {}
        self._user_views: dict[tuple[int, str, int], tuple] = {}

    def location(self, location_id: int) -> LocationEntry:
        return self._locations[location_id]

    def scene(self, location_id: int) -> world.SceneSpec:
        if location_id not in self._scenes:
            loc = self._locations[location_id]
            self._scenes[location_id] = world.gen_scene(loc.scene_seed)
        return self._scenes[location_id]

    def context_slices(self, location_id: int, moment_seed: int) -> list:
        """Eight clear-day slices of the given moment's panorama, bin order."""
        key = (location_id, moment_seed)
        if key not in self._slices:
            from .geometry import slice_all
            scene = self.scene(location_id)
            moment = world.make_moment(moment_seed)
            pano, _ = world.render_equirect(scene, world.CLEAR_DAY, moment,
                                            self.manifest.pano_height)
            self._slices[key] = slice_all(pano, self.manifest.slice_plan(),
                                          self.manifest.slice_camera())
        return self._slices[key]

    def slice_masks(self, location_id: int, moment_seed: int) -> list:
        """Analytic road masks for each slice view (bin order)."""
        key = (location_id, moment_seed)
        if key not in self._slice_masks:
            scene = self.scene(location_id)
            moment = world.make_moment(moment_seed)
            cam = self.manifest.slice_camera()
            self._slice_masks[key] = [
                world.view_road_mask(scene, moment, yaw, cam)
                for yaw in self.manifest.slice_plan().yaw_centers]
        return self._slice_masks[key]

    def user_view(self, location_id: int, cond: str, label: int):
        """(image, mask, heading) for the balanced user-view sample."""
        key = (location_id, cond, label)
        if key not in self._user_views:
            loc = self._locations[location_id]
            scene = self.scene(location_id)
            heading = _user_heading(self.manifest, loc, cond, label)
            moment = world.make_moment(loc.user_moment_seed)
            img, mask, _ = world.render_userview(
                scene, world.CONDITIONS[cond], moment, heading,
                self.manifest.user_camera())
            self._user_views[key] = (img, mask, heading)
        return self._user_views[key]


def export_images(manifest: DatasetManifest, out_dir) -> int:
    """Write every location's reference panorama and mask as PPM/PGM files.

    Returns the number of files written. Intended for inspection; the
    harness renders lazily and never reads these back.
    """
    from .imaging import write_pgm, write_ppm
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    count = 0
    for loc in manifest.locations:
        scene = world.gen_scene(loc.scene_seed)
        moment = world.make_moment(loc.moment_seeds[0])
        pano, mask = world.render_equirect(scene, world.CLEAR_DAY, moment,
                                           manifest.pano_height)
        stem = f"loc{loc.location_id:05d}"
        write_ppm(out / f"{stem}_pano.ppm", pano.image)
        write_pgm(out / f"{stem}_mask.pgm", mask)
        count += 2
    return count
