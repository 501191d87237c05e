"""panorient: orientation detection from panorama context slices.

A desk-scale laboratory for camera-based orientation detection: slice
equirectangular panoramas into angular context views, compose target+context
model inputs, train a compact transformer classifier on synthetic street
scenes, and measure how photometric normalization and road overlays close
the gap between the street-view and user-view domains.
"""

from .composer import ComposedInput, FormatSpec, compose, decompose, layout_table
from .dataset import DatasetManifest, Sample, build_dataset, load_manifest
from .experiment import (ExperimentConfig, ResultsRow, ncc_baseline,
                         run_experiment, run_matrix, write_results)
from .geometry import (CameraModel, EquirectPanorama, SlicePlan,
                       azimuth_to_label, rotate_equirect, slice_all,
                       slice_panorama)
from .imaging import (ChannelStats, FormatError, channel_stats, decode_ppm,
                      encode_ppm, resize_bilinear)
from .model import ModelConfig, cross_entropy, forward, init_params, predict
from .optim import AdamState, adam_step
from .transforms import (StyleReference, build_style_reference, road_overlay,
                         style_normalize)
from .world import (CLEAR_DAY, CLEAR_NIGHT, RAINY_DAY, Condition, Moment,
                    SceneSpec, apply_condition, gen_scene, make_moment,
                    render_equirect, render_userview)

__version__ = "0.1.0"
