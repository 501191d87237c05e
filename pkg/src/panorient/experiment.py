"""Training/evaluation driver, NCC oracle and the experiment matrix.

The experiment protocol mirrors the domain-gap study: models train only on
clear-day street-slice samples, then are scored on held-out street slices
(upper bound) and on user-view photos under day/night/rain conditions.
Style normalization is an inference-time transform of user-view targets;
the road overlay is part of the input composition and therefore applies to
every target in both training and evaluation.

Reported wall times go to the log stream only: result rows carry a fixed
0.0 seconds so that result CSVs are byte-reproducible from seeds.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, replace

import numpy as np

from . import dataset as ds
from . import model as nn
from . import world
from .composer import FormatSpec, compose, layout_table
from .dataset import STREET_SLICE, DatasetManifest, RenderCache, Sample
from .model import ModelConfig
from .optim import AdamState, adam_step, collect_grads, zero_grads
from .rng import SplitMix64, derive_seed
from .transforms import StyleReference, build_style_reference, road_overlay, style_normalize

log = logging.getLogger(__name__)

N_BINS = 8
STYLE_REFERENCE_LOCATIONS = 16


@dataclass(frozen=True)
class ExperimentConfig:
    format: str = "d1"
    cell: int = ds.DEFAULT_CELL
    model: ModelConfig | None = None     # derived from format/cell when None
    use_style: bool = False
    use_seg: bool = False
    epochs: int = 20
    batch_size: int = 32
    learning_rate: float = 3e-4
    seeds: tuple[int, ...] = (0,)
    augment_rotations: bool = True
    max_train_locations: int | None = None
    max_test_locations: int | None = None

    def format_spec(self) -> FormatSpec:
        return FormatSpec(self.format, self.cell)

    def model_config(self) -> ModelConfig:
        if self.model is not None:
            return self.model
        return nn.config_for_format(self.format_spec())

    @property
    def seed(self) -> int:
        return self.seeds[0]


@dataclass(frozen=True)
class ResultsRow:
    experiment_id: str
    format: str
    model: str
    style: bool
    seg: bool
    upper_bound_acc: float
    full_acc: float
    day_acc: float
    night_acc: float
    rain_acc: float
    n_test: int
    seconds: float = 0.0


def config_to_dict(cfg: ExperimentConfig) -> dict:
    m = cfg.model_config()
    return {
        "format": cfg.format,
        "cell": cfg.cell,
        "model": {
            "variant": m.variant, "patch": m.patch, "embed_dim": m.embed_dim,
            "depth": m.depth, "heads": m.heads, "mlp_ratio": m.mlp_ratio,
            "n_classes": m.n_classes,
        },
        "use_style": cfg.use_style,
        "use_seg": cfg.use_seg,
        "epochs": cfg.epochs,
        "batch_size": cfg.batch_size,
        "learning_rate": cfg.learning_rate,
        "seeds": list(cfg.seeds),
        "augment_rotations": cfg.augment_rotations,
        "max_train_locations": cfg.max_train_locations,
        "max_test_locations": cfg.max_test_locations,
    }


def config_from_dict(doc: dict) -> ExperimentConfig:
    cfg = ExperimentConfig(
        format=doc.get("format", "d1"),
        cell=int(doc.get("cell", ds.DEFAULT_CELL)),
        use_style=bool(doc.get("use_style", False)),
        use_seg=bool(doc.get("use_seg", False)),
        epochs=int(doc.get("epochs", 20)),
        batch_size=int(doc.get("batch_size", 32)),
        learning_rate=float(doc.get("learning_rate", 3e-4)),
        seeds=tuple(doc.get("seeds", [0])),
        augment_rotations=bool(doc.get("augment_rotations", True)),
        max_train_locations=doc.get("max_train_locations"),
        max_test_locations=doc.get("max_test_locations"),
    )
    if "model" in doc:
        spec = cfg.format_spec()
        m = doc["model"]
        cfg = replace(cfg, model=nn.config_for_format(
            spec,
            variant=m.get("variant"),
            patch=m.get("patch"),
            embed_dim=int(m.get("embed_dim", 64)),
            depth=int(m.get("depth", 4)),
            heads=int(m.get("heads", 4)),
            mlp_ratio=int(m.get("mlp_ratio", 4)),
            n_classes=int(m.get("n_classes", 8)),
        ))
    return cfg


# -- sample materialization -------------------------------------------------


def build_style_ref_from_train(manifest: DatasetManifest,
                               cache: RenderCache) -> StyleReference:
    """Pool clear-day slice statistics over the first train locations."""
    imgs = []
    for loc in manifest.train_locations[:STYLE_REFERENCE_LOCATIONS]:
        imgs.extend(cache.context_slices(loc.location_id, loc.moment_seeds[0]))
    return build_style_reference(imgs)


def target_image(sample: Sample, manifest: DatasetManifest, cache: RenderCache,
                 use_style: bool, use_seg: bool,
                 style_ref: StyleReference | None):
    """Render the sample's target with the configured transforms applied."""
    if sample.target_source == STREET_SLICE:
        img = cache.context_slices(sample.location_id, sample.target_moment)[sample.label]
        mask = cache.slice_masks(sample.location_id, sample.target_moment)[sample.label]
    else:
        img, mask, _ = cache.user_view(sample.location_id, sample.condition,
                                       sample.label)
        if use_style:
            if style_ref is None:
                raise ValueError("style transform requested without a reference")
            img = style_normalize(img, style_ref)
    if use_seg:
        img = road_overlay(img, mask)
    return img


def make_sample_input(sample: Sample, cfg: ExperimentConfig,
                      manifest: DatasetManifest, cache: RenderCache,
                      style_ref: StyleReference | None = None):
    """(ComposedInput, label) for one sample under the experiment config.

    Contexts always come from the location's reference moment, clear-day.
    Style normalization touches user-view targets only (it is an
    inference-time fix for the user domain); the road overlay applies to
    every target.
    """
    if cfg.use_style and style_ref is None:
        style_ref = build_style_ref_from_train(manifest, cache)
    contexts = cache.context_slices(sample.location_id, sample.context_moment)
    target = target_image(sample, manifest, cache, cfg.use_style, cfg.use_seg,
                          style_ref)
    return compose(cfg.format_spec(), target, contexts), sample.label


# -- NCC oracle ---------------------------------------------------------------


def _luma(img: np.ndarray) -> np.ndarray:
    return 0.299 * img[..., 0] + 0.587 * img[..., 1] + 0.114 * img[..., 2]


def ncc_baseline(target: np.ndarray, contexts: list[np.ndarray]) -> int:
    """Pick the context with the highest Pearson correlation to the target.

    Grayscale (luma) correlation on flattened pixels; undefined correlations
    (zero variance on either side) rank lowest, and exact ties resolve to the
    lowest bin index.
    """
    t = _luma(np.asarray(target, dtype=np.float64)).ravel()
    t = t - t.mean()
    t_norm = np.sqrt((t * t).sum())
    scores = np.full(len(contexts), -np.inf)
    for k, ctx in enumerate(contexts):
        c = _luma(np.asarray(ctx, dtype=np.float64)).ravel()
        c = c - c.mean()
        c_norm = np.sqrt((c * c).sum())
        if t_norm > 0.0 and c_norm > 0.0:
            scores[k] = float((t * c).sum() / (t_norm * c_norm))
    if not np.isfinite(scores).any():
        return 0
    return int(np.argmax(scores))


# -- composed-batch assembly --------------------------------------------------


class _TrainSet:
    """Pre-rendered cells for fast batch assembly with rotation augmentation.

    Rotating the whole scene by k*45 degrees maps to: rotate the context
    list (new[j] = old[(j - k) % 8]), keep the target image, shift the label
    by +k. Each epoch draws a fresh deterministic rotation per sample.
    """

    def __init__(self, samples: list[Sample], cfg: ExperimentConfig,
                 manifest: DatasetManifest, cache: RenderCache,
                 style_ref: StyleReference | None):
        self.cfg = cfg
        self.spec = cfg.format_spec()
        self.samples = samples
        self.targets = []
        self.context_sets = []
        self.labels = np.array([s.label for s in samples], dtype=np.intp)
        for s in samples:
            self.targets.append(np.ascontiguousarray(
                target_image(s, manifest, cache, cfg.use_style, cfg.use_seg,
                             style_ref)))
            self.context_sets.append(cache.context_slices(
                s.location_id, s.context_moment))

    def __len__(self):
        return len(self.samples)

    def batch(self, indices: np.ndarray, rotations: np.ndarray):
        spec = self.spec
        n = len(indices)
        out = np.zeros((n, *spec.tensor_shape))
        labels = np.empty(n, dtype=np.intp)
        cell = spec.cell
        slots = layout_table(spec)
        for row, (idx, rot) in enumerate(zip(indices, rotations)):
            ctxs = self.context_sets[idx]
            labels[row] = (self.labels[idx] + rot) % N_BINS
            for slot in slots:
                if slot.role == "target":
                    src = self.targets[idx]
                else:
                    j = int(slot.role.split("_")[1])
                    src = ctxs[(j - rot) % N_BINS]
                r0, c0 = slot.row * cell, slot.col * cell
                out[row, slot.frame, r0:r0 + cell, c0:c0 + cell] = src
        return out, labels


def train_model(cfg: ExperimentConfig, manifest: DatasetManifest,
                cache: RenderCache | None = None,
                seed: int | None = None,
                style_ref: StyleReference | None = None,
                loss_hook=None):
    """Train a model per the config; returns (model_config, params).

    Deterministic given (cfg, manifest, seed): init, shuffles and rotation
    draws all derive from the seed via splitmix64.
    """
    cache = cache or RenderCache(manifest)
    seed = cfg.seed if seed is None else seed
    samples = ds.train_samples(manifest)
    if cfg.max_train_locations is not None:
        keep = {loc.location_id
                for loc in manifest.train_locations[:cfg.max_train_locations]}
        samples = [s for s in samples if s.location_id in keep]
    if not samples:
        raise ValueError("no training samples; check the manifest split")

    train_set = _TrainSet(samples, cfg, manifest, cache, style_ref)
    mcfg = cfg.model_config()
    params = nn.init_params(mcfg, derive_seed(seed, "model"))
    state = AdamState(lr=cfg.learning_rate)

    n = len(train_set)
    order = np.arange(n)
    t0 = time.perf_counter()
    for epoch in range(cfg.epochs):
        shuffle_rng = SplitMix64(derive_seed(seed, "shuffle", epoch))
        idx_list = list(range(n))
        shuffle_rng.shuffle(idx_list)
        order = np.array(idx_list, dtype=np.intp)
        if cfg.augment_rotations:
            rot_bits = SplitMix64(derive_seed(seed, "rotation", epoch))
            rotations = np.array([rot_bits.randint(N_BINS) for _ in range(n)],
                                 dtype=np.intp)
        else:
            rotations = np.zeros(n, dtype=np.intp)

        epoch_loss = 0.0
        for start in range(0, n, cfg.batch_size):
            batch_idx = order[start:start + cfg.batch_size]
            x, y = train_set.batch(batch_idx, rotations[batch_idx])
            logits = nn.forward(mcfg, params, x)
            loss = nn.cross_entropy(logits, y)
            zero_grads(params)
            loss.backward()
            adam_step(params, collect_grads(params), state)
            epoch_loss += loss.item() * len(batch_idx)
            if loss_hook is not None:
                loss_hook(loss.item())
        log.debug("epoch %d/%d mean loss %.4f", epoch + 1, cfg.epochs,
                  epoch_loss / n)
    log.info("trained %s (%d samples x %d epochs) in %.1fs",
             cfg.format, n, cfg.epochs, time.perf_counter() - t0)
    return mcfg, params


def evaluate_samples(samples: list[Sample], cfg: ExperimentConfig,
                     mcfg: ModelConfig, params, manifest: DatasetManifest,
                     cache: RenderCache,
                     style_ref: StyleReference | None = None,
                     batch_size: int = 64) -> float:
    """Exact-bin accuracy of the model over a sample list."""
    if not samples:
        return float("nan")
    correct = 0
    for start in range(0, len(samples), batch_size):
        chunk = samples[start:start + batch_size]
        xs = np.stack([
            make_sample_input(s, cfg, manifest, cache, style_ref)[0].tensor
            for s in chunk])
        preds = nn.predict_batch(mcfg, params, xs)
        correct += int(np.sum(preds == np.array([s.label for s in chunk])))
    return correct / len(samples)


def _limit_test(manifest: DatasetManifest, cfg: ExperimentConfig,
                samples: list[Sample]) -> list[Sample]:
    if cfg.max_test_locations is None:
        return samples
    keep = {loc.location_id
            for loc in manifest.test_locations[:cfg.max_test_locations]}
    return [s for s in samples if s.location_id in keep]


def run_experiment(cfg: ExperimentConfig, manifest: DatasetManifest,
                   cache: RenderCache | None = None,
                   experiment_id: str | None = None,
                   trained=None) -> ResultsRow:
    """Train (unless given a trained model) and score one configuration.

    Style normalization never enters training: the training domain is
    already clear-day street-view, so the style row reuses the base model,
    exactly as an inference-time transform should.
    """
    cache = cache or RenderCache(manifest)
    style_ref = build_style_ref_from_train(manifest, cache) if cfg.use_style else None
    if trained is None:
        train_cfg = replace(cfg, use_style=False)
        mcfg, params = train_model(train_cfg, manifest, cache)
    else:
        mcfg, params = trained

    upper = _limit_test(manifest, cfg, ds.upper_bound_samples(manifest))
    users = _limit_test(manifest, cfg, ds.user_view_samples(manifest))
    upper_acc = evaluate_samples(upper, cfg, mcfg, params, manifest, cache,
                                 style_ref)
    by_cond: dict[str, list[Sample]] = {}
    for s in users:
        by_cond.setdefault(s.condition, []).append(s)
    cond_acc = {cond: evaluate_samples(ss, cfg, mcfg, params, manifest, cache,
                                       style_ref)
                for cond, ss in by_cond.items()}
    n_users = len(users)
    full_acc = sum(cond_acc[c] * len(by_cond[c]) for c in by_cond) / n_users

    return ResultsRow(
        experiment_id=experiment_id or _default_id(cfg),
        format=cfg.format,
        model=model_tag(mcfg),
        style=cfg.use_style,
        seg=cfg.use_seg,
        upper_bound_acc=upper_acc,
        full_acc=full_acc,
        day_acc=cond_acc.get(world.CLEAR_DAY.kind, float("nan")),
        night_acc=cond_acc.get(world.CLEAR_NIGHT.kind, float("nan")),
        rain_acc=cond_acc.get(world.RAINY_DAY.kind, float("nan")),
        n_test=n_users,
    )


def model_tag(mcfg: ModelConfig) -> str:
    return f"{mcfg.variant}_p{mcfg.patch}_e{mcfg.embed_dim}d{mcfg.depth}"


def _default_id(cfg: ExperimentConfig) -> str:
    code = {(False, False): "a_base", (True, False): "b_style",
            (False, True): "c_seg", (True, True): "d_seg_style"}[
        (cfg.use_style, cfg.use_seg)]
    return f"{cfg.format}_seed{cfg.seed}_{code}"


def run_matrix(manifest: DatasetManifest, base_cfg: ExperimentConfig,
               formats: tuple[str, ...] = ("d1",),
               seeds: tuple[int, ...] | None = None,
               cache: RenderCache | None = None) -> list[ResultsRow]:
    """Transform grid per format and seed: base / style / seg / seg+style.

    Each (format, seed) trains two models (without and with the road
    overlay); the style rows reuse them, since style transfer is
    inference-only.
    """
    cache = cache or RenderCache(manifest)
    seeds = seeds or base_cfg.seeds
    rows = []
    for fmt in formats:
        for seed in seeds:
            fmt_cfg = replace(base_cfg, format=fmt, cell=_cell_for(fmt, base_cfg),
                              seeds=(seed,), model=None)
            for use_seg in (False, True):
                cfg = replace(fmt_cfg, use_seg=use_seg, use_style=False)
                trained = train_model(cfg, manifest, cache)
                for use_style in (False, True):
                    run_cfg = replace(cfg, use_style=use_style)
                    t0 = time.perf_counter()
                    row = run_experiment(run_cfg, manifest, cache,
                                         trained=trained)
                    log.info("%s: upper %.3f full %.3f day %.3f night %.3f "
                             "rain %.3f (%.1fs)", row.experiment_id,
                             row.upper_bound_acc, row.full_acc, row.day_acc,
                             row.night_acc, row.rain_acc,
                             time.perf_counter() - t0)
                    rows.append(row)
    return rows


def _cell_for(fmt: str, base_cfg: ExperimentConfig) -> int:
    from .composer import TOY_CELL
    if fmt == base_cfg.format:
        return base_cfg.cell
    return TOY_CELL[fmt]


def baseline_rows(manifest: DatasetManifest,
                  cache: RenderCache | None = None) -> list[ResultsRow]:
    """NCC oracle scored over the same test sets as the learned models."""
    cache = cache or RenderCache(manifest)
    cfg = ExperimentConfig()

    def score(samples: list[Sample]) -> float:
        if not samples:
            return float("nan")
        correct = 0
        for s in samples:
            contexts = cache.context_slices(s.location_id, s.context_moment)
            target = target_image(s, manifest, cache, False, False, None)
            correct += int(ncc_baseline(target, contexts) == s.label)
        return correct / len(samples)

    users = ds.user_view_samples(manifest)
    by_cond: dict[str, list[Sample]] = {}
    for s in users:
        by_cond.setdefault(s.condition, []).append(s)
    cond_acc = {c: score(ss) for c, ss in by_cond.items()}
    full = sum(cond_acc[c] * len(by_cond[c]) for c in by_cond) / len(users)
    return [ResultsRow(
        experiment_id="ncc_baseline",
        format="-", model="ncc", style=False, seg=False,
        upper_bound_acc=score(ds.upper_bound_samples(manifest)),
        full_acc=full,
        day_acc=cond_acc.get(world.CLEAR_DAY.kind, float("nan")),
        night_acc=cond_acc.get(world.CLEAR_NIGHT.kind, float("nan")),
        rain_acc=cond_acc.get(world.RAINY_DAY.kind, float("nan")),
        n_test=len(users),
    )]


def write_results(rows: list[ResultsRow], path) -> None:
    """Deterministic CSV: fixed header, 4-decimal accuracies, sorted rows."""
    if not rows:
        raise ValueError("no result rows to write")
    header = ("experiment_id,format,model,style,seg,upper_bound_acc,full_acc,"
              "day_acc,night_acc,rain_acc,n_test,seconds")
    lines = [header]
    for row in sorted(rows, key=lambda r: r.experiment_id):
        lines.append(",".join([
            row.experiment_id, row.format, row.model,
            "on" if row.style else "off", "on" if row.seg else "off",
            f"{row.upper_bound_acc:.4f}", f"{row.full_acc:.4f}",
            f"{row.day_acc:.4f}", f"{row.night_acc:.4f}", f"{row.rain_acc:.4f}",
            str(row.n_test), f"{row.seconds:.3f}",
        ]))
    with open(path, "w", encoding="ascii") as f:
        f.write("\n".join(lines) + "\n")
