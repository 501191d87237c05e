"""Model-input composition: one target plus eight context images.

Four layouts are supported. D1 and D2 concatenate cells into one square
frame for single-image models; D3 and D4 stack whole images along a frame
axis for video-style models.

  D1: 3x3 cell grid, contexts in angular order around the target at the
      center cell (row 1, col 1).
  D2: 4x4 cell grid, context rows 0 and 2 ([c0..c3], [c4..c7]) alternating
      with rows of four target copies, so every context sits next to a
      target copy.
  D3: frames [target, c0, .., c7].
  D4: frames [target, c0, target, c1, .., target, c7] (target first).

Placement is pixel-exact; inputs are bilinearly resized to the cell size
when needed, and decompose inverts the placement exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .imaging import FormatError, resize_bilinear

FORMATS = ("d1", "d2", "d3", "d4")

PAPER_CELL = {"d1": 128, "d2": 96, "d3": 224, "d4": 224}
TOY_CELL = {"d1": 32, "d2": 24, "d3": 64, "d4": 64}


@dataclass(frozen=True)
class CellSlot:
    """Destination of one source image inside the composed tensor."""

    role: str   # "target" or "context_<k>"
    frame: int
    row: int    # cell row within the frame (0 for stacked formats)
    col: int


@dataclass(frozen=True)
class FormatSpec:
    format: str
    cell: int
    frames: int = field(init=False)
    grid: int = field(init=False)       # cells per frame side (1 for stacked)
    frame_h: int = field(init=False)
    frame_w: int = field(init=False)

    def __post_init__(self):
        fmt = self.format.lower()
        if fmt not in FORMATS:
            raise ValueError(f"unknown format {self.format!r}, expected one of {FORMATS}")
        if self.cell < 1:
            raise ValueError("cell size must be positive")
        object.__setattr__(self, "format", fmt)
        frames, grid = {"d1": (1, 3), "d2": (1, 4), "d3": (9, 1), "d4": (16, 1)}[fmt]
        object.__setattr__(self, "frames", frames)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "frame_h", grid * self.cell)
        object.__setattr__(self, "frame_w", grid * self.cell)

    @property
    def tensor_shape(self) -> tuple[int, int, int, int]:
        return (self.frames, self.frame_h, self.frame_w, 3)

    @classmethod
    def paper_faithful(cls, fmt: str) -> "FormatSpec":
        return cls(fmt, PAPER_CELL[fmt.lower()])

    @classmethod
    def toy(cls, fmt: str) -> "FormatSpec":
        return cls(fmt, TOY_CELL[fmt.lower()])


@dataclass(frozen=True)
class ComposedInput:
    spec: FormatSpec
    tensor: np.ndarray                  # (T, H, W, 3)
    provenance: tuple[CellSlot, ...]


def layout_table(spec: FormatSpec) -> tuple[CellSlot, ...]:
    """Stable slot-to-role mapping for a format."""
    fmt = spec.format
    if fmt == "d1":
        roles = ["context_0", "context_1", "context_2",
                 "context_3", "target", "context_4",
                 "context_5", "context_6", "context_7"]
        return tuple(CellSlot(role, 0, i // 3, i % 3) for i, role in enumerate(roles))
    if fmt == "d2":
        rows = [[f"context_{k}" for k in range(4)],
                ["target"] * 4,
                [f"context_{k}" for k in range(4, 8)],
                ["target"] * 4]
        return tuple(CellSlot(role, 0, r, c)
                     for r, row in enumerate(rows) for c, role in enumerate(row))
    if fmt == "d3":
        roles = ["target"] + [f"context_{k}" for k in range(8)]
    else:  # d4
        roles = []
        for k in range(8):
            roles += ["target", f"context_{k}"]
    return tuple(CellSlot(role, f, 0, 0) for f, role in enumerate(roles))


def _to_cell(img: np.ndarray, cell: int) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) image, got shape {img.shape}")
    if img.shape[:2] == (cell, cell):
        return img
    return resize_bilinear(img, cell, cell)


def compose(spec: FormatSpec, target: np.ndarray,
            contexts: list[np.ndarray]) -> ComposedInput:
    """Place the target and its eight ordered context images into a tensor."""
    if len(contexts) != 8:
        raise ValueError(f"need exactly 8 context images, got {len(contexts)}")
    cell = spec.cell
    sources = {"target": _to_cell(target, cell)}
    for k, ctx in enumerate(contexts):
        sources[f"context_{k}"] = _to_cell(ctx, cell)

    tensor = np.zeros(spec.tensor_shape, dtype=np.float64)
    slots = layout_table(spec)
    for slot in slots:
        r0, c0 = slot.row * cell, slot.col * cell
        tensor[slot.frame, r0:r0 + cell, c0:c0 + cell] = sources[slot.role]
    return ComposedInput(spec=spec, tensor=tensor, provenance=slots)


def decompose(ci: ComposedInput) -> tuple[np.ndarray, list[np.ndarray]]:
    """Exact inverse of compose's placement (no resampling).

    Formats with duplicated targets are checked for copy consistency; a
    mismatch means the tensor was not produced by compose.
    """
    cell = ci.spec.cell
    roles_seen = [slot.role for slot in ci.provenance]
    expected = [slot.role for slot in layout_table(ci.spec)]
    if roles_seen != expected:
        raise FormatError("provenance does not match the format's layout table")

    target = None
    contexts: dict[int, np.ndarray] = {}
    for slot in ci.provenance:
        r0, c0 = slot.row * cell, slot.col * cell
        patch = ci.tensor[slot.frame, r0:r0 + cell, c0:c0 + cell]
        if slot.role == "target":
            if target is None:
                target = patch
            elif not np.array_equal(target, patch):
                raise FormatError("target copies differ; tensor is not a valid composition")
        else:
            contexts[int(slot.role.split("_")[1])] = patch
    return target.copy(), [contexts[k].copy() for k in range(8)]


def save_composed(ci: ComposedInput, path) -> None:
    """Write the tensor as flat little-endian float32 plus a sidecar header.

    The sidecar (path + ".hdr") holds one line: "FORMAT cell T H W".
    Layout is frame-major then row-major, matching tensor memory order.
    """
    t, h, w, _ = ci.spec.tensor_shape
    with open(path, "wb") as f:
        f.write(np.ascontiguousarray(ci.tensor, dtype="<f4").tobytes())
    with open(str(path) + ".hdr", "w", encoding="ascii") as f:
        f.write(f"{ci.spec.format.upper()} {ci.spec.cell} {t} {h} {w}\n")


def load_composed(path) -> ComposedInput:
    """Read a tensor written by save_composed."""
    with open(str(path) + ".hdr", "r", encoding="ascii") as f:
        fields = f.readline().split()
    if len(fields) != 5:
        raise FormatError(f"bad sidecar header: expected 5 fields, got {len(fields)}")
    fmt, cell, t, h, w = fields[0].lower(), *(int(x) for x in fields[1:])
    spec = FormatSpec(fmt, cell)
    if spec.tensor_shape != (t, h, w, 3):
        raise FormatError(
            f"header dims {t}x{h}x{w} do not match format {fmt} cell {cell}")
    raw = np.fromfile(path, dtype="<f4")
    expected = t * h * w * 3
    if raw.size != expected:
        raise FormatError(f"expected {expected} float32 values, found {raw.size}")
    tensor = raw.reshape(t, h, w, 3).astype(np.float64)
    return ComposedInput(spec=spec, tensor=tensor, provenance=layout_table(spec))
