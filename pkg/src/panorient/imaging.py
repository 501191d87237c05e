"""Image and tensor primitives shared by the whole pipeline.

An image is a float64 numpy array of shape (H, W, 3) with values in [0, 1];
a segmentation mask is a uint8 array of shape (H, W) with values
0=background, 1=road, 2=divider. Quantisation to 8 bit happens only at the
file boundary (binary PPM for images, binary PGM for masks). All operations
here are pure: inputs are never mutated.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MASK_BACKGROUND = 0
MASK_ROAD = 1
MASK_DIVIDER = 2

# PGM byte values for the three mask labels.
_MASK_TO_BYTE = np.array([0, 128, 255], dtype=np.uint8)


class FormatError(ValueError):
    """Malformed file content (bad magic, truncated payload, bad header)."""


@dataclass(frozen=True)
class ChannelStats:
    """Per-channel mean and population standard deviation."""

    mean: np.ndarray  # shape (3,)
    std: np.ndarray   # shape (3,)


def new_image(height: int, width: int, color=(0.0, 0.0, 0.0)) -> np.ndarray:
    """Constant-color image of the given size."""
    if height < 1 or width < 1:
        raise ValueError(f"image dimensions must be positive, got {height}x{width}")
    img = np.empty((height, width, 3), dtype=np.float64)
    img[:] = np.asarray(color, dtype=np.float64)
    return img


def validate_image(img: np.ndarray) -> np.ndarray:
    """Check the (H, W, 3) float-in-[0,1] contract; returns the array."""
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) image, got shape {img.shape}")
    if img.size and (img.min() < 0.0 or img.max() > 1.0):
        raise ValueError("image values must lie in [0, 1]")
    return img


def encode_ppm(img: np.ndarray) -> bytes:
    """Encode an image as binary PPM (P6, maxval 255).

    Channel values are quantised with round-half-up so the output is
    bit-exact across platforms (no banker's rounding).
    """
    img = validate_image(img)
    h, w = img.shape[:2]
    header = f"P6\n{w} {h}\n255\n".encode("ascii")
    q = np.floor(img * 255.0 + 0.5)
    payload = np.clip(q, 0, 255).astype(np.uint8).tobytes()
    return header + payload


def _read_token(buf: bytes, pos: int) -> tuple[bytes, int]:
    # Skips whitespace and '#' comments, returns (token, next position).
    n = len(buf)
    while pos < n:
        c = buf[pos:pos + 1]
        if c == b"#":
            while pos < n and buf[pos:pos + 1] != b"\n":
                pos += 1
        elif c.isspace():
            pos += 1
        else:
            break
    if pos >= n:
        raise FormatError(f"unexpected end of header at byte {pos}")
    start = pos
    while pos < n and not buf[pos:pos + 1].isspace():
        pos += 1
    return buf[start:pos], pos


def _decode_pnm(data: bytes, magic: bytes, channels: int) -> tuple[int, int, np.ndarray]:
    if data[:2] != magic:
        raise FormatError(
            f"bad magic {data[:2]!r} at byte 0, expected {magic.decode()!r}")
    pos = 2
    fields = []
    for _ in range(3):
        tok, pos = _read_token(data, pos)
        try:
            fields.append(int(tok))
        except ValueError:
            raise FormatError(f"non-numeric header field {tok!r} at byte {pos - len(tok)}")
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise FormatError(f"bad dimensions {width}x{height} in header (byte {pos})")
    if maxval != 255:
        raise FormatError(f"unsupported maxval {maxval} at byte {pos}, only 255")
    pos += 1  # single whitespace byte after maxval
    expected = width * height * channels
    payload = data[pos:pos + expected]
    if len(payload) < expected:
        raise FormatError(
            f"truncated payload at byte {pos + len(payload)}: "
            f"expected {expected} bytes, found {len(payload)}")
    arr = np.frombuffer(payload, dtype=np.uint8, count=expected)
    return height, width, arr


def decode_ppm(data: bytes) -> np.ndarray:
    """Decode a binary PPM (P6, maxval 255) into a float image in [0, 1]."""
    h, w, arr = _decode_pnm(data, b"P6", 3)
    return arr.reshape(h, w, 3).astype(np.float64) / 255.0


def encode_pgm(mask: np.ndarray) -> bytes:
    """Encode a segmentation mask as binary PGM; labels map to {0, 128, 255}."""
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise ValueError(f"expected (H, W) mask, got shape {mask.shape}")
    if mask.size and (mask.min() < 0 or mask.max() > 2):
        raise ValueError("mask labels must be in {0, 1, 2}")
    h, w = mask.shape
    header = f"P5\n{w} {h}\n255\n".encode("ascii")
    return header + _MASK_TO_BYTE[mask.astype(np.intp)].tobytes()


def decode_pgm(data: bytes) -> np.ndarray:
    """Decode a binary PGM mask with values {0, 128, 255} back to labels."""
    h, w, arr = _decode_pnm(data, b"P5", 1)
    out = np.empty(h * w, dtype=np.uint8)
    known = np.isin(arr, _MASK_TO_BYTE)
    if not known.all():
        bad = int(np.argmin(known))
        raise FormatError(f"unknown mask byte {arr[bad]} at payload index {bad}")
    out[arr == 0] = MASK_BACKGROUND
    out[arr == 128] = MASK_ROAD
    out[arr == 255] = MASK_DIVIDER
    return out.reshape(h, w)


def resize_bilinear(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resample to (out_h, out_w).

    Half-pixel-center convention: source coordinate = (i + 0.5) * scale - 0.5,
    edge-clamped. Matches bit-for-bit across implementations at double
    precision.
    """
    img = np.asarray(img, dtype=np.float64)
    if out_h < 1 or out_w < 1:
        raise ValueError(f"output dimensions must be positive, got {out_h}x{out_w}")
    in_h, in_w = img.shape[:2]
    if (out_h, out_w) == (in_h, in_w):
        return img.copy()

    sy = (np.arange(out_h, dtype=np.float64) + 0.5) * (in_h / out_h) - 0.5
    sx = (np.arange(out_w, dtype=np.float64) + 0.5) * (in_w / out_w) - 0.5
    sy = np.clip(sy, 0.0, in_h - 1.0)
    sx = np.clip(sx, 0.0, in_w - 1.0)

    y0 = np.floor(sy).astype(np.intp)
    x0 = np.floor(sx).astype(np.intp)
    y1 = np.minimum(y0 + 1, in_h - 1)
    x1 = np.minimum(x0 + 1, in_w - 1)
    wy = (sy - y0)[:, None, None]
    wx = (sx - x0)[None, :, None]

    top = img[y0][:, x0] * (1.0 - wx) + img[y0][:, x1] * wx
    bot = img[y1][:, x0] * (1.0 - wx) + img[y1][:, x1] * wx
    return top * (1.0 - wy) + bot * wy


def blit(dst: np.ndarray, src: np.ndarray, top: int, left: int) -> np.ndarray:
    """Copy src into dst at (top, left); returns a new image."""
    dst = np.asarray(dst)
    src = np.asarray(src)
    sh, sw = src.shape[:2]
    dh, dw = dst.shape[:2]
    if top < 0 or left < 0 or top + sh > dh or left + sw > dw:
        raise ValueError(
            f"source {sh}x{sw} at ({top}, {left}) exceeds destination {dh}x{dw}")
    out = dst.copy()
    out[top:top + sh, left:left + sw] = src
    return out


def channel_stats(imgs: list[np.ndarray]) -> ChannelStats:
    """Per-channel mean/std pooled over all pixels of all images.

    Population std (divide by N). Images may have different sizes.
    """
    if not imgs:
        raise ValueError("need at least one image")
    count = 0
    total = np.zeros(3, dtype=np.float64)
    total_sq = np.zeros(3, dtype=np.float64)
    for img in imgs:
        a = np.asarray(img, dtype=np.float64).reshape(-1, 3)
        count += a.shape[0]
        total += a.sum(axis=0)
        total_sq += (a * a).sum(axis=0)
    mean = total / count
    var = np.maximum(total_sq / count - mean * mean, 0.0)
    return ChannelStats(mean=mean, std=np.sqrt(var))


def write_ppm(path, img: np.ndarray) -> None:
    with open(path, "wb") as f:
        f.write(encode_ppm(img))


def read_ppm(path) -> np.ndarray:
    with open(path, "rb") as f:
        return decode_ppm(f.read())


def write_pgm(path, mask: np.ndarray) -> None:
    with open(path, "wb") as f:
        f.write(encode_pgm(mask))


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as f:
        return decode_pgm(f.read())
