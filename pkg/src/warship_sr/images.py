"""Image I/O, color conversion, and Keys bicubic resampling.

Images are numpy arrays of [0,1] samples: (h, w) for grayscale or Y,
(h, w, 3) for RGB, row-major. Every operation here returns samples
clamped back into [0,1]; ops that can overshoot (resampling, color
conversion) clamp at their boundary.

File formats are 8-bit PNG (via Pillow) and plain-text PGM/PPM (P2 and
P3, handled directly) for bit-exact fixtures.
"""

from __future__ import annotations

import numpy as np
from PIL import Image

from .tensor_ops import ConfigurationError


class ImageError(ValueError):
    pass


# BT.601 studio-swing coefficient rows for R, G, B in [0,1]; offsets
# 16/128/128 out of 255.
_YCBCR_FWD = np.array(
    [
        [65.481, 128.553, 24.966],
        [-37.797, -74.203, 112.0],
        [112.0, -93.786, -18.214],
    ]
)
_YCBCR_OFF = np.array([16.0, 128.0, 128.0])


def load_image(path) -> np.ndarray:
    """Read PNG/PGM/PPM into a [0,1] float array, /255 mapping."""
    spath = str(path)
    lower = spath.lower()
    if lower.endswith((".pgm", ".ppm")):
        return _load_pnm(spath)
    if not lower.endswith(".png"):
        raise ImageError("unsupported image format: %s" % spath)
    try:
        with Image.open(spath) as im:
            if im.mode in ("I", "I;16", "I;16B", "I;16L", "I;16N", "F"):
                raise ImageError("only 8-bit images are supported: %s" % spath)
            if im.mode == "P":
                im = im.convert("RGB")
            if im.mode not in ("L", "RGB"):
                raise ImageError(
                    "unsupported PNG mode %r (need 8-bit gray or RGB): %s"
                    % (im.mode, spath)
                )
            arr = np.asarray(im, dtype=np.float64)
    except (OSError, SyntaxError) as exc:
        raise ImageError("cannot read %s: %s" % (spath, exc)) from exc
    return arr / 255.0


def save_image(img: np.ndarray, path) -> None:
    """Write 8-bit PNG/PGM/PPM; quantizes by round-half-away-from-zero."""
    if img.ndim not in (2, 3) or (img.ndim == 3 and img.shape[2] != 3):
        raise ImageError("image must be (h, w) or (h, w, 3)")
    q = quantize(img)
    spath = str(path)
    lower = spath.lower()
    if lower.endswith((".pgm", ".ppm")):
        _save_pnm(q, spath)
        return
    if not lower.endswith(".png"):
        raise ImageError("unsupported image format: %s" % spath)
    Image.fromarray(q, mode="L" if q.ndim == 2 else "RGB").save(spath, format="PNG")


def quantize(img: np.ndarray) -> np.ndarray:
    """[0,1] floats to uint8, rounding halves away from zero."""
    return np.floor(np.clip(img, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def _load_pnm(path: str) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    tokens = []
    i, n = 0, len(data)
    while i < n:
        ch = data[i:i + 1]
        if ch == b"#":
            while i < n and data[i:i + 1] != b"\n":
                i += 1
        elif ch.isspace():
            i += 1
        else:
            j = i
            while j < n and not data[j:j + 1].isspace() and data[j:j + 1] != b"#":
                j += 1
            tokens.append(data[i:j])
            i = j
    if not tokens:
        raise ImageError("empty PNM file: %s" % path)
    magic = tokens[0]
    if magic not in (b"P2", b"P3"):
        raise ImageError("unsupported PNM magic %r (plain P2/P3 only): %s" % (magic, path))
    channels = 1 if magic == b"P2" else 3
    try:
        w, h, maxval = (int(tokens[k]) for k in (1, 2, 3))
        values = [int(t) for t in tokens[4:]]
    except (ValueError, IndexError) as exc:
        raise ImageError("malformed PNM header: %s" % path) from exc
    if maxval != 255:
        raise ImageError("only 8-bit images are supported (maxval %d): %s" % (maxval, path))
    need = w * h * channels
    if len(values) < need:
        raise ImageError(
            "truncated PNM (%d of %d samples): %s" % (len(values), need, path)
        )
    arr = np.array(values[:need], dtype=np.float64)
    if np.any(arr < 0) or np.any(arr > 255):
        raise ImageError("PNM sample out of range: %s" % path)
    shape = (h, w) if channels == 1 else (h, w, 3)
    return arr.reshape(shape) / 255.0


def _save_pnm(q: np.ndarray, path: str) -> None:
    gray = q.ndim == 2
    if path.lower().endswith(".pgm") != gray:
        raise ImageError("channel count does not match extension: %s" % path)
    h, w = q.shape[:2]
    lines = ["P2" if gray else "P3", "%d %d" % (w, h), "255"]
    flat = q.reshape(h, -1)
    for row in flat:
        lines.append(" ".join(str(int(v)) for v in row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def rgb_to_ycbcr(img: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """BT.601 studio-swing planes, each in [0,1]."""
    if img.ndim != 3 or img.shape[2] != 3:
        raise ImageError("rgb_to_ycbcr needs a 3-channel image")
    planes = (img @ _YCBCR_FWD.T + _YCBCR_OFF) / 255.0
    planes = np.clip(planes, 0.0, 1.0)
    return planes[..., 0], planes[..., 1], planes[..., 2]


def ycbcr_to_rgb(y: np.ndarray, cb: np.ndarray, cr: np.ndarray) -> np.ndarray:
    if y.shape != cb.shape or y.shape != cr.shape:
        raise ImageError("YCbCr planes must share a shape")
    ycc = np.stack([y, cb, cr], axis=-1) * 255.0 - _YCBCR_OFF
    rgb = ycc @ np.linalg.inv(_YCBCR_FWD).T
    return np.clip(rgb, 0.0, 1.0)


def keys_cubic(x: np.ndarray) -> np.ndarray:
    """The Keys convolution kernel with a = -0.5; support (-2, 2)."""
    ax = np.abs(x)
    ax2 = ax * ax
    ax3 = ax2 * ax
    near = 1.5 * ax3 - 2.5 * ax2 + 1.0
    far = -0.5 * ax3 + 2.5 * ax2 - 4.0 * ax + 2.0
    return np.where(ax <= 1.0, near, np.where(ax < 2.0, far, 0.0))


def _axis_weights(in_size: int, out_size: int, antialias: bool):
    """Tap indices and normalized weights for one axis.

    Pixel centers align by src = (dst + 0.5) * in/out - 0.5. On
    antialiased downscale the kernel stretches by the scale ratio and
    is renormalized, acting as a low-pass filter. Border taps clamp to
    the edge sample.
    """
    ratio = in_size / out_size
    kscale = 1.0 / ratio if (antialias and ratio > 1.0) else 1.0
    radius = 2.0 / kscale
    src = (np.arange(out_size) + 0.5) * ratio - 0.5
    left = np.ceil(src - radius).astype(np.int64)
    taps = int(np.floor(radius * 2.0)) + 2
    offsets = np.arange(taps)
    idx = left[:, None] + offsets[None, :]
    w = keys_cubic((src[:, None] - idx) * kscale) * kscale
    w /= np.sum(w, axis=1, keepdims=True)
    idx = np.clip(idx, 0, in_size - 1)
    return idx, w


def _resize_axis0(img: np.ndarray, out_size: int, antialias: bool) -> np.ndarray:
    idx, w = _axis_weights(img.shape[0], out_size, antialias)
    out = np.zeros((out_size,) + img.shape[1:], dtype=np.float64)
    for t in range(idx.shape[1]):
        wt = w[:, t].reshape((-1,) + (1,) * (img.ndim - 1))
        out += wt * img[idx[:, t]]
    return out


def resize_bicubic(
    img: np.ndarray, out_h: int, out_w: int, antialias: bool = True
) -> np.ndarray:
    """Separable Keys resize; clamp-to-edge borders; output in [0,1]."""
    if out_h < 1 or out_w < 1:
        raise ConfigurationError("target size must be at least 1x1")
    if img.ndim not in (2, 3):
        raise ImageError("image must be (h, w) or (h, w, c)")
    out = _resize_axis0(np.asarray(img, dtype=np.float64), out_h, antialias)
    out = _resize_axis0(out.swapaxes(0, 1), out_w, antialias).swapaxes(0, 1)
    return np.clip(out, 0.0, 1.0)


def crop_to_multiple(img: np.ndarray, scale: int) -> np.ndarray:
    """Center-crop so both spatial dims divide by scale."""
    h, w = img.shape[:2]
    nh, nw = (h // scale) * scale, (w // scale) * scale
    if nh == 0 or nw == 0:
        raise ImageError("image smaller than the scale factor")
    top, left = (h - nh) // 2, (w - nw) // 2
    return img[top:top + nh, left:left + nw]


def degrade(hr: np.ndarray, scale: int) -> np.ndarray:
    """Antialiased downscale by 1/scale, bicubic upscale back.

    This produces the pre-upscaled network input; hr dims must already
    be multiples of scale (crop_to_multiple first).
    """
    h, w = hr.shape[:2]
    if h % scale or w % scale:
        raise ImageError("dimensions must be multiples of the scale")
    lr = resize_bicubic(hr, h // scale, w // scale, antialias=True)
    return resize_bicubic(lr, h, w, antialias=False)
