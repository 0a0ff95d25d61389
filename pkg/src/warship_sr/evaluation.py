"""Y-channel PSNR, directory evaluation, and comparison tables."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .images import ImageError, crop_to_multiple, degrade, load_image, rgb_to_ycbcr

# Identical images would give infinite PSNR; aggregates stay finite by
# capping at this value, and rendered output notes the convention.
PSNR_CAP_DB = 100.0


class EvaluationError(ValueError):
    pass


def psnr(reference: np.ndarray, candidate: np.ndarray, shave: int = 0) -> float:
    """10*log10(1/MSE) over [0,1] samples, borders shaved on all sides."""
    if reference.shape != candidate.shape:
        raise EvaluationError("dimension mismatch")
    if reference.ndim != 2:
        raise EvaluationError("psnr expects single-channel images")
    if shave < 0:
        raise EvaluationError("shave must be >= 0")
    h, w = reference.shape
    if 2 * shave >= h or 2 * shave >= w:
        raise EvaluationError("shave %d leaves no pixels on %dx%d" % (shave, h, w))
    if shave:
        reference = reference[shave:-shave, shave:-shave]
        candidate = candidate[shave:-shave, shave:-shave]
    diff = reference.astype(np.float64) - candidate.astype(np.float64)
    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, 10.0 * np.log10(1.0 / mse))


@dataclass
class EvalResult(object):
    method: str
    scale: int
    per_image: list  # [{"name": str, "psnr_db": float}]
    mean_psnr_db: float
    skipped: list = field(default_factory=list)  # [{"name", "reason"}]

    def to_json(self) -> str:
        doc = {
            "method": self.method,
            "scale": self.scale,
            "psnr_cap_db": PSNR_CAP_DB,
            "per_image": self.per_image,
            "mean_psnr_db": self.mean_psnr_db,
            "skipped": self.skipped,
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    @staticmethod
    def from_json(text: str) -> "EvalResult":
        doc = json.loads(text)
        return EvalResult(
            doc["method"],
            doc["scale"],
            doc["per_image"],
            doc["mean_psnr_db"],
            doc.get("skipped", []),
        )


IMAGE_EXTENSIONS = (".png", ".pgm", ".ppm")


def evaluate_set(sr_fn, image_dir, scale: int, shave=None, method: str = "model") -> EvalResult:
    """Score sr_fn over every HR image in a directory.

    sr_fn maps a degraded Y plane (already upscaled back to HR size) to
    a same-shape reconstruction; the bicubic baseline is sr_fn = lambda
    y: y since degradation already ends with the bicubic upscale. Each
    image is center-cropped to a scale multiple first. Files that fail
    to read are skipped with a warning entry. shave defaults to scale.
    """
    if shave is None:
        shave = scale
    names = sorted(
        f for f in os.listdir(image_dir)
        if f.lower().endswith(IMAGE_EXTENSIONS)
    )
    if not names:
        raise EvaluationError("no evaluable images in %s" % image_dir)
    per_image, skipped = [], []
    for name in names:
        try:
            img = load_image(os.path.join(image_dir, name))
        except ImageError as exc:
            skipped.append({"name": name, "reason": str(exc)})
            continue
        luma = rgb_to_ycbcr(img)[0] if img.ndim == 3 else img
        hr = crop_to_multiple(luma, scale) if scale > 1 else luma
        restored = sr_fn(degrade(hr, scale))
        per_image.append({"name": name, "psnr_db": psnr(hr, restored, shave)})
    if not per_image:
        raise EvaluationError("every image in %s failed to load" % image_dir)
    mean = float(np.mean([e["psnr_db"] for e in per_image]))
    return EvalResult(method, scale, per_image, mean, skipped)


def render_table(results: list) -> str:
    """Fixed-width comparison: one column per method, two-decimal PSNR."""
    if not results:
        raise EvaluationError("nothing to render")
    headers = [r.method for r in results]
    values = ["%.2f" % r.mean_psnr_db for r in results]
    widths = [max(len(h), len(v)) for h, v in zip(headers, values)]
    label = "PSNR (dB)"
    left = max(len(label), len("Method"))
    lines = [
        "%-*s | %s" % (left, "Method", " | ".join(h.ljust(w) for h, w in zip(headers, widths))),
        "-" * left + "-+-" + "-+-".join("-" * w for w in widths),
        "%-*s | %s" % (left, label, " | ".join(v.ljust(w) for v, w in zip(values, widths))),
    ]
    if any(e["psnr_db"] >= PSNR_CAP_DB for r in results for e in r.per_image):
        lines.append("(identical images capped at %.0f dB)" % PSNR_CAP_DB)
    return "\n".join(lines) + "\n"
