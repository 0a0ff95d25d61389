"""Patch dataset construction: augment, degrade, slice, persist.

A dataset directory holds inputs.npy / targets.npy (float32, shape
(n, 1, size, size)) plus manifest.json recording the source files with
sha256 checksums, the augmentation family, grid parameters, the seed,
and payload checksums. Building is fully deterministic, so the
manifest is sufficient to rebuild the arrays bit-exactly from the
sources; byte-identical manifests mean byte-identical datasets.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .images import crop_to_multiple, degrade, load_image, resize_bicubic, rgb_to_ycbcr
from .tensor_ops import ConfigurationError, SINGLE

PATCH_SIZE = 41
PATCH_STRIDE = 21

AUGMENT_SCALES = (1.0, 0.9, 0.8, 0.7, 0.6)
AUGMENT_ROTATIONS = (0, 90, 180, 270)


class DatasetError(ValueError):
    pass


@dataclass
class PatchRecord(object):
    source: str
    row: int
    col: int
    tag: str


@dataclass
class PatchDataset(object):
    inputs: np.ndarray  # (n, 1, size, size) float32
    targets: np.ndarray
    records: list[PatchRecord]
    manifest: dict

    def __len__(self):
        return self.inputs.shape[0]


def grid_origins(dim: int, size: int = PATCH_SIZE, stride: int = PATCH_STRIDE) -> list[int]:
    """Origins 0, stride, 2*stride, ... while origin + size <= dim."""
    if dim < size:
        return []
    return list(range(0, dim - size + 1, stride))


def extract_patches(
    input_img: np.ndarray,
    target_img: np.ndarray,
    size: int = PATCH_SIZE,
    stride: int = PATCH_STRIDE,
) -> list[tuple[int, int, np.ndarray, np.ndarray]]:
    """Aligned (row, col, input patch, target patch) tuples, row-major grid.

    Returns the empty list when either dimension is below size.
    """
    if input_img.shape != target_img.shape:
        raise DatasetError("input and target must be aligned and equal size")
    if input_img.ndim != 2:
        raise DatasetError("patch extraction expects single-channel images")
    h, w = input_img.shape
    out = []
    for r in grid_origins(h, size, stride):
        for c in grid_origins(w, size, stride):
            out.append(
                (r, c, input_img[r:r + size, c:c + size], target_img[r:r + size, c:c + size])
            )
    return out


def _scaled_dims(h: int, w: int, factor: float) -> tuple[int, int]:
    # round-half-away-from-zero keeps the mapping implementation-neutral
    return (
        max(1, int(np.floor(h * factor + 0.5))),
        max(1, int(np.floor(w * factor + 0.5))),
    )


def augment(img: np.ndarray) -> list[tuple[str, np.ndarray]]:
    """The fixed 40-buffer family: 5 scales x 4 rotations x optional flip.

    Tags look like "s090-r180-f": scale percent, rotation degrees, and a
    trailing -f when the horizontal flip follows the rotation. Scaled
    copies are antialiased bicubic resizes.
    """
    out = []
    for factor in AUGMENT_SCALES:
        if factor == 1.0:
            base = img
        else:
            nh, nw = _scaled_dims(img.shape[0], img.shape[1], factor)
            base = resize_bicubic(img, nh, nw, antialias=True)
        for rot in AUGMENT_ROTATIONS:
            turned = np.rot90(base, rot // 90)
            tag = "s%03d-r%03d" % (round(factor * 100), rot)
            out.append((tag, turned))
            out.append((tag + "-f", np.fliplr(turned)))
    return out


def _sha256_file(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def _sha256_array(arr: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(arr).tobytes()).hexdigest()


def _to_luma(img: np.ndarray) -> np.ndarray:
    if img.ndim == 3:
        return rgb_to_ycbcr(img)[0]
    return img


def build_dataset(
    image_paths: list,
    scale: int,
    seed: int = 0,
    use_augmentation: bool = True,
    size: int = PATCH_SIZE,
    stride: int = PATCH_STRIDE,
) -> PatchDataset:
    """Degrade each (augmented) source and slice aligned Y patch pairs.

    Sources are processed in sorted-basename order; within a source the
    variants follow the fixed augmentation enumeration and the grid is
    row-major, so the output order is reproducible. Variants smaller
    than the patch size contribute nothing but leave a warning record
    in the manifest.
    """
    if scale < 1:
        raise ConfigurationError("scale must be >= 1")
    if not image_paths:
        raise DatasetError("no source images given")
    by_name = {}
    for p in image_paths:
        name = os.path.basename(str(p))
        if name in by_name:
            raise DatasetError("duplicate source basename: %s" % name)
        by_name[name] = str(p)

    sources, warnings, records = [], [], []
    in_list, tg_list = [], []
    for name in sorted(by_name):
        path = by_name[name]
        img = load_image(path)
        sources.append(
            {
                "id": name,
                "sha256": _sha256_file(path),
                "height": int(img.shape[0]),
                "width": int(img.shape[1]),
            }
        )
        luma = _to_luma(img)
        variants = augment(luma) if use_augmentation else [("s100-r000", luma)]
        for tag, buf in variants:
            target = crop_to_multiple(buf, scale) if scale > 1 else buf
            pairs = extract_patches(degrade(target, scale), target, size, stride)
            if not pairs:
                warnings.append(
                    {
                        "source": name,
                        "tag": tag,
                        "height": int(buf.shape[0]),
                        "width": int(buf.shape[1]),
                        "reason": "smaller than patch size",
                    }
                )
                continue
            for r, c, pin, ptg in pairs:
                records.append(PatchRecord(name, r, c, tag))
                in_list.append(pin)
                tg_list.append(ptg)

    if in_list:
        inputs = np.stack(in_list).astype(SINGLE)[:, None]
        targets = np.stack(tg_list).astype(SINGLE)[:, None]
    else:
        inputs = np.zeros((0, 1, size, size), dtype=SINGLE)
        targets = np.zeros((0, 1, size, size), dtype=SINGLE)

    order = sorted(
        range(len(records)),
        key=lambda i: (records[i].source, records[i].row, records[i].col, records[i].tag),
    )
    records = [records[i] for i in order]
    if len(order):
        inputs = inputs[order]
        targets = targets[order]

    manifest = {
        "format": "warship-sr-dataset",
        "version": 1,
        "scale": int(scale),
        "seed": int(seed),
        "patch_size": int(size),
        "patch_stride": int(stride),
        "augmentation": {
            "enabled": bool(use_augmentation),
            "scales": list(AUGMENT_SCALES),
            "rotations": list(AUGMENT_ROTATIONS),
            "horizontal_flip": True,
        },
        "sources": sources,
        "warnings": warnings,
        "patch_count": int(inputs.shape[0]),
        "checksums": {
            "inputs": _sha256_array(inputs),
            "targets": _sha256_array(targets),
        },
    }
    return PatchDataset(inputs, targets, records, manifest)


def manifest_text(manifest: dict) -> str:
    return json.dumps(manifest, indent=2, sort_keys=True) + "\n"


def save_dataset(ds: PatchDataset, out_dir) -> None:
    os.makedirs(out_dir, exist_ok=True)
    np.save(os.path.join(out_dir, "inputs.npy"), ds.inputs)
    np.save(os.path.join(out_dir, "targets.npy"), ds.targets)
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        fh.write(manifest_text(ds.manifest))


def load_dataset(in_dir) -> PatchDataset:
    mpath = os.path.join(in_dir, "manifest.json")
    if not os.path.exists(mpath):
        raise DatasetError("no manifest.json in %s" % in_dir)
    with open(mpath) as fh:
        manifest = json.load(fh)
    try:
        inputs = np.load(os.path.join(in_dir, "inputs.npy"))
        targets = np.load(os.path.join(in_dir, "targets.npy"))
    except (OSError, ValueError) as exc:
        raise DatasetError("cannot read dataset arrays: %s" % exc) from exc
    sums = manifest.get("checksums", {})
    if sums.get("inputs") != _sha256_array(inputs) or sums.get("targets") != _sha256_array(targets):
        raise DatasetError("dataset arrays do not match manifest checksums")
    if inputs.shape != targets.shape or inputs.shape[0] != manifest.get("patch_count"):
        raise DatasetError("dataset arrays disagree with manifest")
    return PatchDataset(inputs, targets, [], manifest)
