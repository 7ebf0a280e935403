"""Image directory -> GIQF feature file.

Features are the 2048-wide final average-pool activations of an
inception-style classifier, evaluated on a pinned preprocessing chain
(resize shortest side to 342, center-crop 299, ImageNet channel
normalization).  Changing any of that keeps files format-compatible
but breaks score comparability, so it bumps this package's version.

Network weights are initialized from a fixed seed rather than
downloaded, which keeps extraction fully deterministic and offline.
Scores are comparable only across files produced by the same extractor
version and weight configuration.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Tuple

import numpy as np
import torch
from PIL import Image
from torchvision import models, transforms

from .writer import write_giqf

FEATURE_DIM = 2048
WEIGHTS_SEED = 0
RESIZE_SIZE = 342
CROP_SIZE = 299
CHANNEL_MEAN = (0.485, 0.456, 0.406)
CHANNEL_STD = (0.229, 0.224, 0.225)

PREPROCESSING_NOTE = (
    f"preprocessing: RGB, resize shortest side to {RESIZE_SIZE}, "
    f"center-crop {CROP_SIZE}, normalize mean={CHANNEL_MEAN} std={CHANNEL_STD}"
)


@dataclass(frozen=True)
class ExtractionJob:
    image_dir: Path
    output_path: Path
    model_name: str = "inception_v3"
    batch_size: int = 64
    device: str = "cpu"

    def __post_init__(self):
        object.__setattr__(self, "image_dir", Path(self.image_dir))
        object.__setattr__(self, "output_path", Path(self.output_path))
        if self.batch_size < 1:
            raise ValueError("batch size must be positive")
        if self.model_name not in MODEL_DIMS:
            raise ValueError(f"unknown model: {self.model_name}")


MODEL_DIMS = {"inception_v3": FEATURE_DIM}


def build_model(name: str, device: str) -> torch.nn.Module:
    if name != "inception_v3":
        raise ValueError(f"unknown model: {name}")
    torch.manual_seed(WEIGHTS_SEED)
    model = models.inception_v3(weights=None, aux_logits=False, init_weights=True)
    model.fc = torch.nn.Identity()  # expose the pooled 2048-dim features
    model.eval()
    return model.to(device)


def build_preprocess():
    return transforms.Compose(
        [
            transforms.Resize(RESIZE_SIZE),
            transforms.CenterCrop(CROP_SIZE),
            transforms.ToTensor(),
            transforms.Normalize(mean=CHANNEL_MEAN, std=CHANNEL_STD),
        ]
    )


def _list_files(root: Path) -> List[Path]:
    return sorted(
        (p for p in root.rglob("*") if p.is_file()),
        key=lambda p: p.relative_to(root).as_posix(),
    )


def _decode(path: Path) -> Image.Image:
    with Image.open(path) as img:
        return img.convert("RGB")


def extract(job: ExtractionJob) -> Path:
    """Run the job and return the output path.

    Undecodable files are skipped with a warning and listed in the
    sidecar report next to the output file.
    """
    root = job.image_dir
    if not root.is_dir():
        raise FileNotFoundError(f"not a directory: {root}")
    files = _list_files(root)
    if not files:
        raise ValueError(f"empty image directory: {root}")

    decoded: List[Tuple[str, Image.Image]] = []
    skipped = []
    for path in files:
        rel = path.relative_to(root).as_posix()
        try:
            decoded.append((rel, _decode(path)))
        except Exception as exc:
            warnings.warn(f"skipping undecodable file {rel}: {exc}")
            skipped.append({"path": rel, "error": str(exc)})
    if not decoded:
        raise ValueError(f"no decodable images in {root}")

    model = build_model(job.model_name, job.device)
    preprocess = build_preprocess()
    rows = []
    with torch.no_grad():
        for start in range(0, len(decoded), job.batch_size):
            batch = decoded[start : start + job.batch_size]
            tensors = torch.stack([preprocess(img) for _, img in batch])
            features = model(tensors.to(job.device))
            rows.append(features.cpu().numpy())
    data = np.concatenate(rows, axis=0)
    assert data.shape[1] == MODEL_DIMS[job.model_name]

    write_giqf(job.output_path, [rel for rel, _ in decoded], data)
    report = {"skipped": skipped, "extracted": len(decoded)}
    report_path = job.output_path.with_name(job.output_path.name + ".report.json")
    report_path.write_text(json.dumps(report, indent=2))
    return job.output_path
