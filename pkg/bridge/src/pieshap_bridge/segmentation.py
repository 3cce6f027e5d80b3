"""Concept extraction: partition an image into visual concept masks.

The default segmenter is Felzenszwalb graph segmentation from scikit-image.
A promptable foundation segmenter can be dropped in by registering another
``mask_source`` name; whichever segmenter ran is recorded in the job metadata
so emitted cases stay reproducible.
"""

from __future__ import annotations

import numpy as np
from skimage.segmentation import felzenszwalb, slic


class SegmentationError(RuntimeError):
    """The segmenter produced zero usable masks; no case can be emitted."""


def extract_concepts(
    image: np.ndarray,
    mask_source: str = "felzenszwalb",
    max_concepts: int = 8,
    seed: int = 0,
) -> list[np.ndarray]:
    """Partition ``image`` (H, W, 3 float in [0, 1]) into boolean concept masks.

    Returns at most ``max_concepts`` non-empty masks sorted by descending pixel
    area; when the raw segmentation has more regions than that, the smallest
    regions are merged into the final mask. The masks partition the image, so
    the full coalition reconstructs the unmasked input exactly.
    """
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) image, got {image.shape}")
    if max_concepts < 1:
        raise ValueError("max_concepts must be >= 1")
    if mask_source == "felzenszwalb":
        labels = felzenszwalb(image, scale=200.0, sigma=0.8, min_size=64)
    elif mask_source == "slic":
        labels = slic(
            image, n_segments=max_concepts, compactness=10.0,
            start_label=0, rng=np.random.default_rng(seed),
        )
    else:
        raise ValueError(f"unknown mask source {mask_source!r}")

    ids, counts = np.unique(labels, return_counts=True)
    if ids.size == 0:
        raise SegmentationError(f"{mask_source} produced zero masks")
    # largest regions first; ties broken by label id for determinism
    order = sorted(range(ids.size), key=lambda i: (-counts[i], ids[i]))
    kept = [labels == ids[i] for i in order[: max_concepts - 1]]
    rest = order[max_concepts - 1:]
    if rest:
        merged = np.isin(labels, ids[rest])
        kept.append(merged)
    masks = [m for m in kept if m.any()]
    if not masks:
        raise SegmentationError(f"{mask_source} produced zero non-empty masks")
    return masks
