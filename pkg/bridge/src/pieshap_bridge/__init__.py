"""Real-model front end for pieshap: concepts from segmentation, frozen-head
export, and masked-image inference behind the core's case/request/response
file formats."""

from .bridge import (
    BridgeJob,
    answer_requests,
    build_case,
    composite,
    load_image,
    load_job,
    load_masks,
)
from .classifier import (
    DATASET_MEAN,
    DATASET_STD,
    build_classifier,
    export_head,
    infer_probs,
    penultimate_features,
)
from .segmentation import SegmentationError, extract_concepts

__version__ = "0.1.0"
