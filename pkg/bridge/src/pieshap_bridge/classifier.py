"""Target classifier wrappers: seeded construction, frozen-head export,
penultimate features, and masked-batch inference."""

from __future__ import annotations

import numpy as np
import torch
import torchvision

from pieshap.nets import FrozenHead, softmax

# standard ImageNet statistics; also used as the neutral masking fill color
DATASET_MEAN = np.array([0.485, 0.456, 0.406], dtype=np.float64)
DATASET_STD = np.array([0.229, 0.224, 0.225], dtype=np.float64)

CLASSIFIERS = ("resnet18-rand", "resnet50-rand")


def build_classifier(
    classifier_id: str = "resnet18-rand", n_classes: int = 10, seed: int = 0
) -> torch.nn.Module:
    """Deterministically initialized classifier in eval mode.

    Pretrained checkpoints are not downloadable in this environment, so the
    ``-rand`` ids carry seeded random weights; the bridge contract (schema,
    full-coalition fidelity, head round-trip) is weight-agnostic.
    """
    torch.manual_seed(seed)
    if classifier_id == "resnet18-rand":
        model = torchvision.models.resnet18(weights=None, num_classes=n_classes)
    elif classifier_id == "resnet50-rand":
        model = torchvision.models.resnet50(weights=None, num_classes=n_classes)
    else:
        raise ValueError(f"unknown classifier {classifier_id!r}; known: {CLASSIFIERS}")
    model.eval()
    return model


def export_head(model: torch.nn.Module) -> FrozenHead:
    """The classifier's final fully-connected layer as a core FrozenHead."""
    fc = model.fc
    return FrozenHead(
        W=fc.weight.detach().numpy().astype(np.float64),
        b=fc.bias.detach().numpy().astype(np.float64),
    )


def _to_batch(images: np.ndarray) -> torch.Tensor:
    """(B, H, W, 3) float [0, 1] array -> normalized float32 NCHW tensor."""
    x = (images - DATASET_MEAN) / DATASET_STD
    return torch.from_numpy(np.transpose(x, (0, 3, 1, 2)).astype(np.float32))


@torch.no_grad()
def penultimate_features(model: torch.nn.Module, images: np.ndarray) -> np.ndarray:
    """Features just before the final layer, shape (B, d), float64."""
    body = torch.nn.Sequential(*list(model.children())[:-1])
    feats = body(_to_batch(images))
    return torch.flatten(feats, 1).numpy().astype(np.float64)


@torch.no_grad()
def infer_probs(
    model: torch.nn.Module, images: np.ndarray, batch_size: int = 32
) -> np.ndarray:
    """Class distributions for a (B, H, W, 3) batch, softmax in float64."""
    outs = []
    for lo in range(0, images.shape[0], batch_size):
        logits = model(_to_batch(images[lo: lo + batch_size]))
        outs.append(logits.numpy().astype(np.float64))
    logits = np.concatenate(outs, axis=0)
    return np.array([softmax(row) for row in logits])
