"""
A linear 2D bottleneck on top of a frozen backbone, for plotting features.

Only ID training data reaches the projector during fitting.
"""

import logging
from typing import Any, Optional, Union

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F
from torch.optim import SGD
from torch.optim.lr_scheduler import LambdaLR
from tqdm import tqdm

from src.data.examples import ExampleSet
from src.models.networks import ModelContract, compute_features
from src.training.config import cosine_factor
from src.utils.common import parameter_hash
from src.utils.errors import InvalidArgumentError

logger = logging.getLogger(__name__)


class VisProjector(nn.Module):
    """Penultimate features -> 2D points; `head` maps 2D points to class logits for fitting only."""

    def __init__(self, feature_dim: int, num_classes: int):
        super().__init__()
        if feature_dim < 1:
            raise InvalidArgumentError(f"Penultimate features must be nonempty, got dimension {feature_dim}")
        self.feature_dim = feature_dim
        self.layer = nn.Linear(feature_dim, 2)
        self.head = nn.Linear(2, num_classes)
        self.metadata: dict[str, Any] = {}

    def forward(self, features: torch.Tensor) -> torch.Tensor:
        return self.head(self.layer(features))


def fit_vis_layer(
    model: ModelContract,
    id_train: ExampleSet,
    epochs: int = 10,
    lr: float = 0.001,
    seed: int = 0,
    batch_size: int = 32,
    momentum: float = 0.9,
) -> VisProjector:
    """
    Train the visualization layer with cross-entropy on ID training data.

    The backbone is frozen: its features are computed once without gradients
    and its parameters are checked to be unchanged afterwards.

    Args:
        model (ModelContract): Trained backbone.
        id_train (ExampleSet): Labeled ID training examples.
        epochs (int): Training epochs.
        lr (float): Initial learning rate of the cosine schedule.
        seed (int): Seed of initialisation and shuffling.

    Returns:
        VisProjector: The fitted projector with training metadata.
    """
    if id_train.labels is None or len(id_train) == 0:
        raise InvalidArgumentError("fit_vis_layer needs labeled ID training examples")
    if epochs < 1:
        raise InvalidArgumentError(f"epochs must be positive, got {epochs}")
    before = parameter_hash(model)
    model.eval()
    for p in model.parameters():
        p.requires_grad_(False)
    try:
        features = compute_features(model, id_train.inputs)
    finally:
        for p in model.parameters():
            p.requires_grad_(True)
    if features.ndim != 2 or features.shape[1] == 0:
        raise InvalidArgumentError(f"Penultimate features have shape {tuple(features.shape)}")
    labels = id_train.labels

    torch.manual_seed(seed)
    projector = VisProjector(features.shape[1], model.num_classes)
    generator = torch.Generator().manual_seed(seed)
    n = features.shape[0]
    bs = min(batch_size, n)
    steps = max(1, n // bs)
    optimizer = SGD(projector.parameters(), lr=lr, momentum=momentum)
    scheduler = LambdaLR(optimizer, lambda t: cosine_factor(t, steps * epochs))

    projector.train()
    for epoch in tqdm(range(epochs), desc="vis layer"):
        order = torch.randperm(n, generator=generator)
        total = 0.0
        for step in range(steps):
            index = order[step * bs : (step + 1) * bs]
            loss = F.cross_entropy(projector(features[index]), labels[index])
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            scheduler.step()
            total += float(loss)
        logger.debug(f"vis layer epoch {epoch + 1}/{epochs} loss={total / steps:.4f}")
    projector.eval()

    with torch.no_grad():
        train_accuracy = float((projector(features).argmax(dim=-1) == labels).double().mean())
    after = parameter_hash(model)
    if after != before:
        raise RuntimeError("Backbone parameters changed while fitting the visualization layer")
    projector.metadata = {
        "epochs": epochs,
        "lr": lr,
        "schedule": "cosine",
        "seed": seed,
        "train_accuracy": train_accuracy,
        "backbone_hash": before,
        "trained_on": id_train.name,
    }
    logger.info(f"Visualization layer: 2D-bottleneck train accuracy {train_accuracy:.4f}")
    return projector


def project_features(projector: VisProjector, features: torch.Tensor) -> torch.Tensor:
    """Affine map of penultimate features to the plane, order-preserving."""
    if features.ndim != 2 or features.shape[1] != projector.feature_dim:
        raise InvalidArgumentError(
            f"Expected features of dimension {projector.feature_dim}, got shape {tuple(features.shape)}"
        )
    with torch.no_grad():
        return projector.layer(features.to(projector.layer.weight.dtype))


def project(
    projector: VisProjector,
    model: ModelContract,
    examples: Union[ExampleSet, torch.Tensor],
    confidence: Optional[bool] = False,
) -> Union[np.ndarray, tuple[np.ndarray, np.ndarray]]:
    """
    Project examples to 2D points through the backbone and the projector.

    With `confidence`, also returns the backbone's max softmax probability per
    example, used to shade scatter plots.
    """
    inputs = examples.inputs if isinstance(examples, ExampleSet) else examples
    features = compute_features(model, inputs)
    points = project_features(projector, features).double().numpy()
    if not confidence:
        return points
    with torch.no_grad():
        msp = F.softmax(model.classifier(features), dim=-1).max(dim=-1).values
    return points, msp.double().numpy()
