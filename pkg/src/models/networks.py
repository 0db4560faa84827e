from abc import ABC, abstractmethod

import torch
import torch.nn as nn

from src.utils.common import seed_everything
from src.utils.errors import InvalidArgumentError


class ModelContract(nn.Module, ABC):
    """
    Classifier split into a feature extractor and a linear head.

    Subclasses provide `penultimate`; `forward` applies `classifier` on top.
    No layer may depend on batch statistics, so a forward pass treats every
    example independently and losses computed on separate batches compose.
    """

    feature_dim: int
    num_classes: int
    classifier: nn.Linear

    @abstractmethod
    def penultimate(self, x: torch.Tensor) -> torch.Tensor:
        """
        Get the penultimate-layer features of a batch.
        """
        raise NotImplementedError("Subclasses must implement this method")

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.classifier(self.penultimate(x))

    def get_parameters(self) -> dict[str, torch.Tensor]:
        return {k: v.detach().clone() for k, v in self.state_dict().items()}

    def set_parameters(self, state: dict[str, torch.Tensor]) -> None:
        self.load_state_dict(state)


class SmallConvNet(ModelContract):
    """Two conv blocks and global average pooling; the desk-scale backbone."""

    def __init__(self, in_channels: int, num_classes: int, width: int = 16, feature_dim: int = 32):
        super().__init__()
        self.feature_dim = feature_dim
        self.num_classes = num_classes
        self.features = nn.Sequential(
            nn.Conv2d(in_channels, width, kernel_size=3, padding=1),
            nn.ReLU(),
            nn.MaxPool2d(2),
            nn.Conv2d(width, 2 * width, kernel_size=3, padding=1),
            nn.ReLU(),
            nn.AdaptiveAvgPool2d(1),
            nn.Flatten(),
            nn.Linear(2 * width, feature_dim),
            nn.ReLU(),
        )
        self.classifier = nn.Linear(feature_dim, num_classes)

    def penultimate(self, x: torch.Tensor) -> torch.Tensor:
        return self.features(x)


class TwoLayerNet(ModelContract):
    """Flatten -> tanh hidden layer -> linear head. Small enough for finite differences."""

    def __init__(self, in_features: int, num_classes: int, hidden: int = 4):
        super().__init__()
        self.feature_dim = hidden
        self.num_classes = num_classes
        self.hidden = nn.Sequential(nn.Flatten(), nn.Linear(in_features, hidden), nn.Tanh())
        self.classifier = nn.Linear(hidden, num_classes)

    def penultimate(self, x: torch.Tensor) -> torch.Tensor:
        return self.hidden(x)


def build_model(
    name: str,
    input_shape: tuple,
    num_classes: int,
    seed: int,
    **kwargs,
) -> ModelContract:
    """
    Create a freshly initialised backbone.

    Args:
        name (str): "small_conv" or "two_layer".
        input_shape (tuple): Per-example input shape, (C, H, W) for images.
        num_classes (int): Number of ID classes.
        seed (int): Seed for parameter initialisation.

    Returns:
        ModelContract: The model in float32.
    """
    seed_everything(seed)
    if name == "small_conv":
        return SmallConvNet(input_shape[0], num_classes, **kwargs)
    elif name == "two_layer":
        in_features = 1
        for d in input_shape:
            in_features *= d
        return TwoLayerNet(in_features, num_classes, **kwargs)
    else:
        raise InvalidArgumentError(f"Unknown model '{name}'. Use 'small_conv' or 'two_layer'.")


def compute_logits(model: nn.Module, inputs: torch.Tensor, batch_size: int = 512) -> torch.Tensor:
    """Forward a tensor in chunks without tracking gradients."""
    with torch.no_grad():
        if inputs.shape[0] == 0:
            return torch.empty(0)
        return torch.cat(
            [model(inputs[i : i + batch_size]) for i in range(0, inputs.shape[0], batch_size)]
        )


def compute_features(model: ModelContract, inputs: torch.Tensor, batch_size: int = 512) -> torch.Tensor:
    """Penultimate features of a tensor, in chunks, without gradients."""
    with torch.no_grad():
        if inputs.shape[0] == 0:
            return torch.empty(0, model.feature_dim)
        return torch.cat(
            [
                model.penultimate(inputs[i : i + batch_size])
                for i in range(0, inputs.shape[0], batch_size)
            ]
        )
