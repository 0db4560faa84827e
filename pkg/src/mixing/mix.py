"""
Virtual outliers: mix ID inputs with outlier inputs and soften the targets.

Two mixing modes are supported. ``linear`` interpolates whole inputs,
``cut`` pastes a rectangle of the outlier into the ID input. In both cases the
soft target interpolates the ID one-hot label towards the uniform
distribution with the same coefficient, so the intended confidence of a mixed
sample is lambda + (1 - lambda) / K.
"""

import logging
from dataclasses import dataclass
from typing import Literal, Optional

import numpy as np
import torch

from src.utils.errors import InvalidArgumentError, UnsupportedOperationError

logger = logging.getLogger(__name__)

MixMode = Literal["linear", "cut"]
MIX_MODES = ("linear", "cut")


@dataclass(frozen=True)
class MixCoefficient:
    lam: float
    alpha: float

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise InvalidArgumentError(f"lambda must be in [0, 1], got {self.lam}")


@dataclass(frozen=True)
class SoftTarget:
    probs: torch.Tensor

    @property
    def K(self) -> int:
        return self.probs.shape[-1]


@dataclass(frozen=True)
class CutBox:
    """Half-open pixel rectangle [y1, y2) x [x1, x2) after clipping."""

    y1: int
    y2: int
    x1: int
    x2: int

    @property
    def area(self) -> int:
        return (self.y2 - self.y1) * (self.x2 - self.x1)

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.y1, self.y2, self.x1, self.x2)


@dataclass(frozen=True)
class MixedSample:
    input: torch.Tensor
    target: SoftTarget
    lam: MixCoefficient
    mode: MixMode
    box: Optional[CutBox] = None

    def log_record(self) -> dict:
        """Batch-log entry: (lambda, mode, box) for reproducibility."""
        return {
            "lambda": self.lam.lam,
            "mode": self.mode,
            "box": self.box.as_tuple() if self.box is not None else None,
        }


def _check_lambda(lam: float) -> None:
    if not 0.0 <= lam <= 1.0:
        raise InvalidArgumentError(f"lambda must be in [0, 1], got {lam}")


def sample_lambda(alpha: float, rng: np.random.Generator) -> MixCoefficient:
    """Draw lambda ~ Beta(alpha, alpha); one draw per training batch."""
    if not alpha > 0:
        raise InvalidArgumentError(f"alpha must be positive, got {alpha}")
    return MixCoefficient(lam=float(rng.beta(alpha, alpha)), alpha=float(alpha))


def mix_linear(x_in: torch.Tensor, x_out: torch.Tensor, lam: float) -> torch.Tensor:
    """Elementwise lam * x_in + (1 - lam) * x_out."""
    if x_in.shape != x_out.shape:
        raise InvalidArgumentError(
            f"Cannot mix inputs of shapes {tuple(x_in.shape)} and {tuple(x_out.shape)}"
        )
    _check_lambda(lam)
    return lam * x_in + (1.0 - lam) * x_out


def _spatial_size(x: torch.Tensor) -> tuple[int, int]:
    if x.ndim < 3:
        raise UnsupportedOperationError(
            f"Cut mixing needs (..., C, H, W) inputs, got shape {tuple(x.shape)}; "
            "use mix_linear for non-spatial inputs"
        )
    return x.shape[-2], x.shape[-1]


def sample_cut_box(
    height: int,
    width: int,
    lam: float,
    rng: np.random.Generator,
    center: Optional[tuple[int, int]] = None,
) -> CutBox:
    """
    Sample the rectangle replaced by outlier content.

    The box has size (H * sqrt(1 - lam), W * sqrt(1 - lam)) truncated to whole
    pixels, a center drawn uniformly over pixel positions (unless given), and
    is clipped to the image bounds.
    """
    _check_lambda(lam)
    ratio = np.sqrt(1.0 - lam)
    cut_h, cut_w = int(height * ratio), int(width * ratio)
    if center is None:
        cy, cx = int(rng.integers(height)), int(rng.integers(width))
    else:
        cy, cx = center
    y1, x1 = cy - cut_h // 2, cx - cut_w // 2
    return CutBox(
        y1=int(np.clip(y1, 0, height)),
        y2=int(np.clip(y1 + cut_h, 0, height)),
        x1=int(np.clip(x1, 0, width)),
        x2=int(np.clip(x1 + cut_w, 0, width)),
    )


def paste_box(x_in: torch.Tensor, x_out: torch.Tensor, box: CutBox) -> torch.Tensor:
    mixed = x_in.clone()
    mixed[..., box.y1 : box.y2, box.x1 : box.x2] = x_out[..., box.y1 : box.y2, box.x1 : box.x2]
    return mixed


def box_lambda(box: CutBox, height: int, width: int) -> float:
    """Fraction of pixels still holding ID content."""
    return 1.0 - box.area / (height * width)


def mix_cut(
    x_in: torch.Tensor,
    x_out: torch.Tensor,
    lam: float,
    rng: np.random.Generator,
    center: Optional[tuple[int, int]] = None,
) -> tuple[torch.Tensor, float]:
    """
    Paste a co-located rectangle of `x_out` into `x_in`.

    Returns the mixed tensor and the realized ID fraction, which is the value
    the soft target must use. A single box is shared by every example of a
    batch.
    """
    height, width = _spatial_size(x_in)
    if x_in.shape != x_out.shape:
        raise InvalidArgumentError(
            f"Cannot mix inputs of shapes {tuple(x_in.shape)} and {tuple(x_out.shape)}"
        )
    box = sample_cut_box(height, width, lam, rng, center)
    return paste_box(x_in, x_out, box), box_lambda(box, height, width)


def _check_one_hot(y: torch.Tensor) -> None:
    if y.ndim not in (1, 2) or y.shape[-1] < 1:
        raise InvalidArgumentError(f"Expected one-hot vector(s), got shape {tuple(y.shape)}")
    is_binary = torch.all((y == 0) | (y == 1))
    one_per_row = torch.all(y.sum(dim=-1) == 1)
    if not (is_binary and one_per_row):
        raise InvalidArgumentError("Label is not a valid one-hot probability vector")


def make_soft_target(y_in: torch.Tensor, lam: float) -> SoftTarget:
    """lam * y_in + (1 - lam) * uniform; works on one vector or a batch of rows."""
    _check_one_hot(y_in)
    _check_lambda(lam)
    K = y_in.shape[-1]
    if K == 1:
        return SoftTarget(probs=torch.ones_like(y_in))
    return SoftTarget(probs=lam * y_in + (1.0 - lam) / K)


def one_hot(labels: torch.Tensor, num_classes: int, dtype=torch.float32) -> torch.Tensor:
    return torch.nn.functional.one_hot(labels.long(), num_classes).to(dtype)


def mix_inputs(
    x_in: torch.Tensor,
    x_out: torch.Tensor,
    lam: float,
    mode: MixMode,
    rng: Optional[np.random.Generator] = None,
) -> tuple[torch.Tensor, float, Optional[CutBox]]:
    """Dispatch to the requested mode; returns (mixed, effective lambda, box)."""
    if mode == "linear":
        return mix_linear(x_in, x_out, lam), lam, None
    if mode == "cut":
        if rng is None:
            raise InvalidArgumentError("Cut mixing requires a seeded generator")
        height, width = _spatial_size(x_in)
        if x_in.shape != x_out.shape:
            raise InvalidArgumentError(
                f"Cannot mix inputs of shapes {tuple(x_in.shape)} and {tuple(x_out.shape)}"
            )
        box = sample_cut_box(height, width, lam, rng)
        return paste_box(x_in, x_out, box), box_lambda(box, height, width), box
    raise InvalidArgumentError(f"Unknown mixing mode '{mode}', expected one of {MIX_MODES}")


def make_id_mix_pair(
    x1: torch.Tensor,
    y1: torch.Tensor,
    x2: torch.Tensor,
    y2: torch.Tensor,
    lam: float,
    mode: MixMode,
    rng: Optional[np.random.Generator] = None,
    alpha: float = 1.0,
) -> MixedSample:
    """
    Mix two labeled ID examples (the ID-only ablation).

    The target interpolates the two labels, lam * y1 + (1 - lam) * y2, with no
    uniform component, so its confidence never drops below 1/2.
    """
    _check_one_hot(y1)
    _check_one_hot(y2)
    if y1.shape != y2.shape:
        raise InvalidArgumentError("Labels of a mix pair must have equal length")
    mixed, lam_eff, box = mix_inputs(x1, x2, lam, mode, rng)
    target = lam_eff * y1 + (1.0 - lam_eff) * y2
    return MixedSample(
        input=mixed,
        target=SoftTarget(target),
        lam=MixCoefficient(lam_eff, alpha),
        mode=mode,
        box=box,
    )


def make_virtual_outlier(
    x_in: torch.Tensor,
    y_in: torch.Tensor,
    x_out: torch.Tensor,
    lam: float,
    mode: MixMode,
    rng: Optional[np.random.Generator] = None,
    alpha: float = 1.0,
) -> MixedSample:
    """Mix ID input(s) with outlier input(s) and attach the confidence-decaying target."""
    mixed, lam_eff, box = mix_inputs(x_in, x_out, lam, mode, rng)
    return MixedSample(
        input=mixed,
        target=make_soft_target(y_in, lam_eff),
        lam=MixCoefficient(lam_eff, alpha),
        mode=mode,
        box=box,
    )
