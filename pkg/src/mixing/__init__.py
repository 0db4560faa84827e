from src.mixing.mix import (
    MIX_MODES,
    CutBox,
    MixCoefficient,
    MixedSample,
    SoftTarget,
    make_id_mix_pair,
    make_soft_target,
    make_virtual_outlier,
    mix_cut,
    mix_inputs,
    mix_linear,
    one_hot,
    sample_cut_box,
    sample_lambda,
)

__all__ = [
    "MIX_MODES",
    "CutBox",
    "MixCoefficient",
    "MixedSample",
    "SoftTarget",
    "make_id_mix_pair",
    "make_soft_target",
    "make_virtual_outlier",
    "mix_cut",
    "mix_inputs",
    "mix_linear",
    "one_hot",
    "sample_cut_box",
    "sample_lambda",
]
