from typing import Sequence

from rest_framework import serializers

from config.constants import SPLIT_FRACTIONS


def is_power_of_two(value: int) -> bool:
    return value >= 1 and value & (value - 1) == 0


def validate_power_of_two(value: int) -> int:
    if not is_power_of_two(value):
        raise serializers.ValidationError(f"{value} is not a power of two.")
    return value


def validate_fractions(fractions: Sequence[float]) -> Sequence[float]:
    """
    Validates split fractions: one per split, non-negative, summing to 1.
    """
    if len(fractions) != len(SPLIT_FRACTIONS):
        raise serializers.ValidationError(
            f"Expected {len(SPLIT_FRACTIONS)} fractions (train, val, test)."
        )
    if any(f < 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
        raise serializers.ValidationError("Split fractions must be non-negative and sum to 1.")
    return fractions


def validate_clip_geometry(
    frames: int, height: int, width: int, temporal: int, spatial: int
) -> None:
    """
    Checks that a clip survives the VAE's causal compression: 1 + k·ct frames,
    spatial extents divisible by cs.
    """
    # The first frame is kept on its own by the causal stride.
    if (frames - 1) % temporal:
        raise serializers.ValidationError(
            {"frames": f"{frames} frames do not fit temporal compression {temporal} (need 1 + k·{temporal})."}
        )
    if height % spatial or width % spatial:
        raise serializers.ValidationError(
            {"height": f"Frame size {height}x{width} is not divisible by spatial compression {spatial}."}
        )


def validate_patch_fits(latent_extents: Sequence[int], patch: Sequence[int]) -> None:
    for extent, step in zip(latent_extents, patch):
        if step < 1 or extent % step:
            raise serializers.ValidationError(
                {"patch_size": f"Patch {tuple(patch)} does not divide latent extents {tuple(latent_extents)}."}
            )
