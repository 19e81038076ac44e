from typing import Any

from rest_framework import serializers

from config.constants import (
    ALIGNMENT_GATE_P,
    BETA_END,
    BETA_START,
    DEFAULT_SEED,
    DESK_FRAME_COUNT,
    DESK_FRAME_SIZE,
    DIT_DEPTH,
    DIT_HEADS,
    DIT_HIDDEN_SIZE,
    DIT_PATCH_SIZE,
    FEATURE_DIM,
    GUIDANCE_SCALE,
    KL_WEIGHT,
    LATENT_CHANNELS,
    LEARNING_RATE,
    P_UNCOND,
    RAW_FRAMES_RANGE,
    RECALL_KS,
    SAMPLING_STEPS,
    SPATIAL_COMPRESSION,
    SPLIT_FRACTIONS,
    TEMPORAL_COMPRESSION,
    TEXT_BLOCKS,
    TEXT_MAX_LENGTH,
    TRAIN_TIMESTEPS,
    VAE_BASE_CHANNELS,
    VESSEL_AREA_THRESHOLD,
    WAVELET_LEVELS,
)
from dataset.synth import LESION_RATE
from dit.vocabulary import LESIONS
from mixins import StrictFieldsMixin
from validators import (
    validate_clip_geometry,
    validate_fractions,
    validate_patch_fits,
    validate_power_of_two,
)

EXTRACTOR_CHOICES = ("vae-pooled", "rand-proj")


def _pair(default, min_value: int) -> serializers.ListField:
    return serializers.ListField(
        child=serializers.IntegerField(min_value=min_value), min_length=2, max_length=2, default=list(default)
    )


# Serializer for the corpus: rendering, preprocessing and splitting.
class DataSectionSerializer(StrictFieldsMixin, serializers.Serializer):
    count = serializers.IntegerField(min_value=3, default=256)
    frames = serializers.IntegerField(min_value=2, default=DESK_FRAME_COUNT)
    size = _pair(DESK_FRAME_SIZE, 4)
    raw_frames = _pair(RAW_FRAMES_RANGE, 2)
    lesions = serializers.ListField(
        child=serializers.ChoiceField(choices=LESIONS), allow_empty=True, default=list(LESIONS)
    )
    balanced = serializers.BooleanField(default=False)
    lesion_rate = serializers.FloatField(min_value=0.0, max_value=1.0, default=LESION_RATE)
    vessel_threshold = serializers.FloatField(min_value=0.0, max_value=1.0, default=VESSEL_AREA_THRESHOLD)
    split_fractions = serializers.ListField(
        child=serializers.FloatField(), default=list(SPLIT_FRACTIONS), validators=[validate_fractions]
    )

    def validate(self, attrs: dict[str, Any]) -> dict[str, Any]:
        low, high = attrs["raw_frames"]
        if low > high:
            raise serializers.ValidationError({"raw_frames": "Lower bound exceeds the upper bound."})
        if attrs["balanced"] and not attrs["lesions"]:
            raise serializers.ValidationError({"lesions": "A balanced corpus needs at least one lesion."})
        return attrs


# Serializer for the wavelet-flow autoencoder.
class VaeSectionSerializer(StrictFieldsMixin, serializers.Serializer):
    latent_channels = serializers.IntegerField(min_value=1, default=LATENT_CHANNELS)
    temporal_compression = serializers.IntegerField(
        default=TEMPORAL_COMPRESSION, validators=[validate_power_of_two]
    )
    spatial_compression = serializers.IntegerField(
        default=SPATIAL_COMPRESSION, validators=[validate_power_of_two]
    )
    base_channels = serializers.IntegerField(min_value=1, default=VAE_BASE_CHANNELS)
    wavelet_levels = serializers.IntegerField(min_value=0, default=WAVELET_LEVELS)
    kl_weight = serializers.FloatField(min_value=0.0, default=KL_WEIGHT)


# Serializer for the denoiser and its text encoder.
class DitSectionSerializer(StrictFieldsMixin, serializers.Serializer):
    hidden_size = serializers.IntegerField(min_value=2, default=DIT_HIDDEN_SIZE)
    depth = serializers.IntegerField(min_value=1, default=DIT_DEPTH)
    heads = serializers.IntegerField(min_value=1, default=DIT_HEADS)
    patch_size = serializers.ListField(
        child=serializers.IntegerField(min_value=1), min_length=3, max_length=3, default=list(DIT_PATCH_SIZE)
    )
    text_max_length = serializers.IntegerField(min_value=1, default=TEXT_MAX_LENGTH)
    text_blocks = serializers.IntegerField(min_value=0, default=TEXT_BLOCKS)

    def validate(self, attrs: dict[str, Any]) -> dict[str, Any]:
        if attrs["hidden_size"] % 2:
            raise serializers.ValidationError({"hidden_size": "Must be even."})
        if attrs["hidden_size"] % attrs["heads"]:
            raise serializers.ValidationError({"heads": "Must divide hidden_size."})
        return attrs


# Serializer for the noise schedule and the sampler.
class DiffusionSectionSerializer(StrictFieldsMixin, serializers.Serializer):
    train_timesteps = serializers.IntegerField(min_value=1, default=TRAIN_TIMESTEPS)
    beta_start = serializers.FloatField(min_value=0.0, max_value=1.0, default=BETA_START)
    beta_end = serializers.FloatField(min_value=0.0, max_value=1.0, default=BETA_END)
    sampling_steps = serializers.IntegerField(min_value=1, default=SAMPLING_STEPS)
    guidance = serializers.FloatField(min_value=0.0, allow_null=True, default=GUIDANCE_SCALE)

    def validate(self, attrs: dict[str, Any]) -> dict[str, Any]:
        if not 0 < attrs["beta_start"] <= attrs["beta_end"] < 1:
            raise serializers.ValidationError({"beta_end": "Need 0 < beta_start <= beta_end < 1."})
        if attrs["sampling_steps"] > attrs["train_timesteps"]:
            raise serializers.ValidationError({"sampling_steps": "Cannot exceed train_timesteps."})
        return attrs


# Serializer for the optimisation budgets.
class TrainSectionSerializer(StrictFieldsMixin, serializers.Serializer):
    vae_steps = serializers.IntegerField(min_value=0, default=2000)
    dit_steps = serializers.IntegerField(min_value=0, default=4000)
    batch_size = serializers.IntegerField(min_value=1, default=8)
    vae_lr = serializers.FloatField(min_value=0.0, default=LEARNING_RATE)
    dit_lr = serializers.FloatField(min_value=0.0, default=LEARNING_RATE)
    p_uncond = serializers.FloatField(min_value=0.0, max_value=1.0, default=P_UNCOND)
    log_every = serializers.IntegerField(min_value=0, default=50)


# Serializer for the metric battery.
class EvalSectionSerializer(StrictFieldsMixin, serializers.Serializer):
    extractor = serializers.ChoiceField(choices=EXTRACTOR_CHOICES, default="vae-pooled")
    feature_dim = serializers.IntegerField(min_value=1, default=FEATURE_DIM)
    ks = serializers.ListField(
        child=serializers.IntegerField(min_value=1), allow_empty=False, default=list(RECALL_KS)
    )
    probe_steps = serializers.IntegerField(min_value=1, default=300)
    max_videos = serializers.IntegerField(min_value=1, default=64)
    gate = serializers.BooleanField(default=False)
    gate_p = serializers.FloatField(min_value=0.0, max_value=1.0, default=ALIGNMENT_GATE_P)


# Serializer for a whole run configuration document.
class PipelineConfigSerializer(StrictFieldsMixin, serializers.Serializer):
    seed = serializers.IntegerField(min_value=0, default=DEFAULT_SEED)
    output_dir = serializers.CharField(allow_null=True, default=None)
    data = DataSectionSerializer()
    vae = VaeSectionSerializer()
    dit = DitSectionSerializer()
    diffusion = DiffusionSectionSerializer()
    train = TrainSectionSerializer()
    eval = EvalSectionSerializer()

    def validate(self, attrs: dict[str, Any]) -> dict[str, Any]:
        """
        Cross-section rules: the clip geometry must survive the autoencoder's
        compression and the patch must tile the resulting latent.
        """
        data, vae = attrs["data"], attrs["vae"]
        try:
            validate_clip_geometry(
                data["frames"], *data["size"], vae["temporal_compression"], vae["spatial_compression"]
            )
        except serializers.ValidationError as exc:
            raise serializers.ValidationError({"data": exc.detail})
        latent_extents = (
            (data["frames"] - 1) // vae["temporal_compression"] + 1,
            data["size"][0] // vae["spatial_compression"],
            data["size"][1] // vae["spatial_compression"],
        )
        try:
            validate_patch_fits(latent_extents, attrs["dit"]["patch_size"])
        except serializers.ValidationError as exc:
            raise serializers.ValidationError({"dit": exc.detail})
        return attrs
