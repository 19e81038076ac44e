from rest_framework import serializers

from config.constants import SPLIT_NAMES
from dit.vocabulary import VOCABULARY
from mixins import StrictFieldsMixin


# Serializer for one line of the dataset manifest.
class ManifestRecordSerializer(StrictFieldsMixin, serializers.Serializer):
    id = serializers.CharField(max_length=64)
    video_path = serializers.CharField()
    report = serializers.CharField(allow_blank=True)
    token_ids = serializers.ListField(
        child=serializers.IntegerField(min_value=0, max_value=len(VOCABULARY) - 1)
    )
    split = serializers.ChoiceField(choices=SPLIT_NAMES, allow_null=True, default=None)
    min_vessel_area_ratio = serializers.FloatField(
        min_value=0.0, max_value=1.0, allow_null=True, default=None
    )
    kept = serializers.BooleanField(default=True)
    note = serializers.CharField(allow_blank=True, default="")
