from rest_framework import serializers


# Serializer for precision/recall/F1 of the token matching
class ReportSimilaritySerializer(serializers.Serializer):
    precision = serializers.FloatField()
    recall = serializers.FloatField()
    f1 = serializers.FloatField()


# Serializer for the metrics document written by evaluate and audit-privacy
class MetricsReportSerializer(serializers.Serializer):
    frechet = serializers.FloatField(allow_null=True)
    perceptual_mean = serializers.FloatField(allow_null=True)
    probe_alignment = serializers.FloatField(allow_null=True)
    alignment_p_value = serializers.FloatField(allow_null=True)
    alignment_metric = serializers.CharField()
    report_similarity = ReportSimilaritySerializer(allow_null=True)
    recall_at = serializers.DictField(child=serializers.FloatField())
    average_recall = serializers.FloatField(allow_null=True)
    extractor = serializers.CharField()
    generator = serializers.CharField()
    counts = serializers.DictField(child=serializers.IntegerField())
    errors = serializers.DictField(child=serializers.CharField())
    config = serializers.DictField()


# Serializer for the recall comparison of the privacy audit
class PrivacyAuditSerializer(serializers.Serializer):
    model = serializers.DictField(child=serializers.FloatField())
    copy_stub = serializers.DictField(child=serializers.FloatField())
    noise_stub = serializers.DictField(child=serializers.FloatField())
    average_recall = serializers.FloatField()
    stub_order_holds = serializers.BooleanField()
    extractor = serializers.CharField()
    videos = serializers.IntegerField()
