from rest_framework import serializers

from apps.evalmetrics.fine_grained import FREQUENCY_BUCKETS, LENGTH_BUCKETS


class BootstrapSerializer(serializers.Serializer):
    score_a = serializers.FloatField()
    score_b = serializers.FloatField()
    p_value = serializers.FloatField(min_value=0.0, max_value=1.0)
    win_rate = serializers.FloatField(min_value=0.0, max_value=1.0)
    tie_rate = serializers.FloatField(min_value=0.0, max_value=1.0)
    n_samples = serializers.IntegerField(min_value=1)
    seed = serializers.IntegerField()
    significance_level = serializers.FloatField(min_value=0.0, max_value=1.0)
    significant = serializers.BooleanField(required=False)


class EvalReportSerializer(serializers.Serializer):
    bleu = serializers.FloatField(min_value=0.0, max_value=100.0)
    precisions = serializers.ListField(child=serializers.FloatField(min_value=0.0), min_length=4, max_length=4)
    brevity_penalty = serializers.FloatField(min_value=0.0, max_value=1.0)
    hyp_len = serializers.IntegerField(min_value=0)
    ref_len = serializers.IntegerField(min_value=0)
    counts = serializers.ListField(child=serializers.IntegerField(min_value=0), min_length=4, max_length=4)
    totals = serializers.ListField(child=serializers.IntegerField(min_value=0), min_length=4, max_length=4)
    sentence_bleu = serializers.ListField(child=serializers.FloatField(min_value=0.0), required=False)
    word_accuracy = serializers.DictField(child=serializers.DictField(), required=False)
    length_bleu = serializers.DictField(child=serializers.DictField(), required=False)
    bootstrap = BootstrapSerializer(required=False, allow_null=True)

    def validate_word_accuracy(self, value):
        """빈도 구간 이름 검사"""
        unknown = set(value) - {name for name, _, _ in FREQUENCY_BUCKETS}
        if unknown:
            raise serializers.ValidationError(f"알 수 없는 빈도 구간입니다: {sorted(unknown)}")
        return value

    def validate_length_bleu(self, value):
        """길이 구간 이름 검사"""
        unknown = set(value) - {name for name, _, _ in LENGTH_BUCKETS}
        if unknown:
            raise serializers.ValidationError(f"알 수 없는 길이 구간입니다: {sorted(unknown)}")
        return value

    def validate(self, data):
        if any(c > t for c, t in zip(data["counts"], data["totals"])):
            raise serializers.ValidationError("맞은 n-gram 수가 전체 n-gram 수보다 많습니다.")
        return data
