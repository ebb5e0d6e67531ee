import numbers

from rest_framework import serializers


def _is_number(value):
    return isinstance(value, numbers.Real) and not isinstance(value, bool)


def _flatten(values, field):
    """스칼라 목록 또는 특성별 벡터 목록을 검사하고 모든 원소를 돌려준다."""
    if not isinstance(values, list):
        raise serializers.ValidationError(f"{field} 는 목록이어야 합니다.")
    flat = []
    for value in values:
        if isinstance(value, list):
            if not value or not all(_is_number(v) for v in value):
                raise serializers.ValidationError(f"{field} 의 벡터 원소는 숫자여야 합니다.")
            flat.extend(value)
        elif _is_number(value):
            flat.append(value)
        else:
            raise serializers.ValidationError(f"{field} 의 원소는 숫자 또는 숫자 목록이어야 합니다.")
    return flat


class ChainLayoutSerializer(serializers.Serializer):
    encoder = serializers.IntegerField(min_value=2)
    decoder = serializers.IntegerField(min_value=3)

    def validate_encoder(self, value):
        if value % 2:
            raise serializers.ValidationError("인코더 가지 수는 2N 이어야 합니다.")
        return value

    def validate_decoder(self, value):
        if value % 3:
            raise serializers.ValidationError("디코더 가지 수는 3M 이어야 합니다.")
        return value


class OmegaProfileSerializer(serializers.Serializer):
    branch_variances = serializers.JSONField()
    omegas = serializers.JSONField()
    profiling_tokens = serializers.IntegerField(min_value=0)
    chain_layout = ChainLayoutSerializer()

    def validate_branch_variances(self, value):
        """분산은 음수가 아니어야 한다"""
        if any(v < 0 for v in _flatten(value, "branch_variances")):
            raise serializers.ValidationError("분산은 음수일 수 없습니다.")
        return value

    def validate_omegas(self, value):
        """ω 는 양수여야 한다"""
        if any(v <= 0 for v in _flatten(value, "omegas")):
            raise serializers.ValidationError("ω 는 모두 양수여야 합니다.")
        return value

    def validate(self, data):
        layout = data["chain_layout"]
        n_branches = layout["encoder"] + layout["decoder"]
        if len(data["branch_variances"]) != n_branches:
            raise serializers.ValidationError(
                f"branch_variances 길이 {len(data['branch_variances'])} 가 가지 수 {n_branches} 와 다릅니다."
            )
        if data["omegas"] and len(data["omegas"]) != n_branches:
            raise serializers.ValidationError(f"omegas 길이 {len(data['omegas'])} 가 가지 수 {n_branches} 와 다릅니다.")
        return data
