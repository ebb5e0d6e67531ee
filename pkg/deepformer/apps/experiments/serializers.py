import re

from django.conf import settings
from rest_framework import serializers

from apps.admin_init.serializers import OmegaProfileSerializer
from apps.architecture.config import DTYPES
from apps.corpus.tasks import TaskKind
from apps.corpus.vocab import MIN_VOCAB_SIZE

CELL_PATTERN = re.compile(r"^(\d+)L-(\d+)L(?::(default|admin))?$")
INIT_MODES = ("default", "admin")


class CommaListField(serializers.Field):
    """INI 의 "a, b, c" 문자열이나 JSON 목록을 문자열 목록으로 받는다."""

    def to_internal_value(self, data):
        if isinstance(data, str):
            return [item.strip() for item in data.split(",") if item.strip()]
        if isinstance(data, list):
            return [str(item).strip() for item in data]
        raise serializers.ValidationError("쉼표로 구분한 문자열이나 목록이어야 합니다.")

    def to_representation(self, value):
        return list(value)


class ModelSectionSerializer(serializers.Serializer):
    preset = serializers.CharField(default="desk")
    n_enc_layers = serializers.IntegerField(min_value=1, default=6)
    n_dec_layers = serializers.IntegerField(min_value=1, default=6)
    d_model = serializers.IntegerField(min_value=1, required=False)
    d_ff = serializers.IntegerField(min_value=1, required=False)
    n_heads = serializers.IntegerField(min_value=1, required=False)
    block_mode = serializers.ChoiceField(choices=("postln", "preln"), default="postln")
    dropout = serializers.FloatField(min_value=0.0, max_value=0.99, required=False)
    label_smoothing = serializers.FloatField(min_value=0.0, max_value=0.99, required=False)
    max_len = serializers.IntegerField(min_value=2, required=False)
    ln_eps = serializers.FloatField(min_value=0.0, required=False)
    tie_embeddings = serializers.BooleanField(default=False)

    def validate_preset(self, value):
        """settings 의 모델 프리셋 이름"""
        if value not in settings.DEEPFORMER["MODEL_PRESETS"]:
            raise serializers.ValidationError(f"알 수 없는 모델 프리셋입니다: {value}")
        return value

    def validate(self, data):
        preset = settings.DEEPFORMER["MODEL_PRESETS"][data["preset"]]
        d_model = data.get("d_model", preset["d_model"])
        n_heads = data.get("n_heads", preset["n_heads"])
        if d_model % n_heads:
            raise serializers.ValidationError(f"d_model {d_model} 은 n_heads {n_heads} 로 나누어떨어져야 합니다.")
        return data


class ScheduleSectionSerializer(serializers.Serializer):
    preset = serializers.CharField(required=False)
    warmup_steps = serializers.IntegerField(min_value=1, required=False)
    peak_lr = serializers.FloatField(required=False)

    def validate_preset(self, value):
        if value not in settings.DEEPFORMER["SCHEDULE_PRESETS"]:
            raise serializers.ValidationError(f"알 수 없는 스케줄 프리셋입니다: {value}")
        return value

    def validate_peak_lr(self, value):
        """peak_lr 는 양수"""
        if not value > 0:
            raise serializers.ValidationError("peak_lr 는 양수여야 합니다.")
        return value

    def validate(self, data):
        if "preset" not in data and not {"warmup_steps", "peak_lr"} <= set(data):
            data["preset"] = "fr"
        return data


class TaskSectionSerializer(serializers.Serializer):
    kind = serializers.ChoiceField(choices=[kind.value for kind in TaskKind], required=False)
    vocab_size = serializers.IntegerField(min_value=MIN_VOCAB_SIZE, required=False)
    min_len = serializers.IntegerField(min_value=1, required=False)
    max_len = serializers.IntegerField(min_value=1, required=False)
    permutation_seed = serializers.IntegerField(min_value=0, required=False, allow_null=True)
    train_size = serializers.IntegerField(min_value=1, required=False)
    dev_size = serializers.IntegerField(min_value=0, required=False)
    test_size = serializers.IntegerField(min_value=0, required=False)
    # 코퍼스 생성 seed (학습 seed 와 따로 둔다)
    seed = serializers.IntegerField(min_value=0, default=0)

    def validate(self, data):
        values = {**settings.DEEPFORMER["TASK"], **data}
        if values["max_len"] < values["min_len"]:
            raise serializers.ValidationError(f"max_len {values['max_len']} 이 min_len {values['min_len']} 보다 작습니다.")
        return data


class RunSectionSerializer(serializers.Serializer):
    init = serializers.ChoiceField(choices=INIT_MODES, default="default")
    seed = serializers.IntegerField(min_value=0, default=0)
    epochs = serializers.IntegerField(min_value=0, default=10)
    token_budget = serializers.IntegerField(min_value=1, required=False)
    accumulation = serializers.IntegerField(min_value=1, default=1)
    clip_norm = serializers.FloatField(required=False, allow_null=True)
    profiling_tokens = serializers.IntegerField(min_value=1, required=False)
    per_feature = serializers.BooleanField(default=False)
    explosion_factor = serializers.FloatField(required=False)
    patience = serializers.IntegerField(min_value=1, required=False)
    dtype = serializers.ChoiceField(choices=tuple(DTYPES), default="float32")
    out = serializers.CharField(required=False, allow_blank=False)

    def validate_clip_norm(self, value):
        """clip_norm 은 꺼져 있거나(null) 양수"""
        if value is not None and not value > 0:
            raise serializers.ValidationError("clip_norm 은 양수여야 합니다.")
        return value

    def validate_explosion_factor(self, value):
        if not value > 1:
            raise serializers.ValidationError("explosion_factor 는 1 보다 커야 합니다.")
        return value


class SweepSectionSerializer(serializers.Serializer):
    cells = CommaListField()
    seeds = CommaListField(required=False)

    def validate_cells(self, value):
        """"8L-2L:admin" 꼴의 셀 목록"""
        if not value:
            raise serializers.ValidationError("셀이 하나 이상 필요합니다.")
        cells = []
        for item in value:
            match = CELL_PATTERN.match(item)
            if match is None:
                raise serializers.ValidationError(f"셀 형식이 잘못되었습니다 (예: 8L-2L:admin): {item}")
            n_enc, n_dec, init = int(match[1]), int(match[2]), match[3] or "default"
            if n_enc < 1 or n_dec < 1:
                raise serializers.ValidationError(f"층 수는 1 이상이어야 합니다: {item}")
            cells.append(f"{n_enc}L-{n_dec}L:{init}")
        if len(set(cells)) != len(cells):
            raise serializers.ValidationError("같은 셀이 두 번 나옵니다.")
        return cells

    def validate_seeds(self, value):
        try:
            seeds = [int(item) for item in value]
        except ValueError:
            raise serializers.ValidationError(f"seed 는 정수여야 합니다: {value}")
        if not seeds or any(seed < 0 for seed in seeds):
            raise serializers.ValidationError("seed 는 0 이상 정수 하나 이상이어야 합니다.")
        return seeds


class RunConfigSerializer(serializers.Serializer):
    model = ModelSectionSerializer()
    schedule = ScheduleSectionSerializer()
    task = TaskSectionSerializer()
    run = RunSectionSerializer()
    sweep = SweepSectionSerializer(required=False)

    def validate(self, data):
        max_len = data["model"].get("max_len", settings.DEEPFORMER["MAX_LEN"])
        task_max_len = data["task"].get("max_len", settings.DEEPFORMER["TASK"]["max_len"])
        # bos/eos 가 붙은 문장이 위치 표에 들어가야 한다
        if max_len < task_max_len + 1:
            raise serializers.ValidationError(f"model.max_len {max_len} 은 task.max_len + 1 이상이어야 합니다.")
        if data["run"]["init"] == "admin" and data["model"]["block_mode"] != "postln":
            raise serializers.ValidationError("admin 초기화는 post-LN 블록에만 쓸 수 있습니다.")
        return data


class ParameterEntrySerializer(serializers.Serializer):
    name = serializers.CharField()
    shape = serializers.ListField(child=serializers.IntegerField(min_value=0))
    offset = serializers.IntegerField(min_value=0)
    count = serializers.IntegerField(min_value=0)


class CheckpointSerializer(serializers.Serializer):
    format_version = serializers.IntegerField(min_value=1)
    endianness = serializers.ChoiceField(choices=("little",))
    float_width = serializers.ChoiceField(choices=(32, 64))
    init_mode = serializers.ChoiceField(choices=INIT_MODES)
    init_scheme = serializers.DictField(child=serializers.CharField())
    step = serializers.IntegerField(min_value=0)
    config = serializers.DictField()
    vocab = serializers.ListField(child=serializers.CharField(), min_length=MIN_VOCAB_SIZE)
    branch_eps = serializers.ListField(child=serializers.FloatField(min_value=0.0))
    omegas = serializers.JSONField(allow_null=True)
    omega_profile = OmegaProfileSerializer(required=False, allow_null=True)
    parameters = ParameterEntrySerializer(many=True)
    run_config = serializers.DictField(required=False, allow_null=True)

    def validate(self, data):
        expected = 0
        for entry in data["parameters"]:
            count = 1
            for extent in entry["shape"]:
                count *= extent
            if entry["count"] != count or entry["offset"] != expected:
                raise serializers.ValidationError(f"파라미터 색인이 맞지 않습니다: {entry['name']}")
            expected += count
        return data
