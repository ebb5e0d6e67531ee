# architecture/model.py
import logging
import math

import numpy as np

from apps.architecture.branches import BranchKind, Chain, residual_branches
from apps.architecture.config import BlockMode
from apps.architecture.layers import (
    block_forward,
    causal_mask,
    feed_forward,
    linear,
    multi_head_attention,
    sinusoid_table,
)
from apps.corpus.vocab import BOS_ID, EOS_ID, PAD_ID
from apps.exceptions import ConfigurationError, DataError, DimensionError
from apps.numerics import ops
from apps.numerics.tensor import Parameter

__all__ = ("INIT_SCHEME", "ATTENTION_PARAMS", "FEED_FORWARD_PARAMS", "Transformer")

logger = logging.getLogger(__name__)

INIT_SCHEME = {
    "linear": "xavier_uniform",
    "bias": "zeros",
    "embedding": "normal(0, d_model^-1/2)",
    "layer_norm": "gain=1, bias=0",
}

ATTENTION_PARAMS = ("wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo")
FEED_FORWARD_PARAMS = ("w1", "b1", "w2", "b2")


def _xavier_uniform(rng, fan_in, fan_out):
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


class Transformer:
    """
    post-LN / pre-LN / ADMIN 잔차 블록을 고를 수 있는 인코더-디코더

    params 는 이름 순서가 고정된 Parameter 사전이다. omegas [n_branches, d_model] 와
    branch_eps [n_branches] 는 학습되지 않는 가지별 상수로, omegas 는 admin 모드에서만,
    branch_eps 는 모든 모드의 가지 layer norm 에서 쓰인다.
    """

    def __init__(self, config, params, omegas=None, branch_eps=None, omega_profile=None):
        self.config = config
        self.params = params
        self.branches = residual_branches(config)
        dtype = config.np_dtype
        n_branches, d_model = config.n_branches, config.d_model
        self.omegas = np.ones((n_branches, d_model), dtype=dtype) if omegas is None else np.asarray(omegas, dtype)
        if self.omegas.shape != (n_branches, d_model):
            raise DimensionError(f"omegas shape {self.omegas.shape} 가 ({n_branches}, {d_model}) 와 다릅니다.")
        self.branch_eps = (
            np.full(n_branches, config.ln_eps, dtype=np.float64)
            if branch_eps is None
            else np.asarray(branch_eps, dtype=np.float64)
        )
        self.omega_profile = omega_profile
        self.positions = sinusoid_table(config.max_len, d_model).astype(dtype)
        self.training = False
        self.rng = None

    @classmethod
    def initialize(cls, config, seed):
        """기본(Xavier) 초기화. 같은 (config, seed) 는 같은 파라미터를 만든다."""
        rng = np.random.default_rng(seed)
        d, d_ff, dtype = config.d_model, config.d_ff, config.np_dtype
        values = {
            "src_embed": rng.normal(0.0, d**-0.5, size=(config.src_vocab_size, d)),
            "tgt_embed": rng.normal(0.0, d**-0.5, size=(config.tgt_vocab_size, d)),
        }

        def attention(prefix):
            for name in ("q", "k", "v", "o"):
                values[f"{prefix}.w{name}"] = _xavier_uniform(rng, d, d)
                values[f"{prefix}.b{name}"] = np.zeros(d)

        def ff(prefix):
            values[f"{prefix}.w1"] = _xavier_uniform(rng, d, d_ff)
            values[f"{prefix}.b1"] = np.zeros(d_ff)
            values[f"{prefix}.w2"] = _xavier_uniform(rng, d_ff, d)
            values[f"{prefix}.b2"] = np.zeros(d)

        for branch in residual_branches(config):
            if branch.is_attention:
                attention(branch.prefix)
            else:
                ff(branch.prefix)
            values[f"{branch.norm_prefix}.gain"] = np.ones(d)
            values[f"{branch.norm_prefix}.bias"] = np.zeros(d)
        if config.block_mode is BlockMode.PRELN:
            for stack in ("enc", "dec"):
                values[f"{stack}.final_ln.gain"] = np.ones(d)
                values[f"{stack}.final_ln.bias"] = np.zeros(d)
        if not config.tie_embeddings:
            values["out_proj.w"] = _xavier_uniform(rng, d, config.tgt_vocab_size)
        values["out_proj.b"] = np.zeros(config.tgt_vocab_size)

        params = {name: Parameter(value, name=name, dtype=dtype) for name, value in values.items()}
        logger.debug("%s %s 모델 초기화: 파라미터 %d 개", config.label, config.block_mode.value, len(params))
        return cls(config, params)

    # 상태

    @property
    def block_mode(self):
        return self.config.block_mode

    @property
    def dtype(self):
        return self.config.np_dtype

    def parameters(self):
        return list(self.params.values())

    def parameter_count(self):
        return int(sum(p.size for p in self.params.values()))

    def zero_grad(self):
        for param in self.params.values():
            param.zero_grad()

    def train(self, rng):
        self.training = True
        self.rng = rng
        return self

    def eval(self):
        self.training = False
        self.rng = None
        return self

    @property
    def dropout_rate(self):
        return self.config.dropout if self.training and self.rng is not None else 0.0

    def set_omegas(self, omegas, profile=None):
        """[n_branches] 스칼라 또는 [n_branches, d_model] ω 를 설정한다."""
        omegas = np.asarray(omegas, dtype=np.float64)
        if omegas.ndim == 1:
            omegas = np.repeat(omegas[:, None], self.config.d_model, axis=1)
        if omegas.shape != self.omegas.shape:
            raise DimensionError(f"ω shape {omegas.shape} 가 {self.omegas.shape} 와 다릅니다.")
        if not np.all(omegas > 0):
            raise ConfigurationError("ω 는 모두 양수여야 합니다.")
        self.omegas = omegas.astype(self.dtype)
        self.omega_profile = profile

    def _sub(self, prefix, names):
        return {name: self.params[f"{prefix}.{name}"] for name in names}

    def _norm(self, prefix):
        return self.params[f"{prefix}.gain"], self.params[f"{prefix}.bias"]

    # forward

    def embed(self, tokens, side):
        """토큰 임베딩 × sqrt(d_model) + 위치 인코딩. tokens 는 [L] 또는 [B, L]."""
        ids = np.asarray(tokens, dtype=np.int64)
        length = ids.shape[-1]
        if length > self.config.max_len:
            raise ConfigurationError(f"시퀀스 길이 {length} 가 max_len {self.config.max_len} 을 넘습니다.")
        if side not in ("src", "tgt"):
            raise ConfigurationError(f"side 는 src 또는 tgt 여야 합니다: {side}")
        table = self.params[f"{side}_embed"]
        x = ops.mul(ops.embedding(table, ids), math.sqrt(self.config.d_model))
        x = ops.add(x, self.positions[:length])
        return ops.dropout(x, self.dropout_rate, self.rng)

    def _block(self, x, branch, branch_fn, token_mask, observer):
        gain, bias = self._norm(branch.norm_prefix)
        on_output = None
        if observer is not None:

            def on_output(output):
                observer(branch, output, token_mask)

        return block_forward(
            x,
            branch_fn,
            self.block_mode,
            gain,
            bias,
            float(self.branch_eps[branch.index]),
            omega=self.omegas[branch.index],
            dropout=self.dropout_rate,
            rng=self.rng,
            on_output=on_output,
        )

    def _attention_fn(self, branch, memory=None, mask=None):
        proj = self._sub(branch.prefix, ATTENTION_PARAMS)
        heads = self.config.n_heads

        def attend(x):
            source = x if memory is None else memory
            return multi_head_attention(x, source, source, proj, heads, mask=mask)

        return attend

    def _ff_fn(self, branch):
        proj = self._sub(branch.prefix, FEED_FORWARD_PARAMS)
        return lambda x: feed_forward(x, proj)

    def encode(self, src, observer=None):
        """src [B, Ls] -> [B, Ls, d]. pad 는 key 에서 가려진다."""
        src = np.asarray(src, dtype=np.int64)
        src_mask = src != PAD_ID
        key_mask = src_mask[:, None, :]
        x = self.embed(src, "src")
        for branch in self.branches:
            if branch.chain is not Chain.ENCODER:
                break
            if branch.kind is BranchKind.SELF_ATTENTION:
                fn = self._attention_fn(branch, mask=key_mask)
            else:
                fn = self._ff_fn(branch)
            x = self._block(x, branch, fn, src_mask, observer)
        if self.block_mode is BlockMode.PRELN:
            x = ops.layer_norm(x, *self._norm("enc.final_ln"), self.config.ln_eps)
        return x

    def decode(self, tgt_in, memory, src, observer=None):
        """tgt_in [B, Lt], memory [B, Ls, d] -> logits [B, Lt, V]"""
        tgt_in = np.asarray(tgt_in, dtype=np.int64)
        src = np.asarray(src, dtype=np.int64)
        tgt_mask = tgt_in != PAD_ID
        self_mask = causal_mask(tgt_in.shape[1])[None] & tgt_mask[:, None, :]
        cross_mask = (src != PAD_ID)[:, None, :]
        x = self.embed(tgt_in, "tgt")
        for branch in self.branches:
            if branch.chain is not Chain.DECODER:
                continue
            if branch.kind is BranchKind.MASKED_SELF_ATTENTION:
                fn = self._attention_fn(branch, mask=self_mask)
            elif branch.kind is BranchKind.CROSS_ATTENTION:
                fn = self._attention_fn(branch, memory=memory, mask=cross_mask)
            else:
                fn = self._ff_fn(branch)
            x = self._block(x, branch, fn, tgt_mask, observer)
        if self.block_mode is BlockMode.PRELN:
            x = ops.layer_norm(x, *self._norm("dec.final_ln"), self.config.ln_eps)
        return self.project(x)

    def project(self, x):
        if self.config.tie_embeddings:
            weight = ops.transpose(self.params["tgt_embed"], (1, 0))
        else:
            weight = self.params["out_proj.w"]
        return linear(x, weight, self.params["out_proj.b"])

    def forward(self, batch, observer=None):
        memory = self.encode(batch.src, observer)
        return self.decode(batch.tgt_in, memory, batch.src, observer)

    def loss(self, batch, smoothing=None, reduction="mean"):
        smoothing = self.config.label_smoothing if smoothing is None else smoothing
        return ops.cross_entropy_ls(self.forward(batch), batch.labels, smoothing, PAD_ID, reduction)

    def encoder_forward(self, src):
        """단일 시퀀스 [Ls] -> [Ls, d]"""
        out = self.encode(np.asarray(src, dtype=np.int64)[None])
        return ops.reshape(out, out.shape[1:])

    def decoder_forward(self, tgt_in, memory, src=None):
        """단일 시퀀스 [Lt] + 인코더 출력 [Ls, d] -> logits [Lt, V]"""
        if src is None:
            # pad 가 없다고 보고 모든 위치를 연다
            src = np.full(memory.shape[0], EOS_ID, dtype=np.int64)
        memory = ops.reshape(memory, (1,) + memory.shape)
        logits = self.decode(np.asarray(tgt_in, dtype=np.int64)[None], memory, np.asarray(src)[None])
        return ops.reshape(logits, logits.shape[1:])

    # 추론

    def greedy_decode(self, src, max_len):
        """src 본문 토큰 id 목록 -> 생성된 본문 토큰 id 목록 (eos 제외)"""
        return self.greedy_decode_batch([src], max_len)[0]

    def greedy_decode_batch(self, sources, max_len):
        """
        argmax 를 한 토큰씩 붙여 가며 eos(또는 pad) 가 나오거나 max_len 에 이르면 멈춘다.

        source 끝에는 eos 를 붙이며, max_len 은 config.max_len 을 넘지 않도록 자른다.
        """
        if max_len <= 0:
            raise ConfigurationError(f"max_len 은 양수여야 합니다: {max_len}")
        if not sources:
            return []
        longest = max(len(src) for src in sources)
        if longest + 1 > self.config.max_len:
            raise DataError(
                f"source 길이 {longest} 에 eos 를 붙이면 모델 max_len {self.config.max_len} 을 넘습니다 "
                f"(source 는 최대 {self.config.max_len - 1} 토큰)."
            )
        max_len = min(max_len, self.config.max_len)
        rows = [list(src) + [EOS_ID] for src in sources]
        width = max(len(row) for row in rows)
        src = np.full((len(rows), width), PAD_ID, dtype=np.int64)
        for i, row in enumerate(rows):
            src[i, : len(row)] = row

        was_training, rng = self.training, self.rng
        self.eval()
        try:
            memory = self.encode(src)
            tgt = np.full((len(rows), 1), BOS_ID, dtype=np.int64)
            done = np.zeros(len(rows), dtype=bool)
            outputs = [[] for _ in rows]
            for _ in range(max_len):
                logits = self.decode(tgt, memory, src).data[:, -1]
                step = logits.argmax(axis=-1)
                for i, token in enumerate(step):
                    if done[i]:
                        continue
                    if token in (EOS_ID, PAD_ID):
                        done[i] = True
                    else:
                        outputs[i].append(int(token))
                if done.all():
                    break
                step = np.where(done, PAD_ID, step)
                tgt = np.concatenate([tgt, step[:, None]], axis=1)
        finally:
            if was_training:
                self.train(rng)
        return outputs
