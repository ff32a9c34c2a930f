"""Tiny byte-level transformer encoder with a scalar regression head.

Parameters are split into two named groups.  ``encoder`` holds the token and
position embeddings, the embedding layer norm and every transformer layer;
``head`` holds the two dense layers of the regression head.  Freezing a group
flips ``requires_grad`` on all of its tensors, so backward never produces a
gradient for it.

Parameter count for a config with vocab V, d_model D, max_len L, d_ff F,
n_layers N and head_hidden_dim H::

    encoder = V*D + L*D + 2*D + N * (4*(D*D + D) + 2*D + D*F + F + F*D + D + 2*D)
    head    = (D*H + H) + (H*1 + 1)

Checkpoints are ``.npz`` archives (no pickling): ``__format__`` holds the
string ``hefitlab-checkpoint/1``, ``__config__`` the JSON-encoded
:class:`ModelConfig`, ``__trainable__`` a JSON map of group trainability, and
every other key is a parameter name mapped to its float64 array.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import InputError, ParameterError
from .optim import Adam
from .tokenizer import BYTE_OFFSET, MASK, PAD, VOCAB_SIZE, TokenSequence, tokenize_batch

GROUPS = ("encoder", "head")
INIT_STD = 0.02
CHECKPOINT_FORMAT = "hefitlab-checkpoint/1"
_MASK_VALUE = -1e9


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int = VOCAB_SIZE
    d_model: int = 64
    n_layers: int = 2
    n_heads: int = 4
    d_ff: int = 128
    max_len: int = 64
    head_hidden_dim: int = 64
    head_dropout_p: float = 0.0

    def __post_init__(self) -> None:
        if self.vocab_size != VOCAB_SIZE:
            raise ParameterError(f"vocab_size must be {VOCAB_SIZE} for byte tokens, got {self.vocab_size}")
        for name in ("d_model", "n_layers", "n_heads", "d_ff", "head_hidden_dim"):
            if getattr(self, name) < 1:
                raise ParameterError(f"{name} must be positive")
        if self.d_model % self.n_heads:
            raise ParameterError(f"d_model={self.d_model} is not divisible by n_heads={self.n_heads}")
        if self.max_len < 2:
            raise ParameterError("max_len must be >= 2 (CLS plus one byte)")
        if not 0.0 <= self.head_dropout_p < 1.0:
            raise ParameterError(f"head_dropout_p must be in [0, 1), got {self.head_dropout_p}")

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        return cls(**data)

    def to_dict(self) -> dict:
        return asdict(self)


def parameter_count(config: ModelConfig) -> dict[str, int]:
    """Closed-form scalar count per group (see module docstring)."""
    V, D, L, F, N, H = (
        config.vocab_size,
        config.d_model,
        config.max_len,
        config.d_ff,
        config.n_layers,
        config.head_hidden_dim,
    )
    per_layer = 4 * (D * D + D) + 2 * D + D * F + F + F * D + D + 2 * D
    encoder = V * D + L * D + 2 * D + N * per_layer
    head = (D * H + H) + (H * 1 + 1)
    return {"encoder": encoder, "head": head, "total": encoder + head}


@dataclass
class ParameterGroup:
    name: str
    tensors: dict[str, Tensor]
    trainable: bool


class RegressionModel:
    def __init__(self, config: ModelConfig, params: dict[str, Tensor]) -> None:
        self.config = config
        self.params = params
        self._trainable = {g: True for g in GROUPS}
        for g in GROUPS:
            self.set_trainable(g, True)

    # -- parameter groups -------------------------------------------------

    def group_of(self, name: str) -> str:
        return name.split(".", 1)[0]

    def parameter_groups(self) -> list[ParameterGroup]:
        return [
            ParameterGroup(g, {n: t for n, t in self.params.items() if self.group_of(n) == g}, self._trainable[g])
            for g in GROUPS
        ]

    def set_trainable(self, group: str, flag: bool) -> None:
        if group not in GROUPS:
            raise ParameterError(f"unknown parameter group {group!r}; expected one of {GROUPS}")
        self._trainable[group] = bool(flag)
        for name, t in self.params.items():
            if self.group_of(name) == group:
                t.requires_grad = bool(flag)
                if not flag:
                    t.grad = None

    def is_trainable(self, group: str) -> bool:
        return self._trainable[group]

    def trainable_params(self) -> dict[str, Tensor]:
        return {n: t for n, t in self.params.items() if t.requires_grad}

    def zero_grad(self) -> None:
        for t in self.params.values():
            t.grad = None

    # -- state ------------------------------------------------------------

    def with_head_dropout(self, p: float) -> "RegressionModel":
        """Set the head hidden-layer dropout probability in place."""
        self.config = replace(self.config, head_dropout_p=p)
        return self

    def state_dict(self) -> dict[str, np.ndarray]:
        return {n: t.data.copy() for n, t in self.params.items()}

    def load_state(self, state: dict[str, np.ndarray], group: str | None = None) -> None:
        """Copy arrays into this model; restrict to one group if ``group`` is given."""
        names = [n for n in self.params if group is None or self.group_of(n) == group]
        for n in names:
            if n not in state:
                raise InputError(f"state is missing parameter {n}")
            arr = np.asarray(state[n], dtype=np.float64)
            if arr.shape != self.params[n].shape:
                raise InputError(f"shape mismatch for {n}: {arr.shape} vs {self.params[n].shape}")
            self.params[n].data = arr.copy()

    def copy(self) -> "RegressionModel":
        clone = RegressionModel(self.config, {n: Tensor(t.data.copy()) for n, t in self.params.items()})
        for g in GROUPS:
            clone.set_trainable(g, self._trainable[g])
        return clone

    def num_parameters(self) -> int:
        return sum(t.data.size for t in self.params.values())

    def __deepcopy__(self, memo):
        return self.copy()


def init_model(config: ModelConfig, seed: int) -> RegressionModel:
    """Normal(0, 0.02) weights, zero biases, unit layer-norm gains."""
    rng = np.random.default_rng(seed)
    D, F, H = config.d_model, config.d_ff, config.head_hidden_dim
    specs: list[tuple[str, tuple[int, ...], str]] = [
        ("encoder.tok_emb", (config.vocab_size, D), "normal"),
        ("encoder.pos_emb", (config.max_len, D), "normal"),
        ("encoder.emb_ln.gamma", (D,), "ones"),
        ("encoder.emb_ln.beta", (D,), "zeros"),
    ]
    for i in range(config.n_layers):
        pre = f"encoder.layers.{i}"
        for proj in ("q", "k", "v", "o"):
            specs.append((f"{pre}.attn.w{proj}", (D, D), "normal"))
            specs.append((f"{pre}.attn.b{proj}", (D,), "zeros"))
        specs += [
            (f"{pre}.ln1.gamma", (D,), "ones"),
            (f"{pre}.ln1.beta", (D,), "zeros"),
            (f"{pre}.ff.w1", (D, F), "normal"),
            (f"{pre}.ff.b1", (F,), "zeros"),
            (f"{pre}.ff.w2", (F, D), "normal"),
            (f"{pre}.ff.b2", (D,), "zeros"),
            (f"{pre}.ln2.gamma", (D,), "ones"),
            (f"{pre}.ln2.beta", (D,), "zeros"),
        ]
    specs += [
        ("head.w1", (D, H), "normal"),
        ("head.b1", (H,), "zeros"),
        ("head.w2", (H, 1), "normal"),
        ("head.b2", (1,), "zeros"),
    ]
    params: dict[str, Tensor] = {}
    for name, shape, kind in specs:
        if kind == "normal":
            data = rng.normal(0.0, INIT_STD, size=shape)
        elif kind == "ones":
            data = np.ones(shape)
        else:
            data = np.zeros(shape)
        params[name] = Tensor(data, requires_grad=True)
    return RegressionModel(config, params)


# ---------------------------------------------------------------------------
# forward
# ---------------------------------------------------------------------------


def _as_ids(model: RegressionModel, tokens) -> np.ndarray:
    if isinstance(tokens, TokenSequence):
        ids = np.asarray([tokens.ids], dtype=np.int64)
    else:
        ids = np.asarray(tokens)
        if ids.ndim == 1:
            ids = ids[None, :]
    if ids.ndim != 2 or ids.shape[1] == 0:
        raise InputError(f"token ids must be a (batch, length) array, got shape {ids.shape}")
    if not np.issubdtype(ids.dtype, np.integer):
        raise InputError("token ids must be integers")
    if ids.shape[1] > model.config.max_len:
        raise InputError(f"sequence length {ids.shape[1]} exceeds max_len {model.config.max_len}")
    if ids.min() < 0 or ids.max() >= model.config.vocab_size:
        raise InputError(f"token id outside [0, {model.config.vocab_size})")
    valid = ids != PAD
    if not valid.any(axis=1).all():
        raise InputError("every sequence needs at least one non-PAD token")
    # trailing all-PAD columns are masked everywhere, drop them
    last = int(np.flatnonzero(valid.any(axis=0)).max()) + 1
    return ids[:, :last]


def _linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    return ad.add(ad.matmul(x, w), b)


def _split_heads(x: Tensor, B: int, T: int, n_heads: int) -> Tensor:
    dh = x.shape[-1] // n_heads
    return ad.transpose(ad.reshape(x, (B, T, n_heads, dh)), (0, 2, 1, 3))


def encode_hidden(model: RegressionModel, ids: np.ndarray) -> tuple[Tensor, np.ndarray]:
    """Final-layer hidden states ``(B, T, D)`` and the non-PAD mask ``(B, T)``."""
    ids = _as_ids(model, ids)
    cfg, p = model.config, model.params
    B, T = ids.shape
    valid = ids != PAD
    positions = np.broadcast_to(np.arange(T), (B, T))
    x = ad.add(ad.embedding(p["encoder.tok_emb"], ids), ad.embedding(p["encoder.pos_emb"], positions))
    x = ad.layer_norm(x, p["encoder.emb_ln.gamma"], p["encoder.emb_ln.beta"])
    key_mask = np.where(valid, 0.0, _MASK_VALUE)[:, None, None, :]
    dh = cfg.d_model // cfg.n_heads
    for i in range(cfg.n_layers):
        pre = f"encoder.layers.{i}"
        q = _split_heads(_linear(x, p[f"{pre}.attn.wq"], p[f"{pre}.attn.bq"]), B, T, cfg.n_heads)
        k = _split_heads(_linear(x, p[f"{pre}.attn.wk"], p[f"{pre}.attn.bk"]), B, T, cfg.n_heads)
        v = _split_heads(_linear(x, p[f"{pre}.attn.wv"], p[f"{pre}.attn.bv"]), B, T, cfg.n_heads)
        scores = ad.scale(ad.matmul(q, ad.transpose(k, (0, 1, 3, 2))), 1.0 / math.sqrt(dh))
        attn = ad.matmul(ad.softmax(scores, key_mask), v)
        attn = ad.reshape(ad.transpose(attn, (0, 2, 1, 3)), (B, T, cfg.d_model))
        x = ad.layer_norm(
            ad.add(x, _linear(attn, p[f"{pre}.attn.wo"], p[f"{pre}.attn.bo"])),
            p[f"{pre}.ln1.gamma"],
            p[f"{pre}.ln1.beta"],
        )
        ff = _linear(ad.gelu(_linear(x, p[f"{pre}.ff.w1"], p[f"{pre}.ff.b1"])), p[f"{pre}.ff.w2"], p[f"{pre}.ff.b2"])
        x = ad.layer_norm(ad.add(x, ff), p[f"{pre}.ln2.gamma"], p[f"{pre}.ln2.beta"])
    return x, valid


def encode(model: RegressionModel, tokens) -> Tensor:
    """Mean of the final hidden states over non-PAD positions, shape ``(B, D)``."""
    hidden, valid = encode_hidden(model, tokens)
    return ad.mean_pool(hidden, valid)


def forward(
    model: RegressionModel,
    tokens,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> Tensor:
    """Raw regression scores ``(B,)``: dense -> tanh -> dropout -> dense(1)."""
    p = model.params
    pooled = encode(model, tokens)
    h = ad.tanh(_linear(pooled, p["head.w1"], p["head.b1"]))
    h = ad.dropout(h, model.config.head_dropout_p, training, rng)
    out = _linear(h, p["head.w2"], p["head.b2"])
    return ad.reshape(out, (out.shape[0],))


def predict(model: RegressionModel, tokens) -> float:
    """Eval-mode score for a single token sequence."""
    with ad.no_grad():
        out = forward(model, tokens, training=False)
    if out.shape[0] != 1:
        raise InputError("predict takes one sequence; use predict_batch for several")
    return float(out.data[0])


def predict_batch(model: RegressionModel, ids: np.ndarray, batch_size: int = 64) -> np.ndarray:
    ids = np.asarray(ids)
    out = np.empty(ids.shape[0])
    with ad.no_grad():
        for start in range(0, ids.shape[0], batch_size):
            out[start : start + batch_size] = forward(model, ids[start : start + batch_size]).data
    return out


def predict_texts(model: RegressionModel, texts: Sequence[str], batch_size: int = 64) -> np.ndarray:
    return predict_batch(model, tokenize_batch(texts, model.config.max_len), batch_size)


# ---------------------------------------------------------------------------
# masked-LM pretraining
# ---------------------------------------------------------------------------


def _mask_batch(ids: np.ndarray, mask_prob: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    maskable = ids >= BYTE_OFFSET
    chosen = maskable & (rng.random(ids.shape) < mask_prob)
    if not chosen.any():
        candidates = np.flatnonzero(maskable)
        chosen.flat[candidates[rng.integers(len(candidates))]] = True
    masked = ids.copy()
    masked[chosen] = MASK
    return masked, chosen


def pretrain(
    model: RegressionModel,
    corpus: Sequence[str],
    steps: int,
    mask_prob: float = 0.15,
    seed: int = 0,
    lr: float = 1e-3,
    batch_size: int = 16,
) -> list[float]:
    """Masked-byte language modelling on ``corpus``; returns the per-step loss.

    Only the encoder group and a temporary output layer are updated; the output
    layer is thrown away afterwards.  Masked positions are replaced by MASK.
    """
    texts = [t for t in corpus if t.encode("utf-8")]
    if not texts:
        raise InputError("pretraining corpus is empty")
    if not 0.0 < mask_prob < 1.0:
        raise ParameterError(f"mask_prob must be in (0, 1), got {mask_prob}")
    if steps < 0:
        raise ParameterError("steps must be non-negative")
    cfg = model.config
    rng = np.random.default_rng(seed)
    ids_all = tokenize_batch(texts, cfg.max_len)
    lm = {
        "lm.w": Tensor(rng.normal(0.0, INIT_STD, size=(cfg.d_model, cfg.vocab_size)), requires_grad=True),
        "lm.b": Tensor(np.zeros(cfg.vocab_size), requires_grad=True),
    }
    encoder_flag = model.is_trainable("encoder")
    head_flag = model.is_trainable("head")
    model.set_trainable("encoder", True)
    model.set_trainable("head", False)
    enc_params = {n: t for n, t in model.params.items() if model.group_of(n) == "encoder"}
    opt = Adam({**enc_params, **lm}, lr=lr)
    losses: list[float] = []
    try:
        for _ in range(steps):
            rows = rng.choice(len(texts), size=min(batch_size, len(texts)), replace=False)
            ids = ids_all[rows]
            masked, chosen = _mask_batch(ids, mask_prob, rng)
            hidden, _ = encode_hidden(model, masked)
            flat = ad.reshape(hidden, (-1, cfg.d_model))
            picked = ad.embedding(flat, np.flatnonzero(chosen[:, : hidden.shape[1]].reshape(-1)))
            logits = ad.add(ad.matmul(picked, lm["lm.w"]), lm["lm.b"])
            targets = ids[:, : hidden.shape[1]][chosen[:, : hidden.shape[1]]]
            loss = ad.cross_entropy(logits, targets)
            opt.zero_grad()
            ad.backward(loss)
            opt.step()
            losses.append(loss.item())
    finally:
        model.set_trainable("encoder", encoder_flag)
        model.set_trainable("head", head_flag)
    return losses


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------


def save_checkpoint(model: RegressionModel, path: str | Path) -> Path:
    path = Path(path)
    arrays = {
        "__format__": np.array(CHECKPOINT_FORMAT),
        "__config__": np.array(json.dumps(model.config.to_dict(), sort_keys=True)),
        "__trainable__": np.array(json.dumps({g: model.is_trainable(g) for g in GROUPS}, sort_keys=True)),
    }
    arrays.update({n: t.data for n, t in model.params.items()})
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)
    return path


def load_checkpoint(path: str | Path) -> RegressionModel:
    with np.load(Path(path), allow_pickle=False) as archive:
        if str(archive["__format__"]) != CHECKPOINT_FORMAT:
            raise InputError(f"{path} is not a {CHECKPOINT_FORMAT} file")
        config = ModelConfig.from_dict(json.loads(str(archive["__config__"])))
        trainable = json.loads(str(archive["__trainable__"]))
        names = [k for k in archive.files if not k.startswith("__")]
        params = {n: Tensor(archive[n], requires_grad=True) for n in names}
    model = RegressionModel(config, params)
    expected = init_model_names(config)
    if list(params) != expected:
        raise InputError(f"{path} does not hold the parameters implied by its config")
    for g, flag in trainable.items():
        model.set_trainable(g, flag)
    return model


def init_model_names(config: ModelConfig) -> list[str]:
    names = ["encoder.tok_emb", "encoder.pos_emb", "encoder.emb_ln.gamma", "encoder.emb_ln.beta"]
    for i in range(config.n_layers):
        pre = f"encoder.layers.{i}"
        for proj in ("q", "k", "v", "o"):
            names += [f"{pre}.attn.w{proj}", f"{pre}.attn.b{proj}"]
        names += [f"{pre}.{s}" for s in ("ln1.gamma", "ln1.beta", "ff.w1", "ff.b1", "ff.w2", "ff.b2", "ln2.gamma", "ln2.beta")]
    return names + ["head.w1", "head.b1", "head.w2", "head.b2"]


def set_trainable(model: RegressionModel, group: str, flag: bool) -> None:
    model.set_trainable(group, flag)


def parameter_groups(model: RegressionModel) -> list[ParameterGroup]:
    return model.parameter_groups()

