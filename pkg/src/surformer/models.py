"""
Surformer v1 and the encoder-only tactile transformer.

Both models take standardized inputs and return logits; ``predict_proba``
runs them in inference mode and applies softmax.  Token layout: each
modality encoder emits ``tokens`` vectors of ``latent_dim`` so that the
fusion block's self-attention has more than one position to attend over.
"""

from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigurationError, DimensionError
from .nn import functional as F
from .nn.layers import (
    AttentionConfig,
    BatchNorm,
    Dense,
    Dropout,
    FeedForward,
    LayerNorm,
    Module,
    MultiHeadAttention,
    Parameter,
    ReLU,
    count_parameters,
    glorot_uniform,
)


@dataclass
class EncoderConfig:
    input_dim: int
    hidden_dims: list
    latent_dim: int = 128
    tokens: int = 4
    dropout: float = 0.1

    def __post_init__(self):
        if self.tokens < 1:
            raise ConfigurationError(f"tokens must be >= 1, got {self.tokens}")
        self.hidden_dims = list(self.hidden_dims)


@dataclass
class SurformerConfig:
    tactile: EncoderConfig = field(default_factory=lambda: EncoderConfig(7, [64]))
    vision: EncoderConfig = field(default_factory=lambda: EncoderConfig(64, [96]))
    num_heads: int = 2
    head_dim: int = 64
    n_fusion_blocks: int = 1
    block_ffn_dim: int = 128
    fusion_hidden_dim: int = 128
    head_dims: list = field(default_factory=lambda: [256, 128, 64, 32])
    n_classes: int = 5
    dropout: float = 0.1
    # Shrinks the Glorot init of the final layer so untrained outputs sit near uniform.
    classifier_init_scale: float = 0.1

    def __post_init__(self):
        if isinstance(self.tactile, dict):
            self.tactile = EncoderConfig(**self.tactile)
        if isinstance(self.vision, dict):
            self.vision = EncoderConfig(**self.vision)
        self.head_dims = list(self.head_dims)
        if self.tactile.latent_dim != self.vision.latent_dim:
            raise ConfigurationError("tactile and vision encoders must share latent_dim")
        # Validates num_heads * head_dim == latent_dim.
        self.attention
        if self.head_dims[0] != 2 * self.latent_dim:
            raise ConfigurationError(
                f"head must start at the concat width {2 * self.latent_dim}, got {self.head_dims[0]}"
            )

    @property
    def latent_dim(self):
        return self.tactile.latent_dim

    @property
    def attention(self):
        return AttentionConfig(self.latent_dim, self.num_heads, self.head_dim)

    def to_dict(self):
        return asdict(self)


@dataclass
class TactileTransformerConfig:
    n_features: int = 7
    d_model: int = 64
    n_layers: int = 2
    n_heads: int = 2
    ffn_dim: int = 128
    head_dim: int = 32
    n_classes: int = 5
    dropout: float = 0.1

    @property
    def attention(self):
        return AttentionConfig(self.d_model, self.n_heads, self.d_model // self.n_heads)

    def to_dict(self):
        return asdict(self)


class ModalityEncoder(Module):
    """dense -> batch-norm -> ReLU -> dropout per hidden width, then a dense
    projection to ``tokens * latent_dim`` reshaped into a token sequence.

    Dense layers feeding a batch-norm have no bias (the normalization
    cancels it).
    """

    def __init__(self, cfg, rng):
        super().__init__()
        self.cfg = cfg
        self.layers = []
        prev = cfg.input_dim
        for width in cfg.hidden_dims:
            self.layers += [
                Dense(prev, width, rng, bias=False),
                BatchNorm(width),
                ReLU(),
                Dropout(cfg.dropout, rng),
            ]
            prev = width
        self.out = Dense(prev, cfg.tokens * cfg.latent_dim, rng)

    def forward(self, x):
        if x.ndim != 2 or x.shape[1] != self.cfg.input_dim:
            raise DimensionError(f"encoder expects (B, {self.cfg.input_dim}) input, got {x.shape}")
        for layer in self.layers:
            x = layer(x)
        y = self.out(x)
        return y.reshape(x.shape[0], self.cfg.tokens, self.cfg.latent_dim)

    def backward(self, dy):
        dx = self.out.backward(dy.reshape(dy.shape[0], -1))
        for layer in reversed(self.layers):
            dx = layer.backward(dx)
        return dx


class FusionBlock(Module):
    """Pre-LN self-attention, bidirectional cross-attention and FFN per modality.

    Both cross-attention directions read the same post-self-attention
    snapshot, so neither direction sees the other's update.
    """

    def __init__(self, attn_cfg, ffn_dim, dropout, rng):
        super().__init__()
        D = attn_cfg.model_dim
        self.ln_self_v, self.ln_self_t = LayerNorm(D), LayerNorm(D)
        self.self_v = MultiHeadAttention(attn_cfg, rng)
        self.self_t = MultiHeadAttention(attn_cfg, rng)
        self.ln_cross_v, self.ln_cross_t = LayerNorm(D), LayerNorm(D)
        # cross_v: vision queries over tactile keys/values; cross_t: the reverse.
        self.cross_v = MultiHeadAttention(attn_cfg, rng)
        self.cross_t = MultiHeadAttention(attn_cfg, rng)
        self.ln_ffn_v, self.ln_ffn_t = LayerNorm(D), LayerNorm(D)
        self.ffn_v = FeedForward(D, ffn_dim, D, rng)
        self.ffn_t = FeedForward(D, ffn_dim, D, rng)
        self.drops = [Dropout(dropout, rng) for _ in range(6)]

    def forward(self, v, t):
        d = self.drops
        a = self.ln_self_v(v)
        v1 = v + d[0](self.self_v(a, a))
        a = self.ln_self_t(t)
        t1 = t + d[1](self.self_t(a, a))

        nv, nt = self.ln_cross_v(v1), self.ln_cross_t(t1)
        v2 = v1 + d[2](self.cross_v(nv, nt))
        t2 = t1 + d[3](self.cross_t(nt, nv))

        v3 = v2 + d[4](self.ffn_v(self.ln_ffn_v(v2)))
        t3 = t2 + d[5](self.ffn_t(self.ln_ffn_t(t2)))
        return v3, t3

    def backward(self, dv3, dt3):
        d = self.drops
        dv2 = dv3 + self.ln_ffn_v.backward(self.ffn_v.backward(d[4].backward(dv3)))
        dt2 = dt3 + self.ln_ffn_t.backward(self.ffn_t.backward(d[5].backward(dt3)))

        dnv_q, dnt_kv = self.cross_v.backward(d[2].backward(dv2))
        dnt_q, dnv_kv = self.cross_t.backward(d[3].backward(dt2))
        dv1 = dv2 + self.ln_cross_v.backward(dnv_q + dnv_kv)
        dt1 = dt2 + self.ln_cross_t.backward(dnt_q + dnt_kv)

        dq, dkv = self.self_v.backward(d[0].backward(dv1))
        dv = dv1 + self.ln_self_v.backward(dq + dkv)
        dq, dkv = self.self_t.backward(d[1].backward(dt1))
        dt = dt1 + self.ln_self_t.backward(dq + dkv)
        return dv, dt


class ClassifierModel(Module):
    """Shared inference helpers for models that return logits."""

    n_inputs = 1

    def predict_proba(self, *inputs, batch_size=None):
        was_training = self.training
        self.eval()
        try:
            n = inputs[0].shape[0]
            step = batch_size or max(n, 1)
            out = [F.softmax(self.forward(*(x[i:i + step] for x in inputs)), axis=-1)
                   for i in range(0, n, step)]
        finally:
            self.train(was_training)
        return np.concatenate(out, axis=0)

    def predict(self, *inputs, batch_size=None):
        return self.predict_proba(*inputs, batch_size=batch_size).argmax(axis=1)

    def count_parameters(self):
        return count_parameters(self)

    def astype(self, dtype):
        """Copy of the model with every parameter cast to ``dtype`` (inference only)."""
        import copy
        clone = copy.deepcopy(self)
        for p in clone.parameters(trainable_only=False):
            p.value = p.value.astype(dtype)
            p.grad = np.zeros_like(p.value)
        return clone


class Surformer(ClassifierModel):
    """Tactile (7-D) + reduced vision (64-D) classifier with cross-modal fusion."""

    n_inputs = 2

    def __init__(self, config=None, seed=0):
        super().__init__()
        self.config = config or SurformerConfig()
        cfg = self.config
        rng = np.random.default_rng(seed)
        D = cfg.latent_dim
        self.tactile_encoder = ModalityEncoder(cfg.tactile, rng)
        self.vision_encoder = ModalityEncoder(cfg.vision, rng)
        self.blocks = [FusionBlock(cfg.attention, cfg.block_ffn_dim, cfg.dropout, rng)
                       for _ in range(cfg.n_fusion_blocks)]
        self.fusion_ffn = FeedForward(2 * D, cfg.fusion_hidden_dim, 2 * D, rng)
        self.projection = Dense(2 * D, 2 * D, rng)
        # No shift: the head's first batch norm would cancel it.
        self.fusion_norm = LayerNorm(2 * D, center=False)
        self.head = []
        dims = cfg.head_dims
        for a, b in zip(dims[:-1], dims[1:]):
            self.head += [Dense(a, b, rng, bias=False), BatchNorm(b), ReLU(), Dropout(cfg.dropout, rng)]
        self.classifier = Dense(dims[-1], cfg.n_classes, rng)
        self.classifier.W.value *= cfg.classifier_init_scale

    def forward(self, tactile, vision):
        if tactile.shape[0] != vision.shape[0]:
            raise DimensionError(f"batch mismatch: tactile {tactile.shape} vs vision {vision.shape}")
        t = self.tactile_encoder(tactile)
        v = self.vision_encoder(vision)
        for block in self.blocks:
            v, t = block(v, t)
        return self.fuse_and_classify(v, t)

    def fuse_and_classify(self, v, t):
        self._token_shapes = (v.shape, t.shape)
        c = np.concatenate([v.mean(axis=1), t.mean(axis=1)], axis=1)
        z = self.fusion_norm(c + self.projection(self.fusion_ffn(c)))
        for layer in self.head:
            z = layer(z)
        return self.classifier(z)

    def backward(self, dlogits):
        dz = self.classifier.backward(dlogits)
        for layer in reversed(self.head):
            dz = layer.backward(dz)
        dsum = self.fusion_norm.backward(dz)
        dc = dsum + self.fusion_ffn.backward(self.projection.backward(dsum))
        (vshape, tshape) = self._token_shapes
        D = self.config.latent_dim
        dv = np.broadcast_to(dc[:, None, :D] / vshape[1], vshape).copy()
        dt = np.broadcast_to(dc[:, None, D:] / tshape[1], tshape).copy()
        for block in reversed(self.blocks):
            dv, dt = block.backward(dv, dt)
        return self.tactile_encoder.backward(dt), self.vision_encoder.backward(dv)

    def describe(self):
        """Layer widths by stage, read off the constructed layers."""
        enc = lambda e: [e.layers[i].in_dim for i in range(0, len(e.layers), 4)] + [e.out.in_dim, e.out.out_dim]
        block = self.blocks[0]
        return {
            "tactile_encoder": enc(self.tactile_encoder),
            "vision_encoder": enc(self.vision_encoder),
            "tokens": (self.config.tactile.tokens, self.config.vision.tokens),
            "latent_dim": block.self_v.cfg.model_dim,
            "num_heads": block.self_v.cfg.num_heads,
            "head_dim": block.self_v.cfg.head_dim,
            "block_ffn": [block.ffn_v.fc1.in_dim, block.ffn_v.fc1.out_dim, block.ffn_v.fc2.out_dim],
            "concat_dim": self.fusion_ffn.fc1.in_dim,
            "fusion_ffn": [self.fusion_ffn.fc1.in_dim, self.fusion_ffn.fc1.out_dim, self.fusion_ffn.fc2.out_dim],
            "projection": [self.projection.in_dim, self.projection.out_dim],
            "head": [self.head[i].in_dim for i in range(0, len(self.head), 4)]
                    + [self.classifier.in_dim, self.classifier.out_dim],
        }


class EncoderLayer(Module):
    """Pre-LN transformer encoder layer."""

    def __init__(self, attn_cfg, ffn_dim, dropout, rng):
        super().__init__()
        D = attn_cfg.model_dim
        self.ln1, self.ln2 = LayerNorm(D), LayerNorm(D)
        self.attn = MultiHeadAttention(attn_cfg, rng)
        self.ffn = FeedForward(D, ffn_dim, D, rng)
        self.drop1, self.drop2 = Dropout(dropout, rng), Dropout(dropout, rng)

    def forward(self, x):
        a = self.ln1(x)
        x = x + self.drop1(self.attn(a, a))
        return x + self.drop2(self.ffn(self.ln2(x)))

    def backward(self, dy):
        dx = dy + self.ln2.backward(self.ffn.backward(self.drop2.backward(dy)))
        dq, dkv = self.attn.backward(self.drop1.backward(dx))
        return dx + self.ln1.backward(dq + dkv)


class TactileTransformer(ClassifierModel):
    """One token per tactile feature: the scalar scales a per-feature d_model
    vector and a learned positional embedding is added (it doubles as the
    per-feature bias).  Pre-LN encoder layers, mean-pool, small head."""

    def __init__(self, config=None, seed=0):
        super().__init__()
        self.config = config or TactileTransformerConfig()
        cfg = self.config
        rng = np.random.default_rng(seed)
        L, D = cfg.n_features, cfg.d_model
        self.token_weight = Parameter(glorot_uniform(rng, 1, D, shape=(L, D)))
        self.position = Parameter(rng.normal(0.0, 0.02, size=(L, D)))
        self.embed_drop = Dropout(cfg.dropout, rng)
        self.layers = [EncoderLayer(cfg.attention, cfg.ffn_dim, cfg.dropout, rng) for _ in range(cfg.n_layers)]
        self.final_norm = LayerNorm(D)
        self.head = Dense(D, cfg.head_dim, rng, activation="relu")
        self.head_drop = Dropout(cfg.dropout, rng)
        self.classifier = Dense(cfg.head_dim, cfg.n_classes, rng)

    def forward(self, tactile):
        L = self.config.n_features
        if tactile.ndim != 2 or tactile.shape[1] != L:
            raise DimensionError(f"tactile transformer expects (B, {L}) input, got {tactile.shape}")
        self._x = tactile
        h = tactile[:, :, None] * self.token_weight.value + self.position.value
        h = self.embed_drop(h)
        for layer in self.layers:
            h = layer(h)
        h = self.final_norm(h)
        return self.classifier(self.head_drop(self.head(h.mean(axis=1))))

    def backward(self, dlogits):
        L = self.config.n_features
        dp = self.head.backward(self.head_drop.backward(self.classifier.backward(dlogits)))
        dh = np.repeat(dp[:, None, :] / L, L, axis=1)
        dh = self.final_norm.backward(dh)
        for layer in reversed(self.layers):
            dh = layer.backward(dh)
        dh = self.embed_drop.backward(dh)
        self.token_weight.grad += (dh * self._x[:, :, None]).sum(axis=0)
        self.position.grad += dh.sum(axis=0)
        dx = (dh * self.token_weight.value).sum(axis=2)
        return (dx,)


MODEL_TYPES = {"surformer": Surformer, "tactile-transformer": TactileTransformer}


def build_model(kind, config_dict=None, seed=0):
    if kind == "surformer":
        return Surformer(SurformerConfig(**(config_dict or {})), seed=seed)
    if kind == "tactile-transformer":
        return TactileTransformer(TactileTransformerConfig(**(config_dict or {})), seed=seed)
    raise ConfigurationError(f"unknown neural model {kind!r}")
