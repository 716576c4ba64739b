"""Dyadic motion-refinement network.

The forecaster turns padded per-agent motions into refined predictions:
per-frame pose encoding, intent token, sinusoidal positions, self-attention
encoding with temporal MLP smoothing, iterated dual cross-attention between
the two agents, and an MLP decoder whose output is added to the last
observed pose.

Every residual branch ends in a zero-initialized projection and the decoder
head starts at zero, so a freshly built model reproduces the repeat-last-pose
baseline exactly and training learns a refinement on top of it.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
import torch
from torch import nn

from .core_types import Motion
from .datasets import TrainingSample
from .errors import DataError


@dataclass(frozen=True)
class ModelConfig:
    """Network hyperparameters. ``agent_dims`` are the flattened pose widths
    (J*n) of the two agents; equal widths share encoder/decoder weights."""

    seq_len: int
    agent_dims: tuple[int, int]
    d_model: int = 128
    n_layers_sa: int = 4
    n_heads: int = 4
    k_mlp: int = 2
    mlp_expansion: int = 2
    k_refine: int = 2
    n_layers_ca: int = 1
    ffn_expansion: int = 2
    dropout: float = 0.0
    use_text: bool = True
    use_dct: bool = False
    use_tempmlp: bool = True
    use_residual_baseline: bool = True
    share_ca_weights: bool = False

    def __post_init__(self):
        object.__setattr__(self, "agent_dims", tuple(int(d) for d in self.agent_dims))
        if self.d_model % self.n_heads != 0:
            raise ValueError(f"d_model {self.d_model} not divisible by n_heads {self.n_heads}")
        if self.k_refine < 0:
            raise ValueError("k_refine must be >= 0")
        if self.mlp_expansion < 1 or self.ffn_expansion < 1:
            raise ValueError("expansion factors must be >= 1")
        if self.seq_len < 1:
            raise ValueError("seq_len must be >= 1")
        if len(self.agent_dims) != 2:
            raise ValueError("agent_dims must name exactly two agents")
        if self.n_layers_ca < 1:
            raise ValueError("n_layers_ca must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["agent_dims"] = list(self.agent_dims)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        d["agent_dims"] = tuple(d["agent_dims"])
        return cls(**d)


def sinusoidal_embedding(num_positions: int, width: int) -> np.ndarray:
    """Interleaved sin/cos positional table, (num_positions, width).

    Dimension pair d uses wavelength 2*pi*10000^(2d/width).
    """
    if width % 2 != 0:
        raise ValueError(f"positional width must be even, got {width}")
    positions = np.arange(num_positions, dtype=np.float64)[:, None]
    pair = np.arange(width // 2, dtype=np.float64)[None, :]
    angles = positions / np.power(10000.0, 2.0 * pair / width)
    table = np.zeros((num_positions, width), dtype=np.float64)
    table[:, 0::2] = np.sin(angles)
    table[:, 1::2] = np.cos(angles)
    return table


def dct_matrix(num_frames: int) -> np.ndarray:
    """Orthonormal DCT-II analysis matrix C: coefficients = C @ sequence."""
    t = np.arange(num_frames, dtype=np.float64)
    k = t[:, None]
    mat = np.cos(np.pi * (2.0 * t[None, :] + 1.0) * k / (2.0 * num_frames))
    scale = np.full(num_frames, np.sqrt(2.0 / num_frames))
    scale[0] = np.sqrt(1.0 / num_frames)
    return scale[:, None] * mat


def dct_transform(sequence: np.ndarray) -> np.ndarray:
    """Orthonormal DCT-II along the leading (time) axis."""
    seq = np.asarray(sequence, dtype=np.float64)
    mat = dct_matrix(seq.shape[0])
    return np.einsum("kt,t...->k...", mat, seq)


def idct_transform(coefficients: np.ndarray) -> np.ndarray:
    """Exact inverse of :func:`dct_transform`."""
    coef = np.asarray(coefficients, dtype=np.float64)
    mat = dct_matrix(coef.shape[0])
    return np.einsum("kt,k...->t...", mat, coef)


def _zero_linear(layer: nn.Linear) -> nn.Linear:
    nn.init.zeros_(layer.weight)
    nn.init.zeros_(layer.bias)
    return layer


class AttentionBlock(nn.Module):
    """Pre-norm attention plus feed-forward; identity at initialization.

    ``forward(x)`` is self-attention, ``forward(x, kv)`` cross-attention.
    Self- and cross-attention share this single structure so ablations that
    trade refinement iterations for encoder depth keep the parameter count
    exactly equal.
    """

    def __init__(self, d_model: int, n_heads: int, ffn_expansion: int, dropout: float):
        super().__init__()
        self.n_heads = n_heads
        self.head_dim = d_model // n_heads
        self.norm_q = nn.LayerNorm(d_model)
        self.norm_kv = nn.LayerNorm(d_model)
        self.q_proj = nn.Linear(d_model, d_model)
        self.k_proj = nn.Linear(d_model, d_model)
        self.v_proj = nn.Linear(d_model, d_model)
        self.out_proj = _zero_linear(nn.Linear(d_model, d_model))
        self.norm_ffn = nn.LayerNorm(d_model)
        self.ffn = nn.Sequential(
            nn.Linear(d_model, ffn_expansion * d_model),
            nn.GELU(),
            nn.Dropout(dropout),
            _zero_linear(nn.Linear(ffn_expansion * d_model, d_model)),
        )
        self.drop = nn.Dropout(dropout)

    def _split(self, x: torch.Tensor) -> torch.Tensor:
        b, l, _ = x.shape
        return x.view(b, l, self.n_heads, self.head_dim).transpose(1, 2)

    def forward(self, x: torch.Tensor, kv: torch.Tensor | None = None) -> torch.Tensor:
        source = x if kv is None else kv
        q = self._split(self.q_proj(self.norm_q(x)))
        normed = self.norm_kv(source)
        k = self._split(self.k_proj(normed))
        v = self._split(self.v_proj(normed))
        attn = torch.softmax(q @ k.transpose(-1, -2) / math.sqrt(self.head_dim), dim=-1)
        mixed = (attn @ v).transpose(1, 2).reshape(x.shape)
        x = x + self.drop(self.out_proj(mixed))
        return x + self.ffn(self.norm_ffn(x))


class TemporalSmoothing(nn.Module):
    """Residual MLP stacks along the time axis (expand then compress the
    token count); the channel dimension is untouched."""

    def __init__(self, num_tokens: int, k_mlp: int, expansion: int):
        super().__init__()
        self.blocks = nn.ModuleList(
            nn.Sequential(
                nn.Linear(num_tokens, expansion * num_tokens),
                nn.GELU(),
                _zero_linear(nn.Linear(expansion * num_tokens, num_tokens)),
            )
            for _ in range(k_mlp)
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        for block in self.blocks:
            x = x + block(x.transpose(-1, -2)).transpose(-1, -2)
        return x


class IntentEmbedder(nn.Module):
    """Maps an interaction label to a latent token.

    Backed by a learned vocabulary table, or by precomputed vectors with a
    learned projection when their width differs from the model width. When
    text conditioning is off, a single learned null token stands in so the
    token count never changes.
    """

    def __init__(
        self,
        vocab: dict[str, int],
        d_model: int,
        use_text: bool,
        precomputed: np.ndarray | None = None,
    ):
        super().__init__()
        self.vocab = dict(vocab)
        self.use_text = use_text
        self.null_token = nn.Parameter(torch.randn(d_model) * 0.02)
        self.project: nn.Linear | None = None
        if precomputed is not None:
            if precomputed.shape[0] != len(vocab):
                raise DataError(
                    f"precomputed intent vectors cover {precomputed.shape[0]} labels, "
                    f"vocabulary has {len(vocab)}"
                )
            self.register_buffer(
                "vectors", torch.as_tensor(precomputed, dtype=torch.float32)
            )
            if precomputed.shape[1] != d_model:
                self.project = nn.Linear(precomputed.shape[1], d_model)
            self.table = None
        else:
            self.vectors = None
            self.table = nn.Embedding(len(vocab) if vocab else 1, d_model)

    def index_of(self, label: str) -> int:
        if label not in self.vocab:
            raise DataError(f"unknown intent label '{label}'")
        return self.vocab[label]

    def forward(self, indices: torch.Tensor) -> torch.Tensor:
        if not self.use_text:
            return self.null_token.expand(indices.shape[0], -1)
        if self.vectors is not None:
            vecs = self.vectors.to(self.null_token.dtype)[indices]
            return self.project(vecs) if self.project is not None else vecs
        return self.table(indices)

    def embed_label(self, label: str) -> torch.Tensor:
        if not self.use_text:
            return self.null_token
        idx = torch.tensor([self.index_of(label)])
        return self(idx)[0]


class PoseEncoder(nn.Module):
    """Per-frame MLP from flattened joint values to the latent width."""

    def __init__(self, in_dim: int, d_model: int):
        super().__init__()
        self.in_dim = in_dim
        self.net = nn.Sequential(
            nn.Linear(in_dim, d_model), nn.GELU(), nn.Linear(d_model, d_model)
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[-1] != self.in_dim:
            raise ValueError(f"encoder expects width {self.in_dim}, got {x.shape[-1]}")
        return self.net(x)


class PoseDecoder(nn.Module):
    """Per-token MLP from the latent width back to flattened joint values;
    the head starts at zero so decoding begins at the reference pose."""

    def __init__(self, d_model: int, out_dim: int):
        super().__init__()
        self.out_dim = out_dim
        self.net = nn.Sequential(
            nn.Linear(d_model, d_model),
            nn.GELU(),
            _zero_linear(nn.Linear(d_model, out_dim)),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.net(x)


class EchoModel(nn.Module):
    """Full forecaster over a dyadic scene.

    Inputs are per-agent padded motions flattened to (B, T, J*n); the last
    padded frame doubles as the reference pose. Outputs are per-agent
    predictions of the full sequence plus the individual and social latents
    used by the loss suite.
    """

    def __init__(
        self,
        cfg: ModelConfig,
        intent_vocab: dict[str, int] | None = None,
        intent_vectors: np.ndarray | None = None,
    ):
        super().__init__()
        self.cfg = cfg
        vocab = intent_vocab or {}

        dims = cfg.agent_dims
        if dims[0] == dims[1]:
            self.encoders = nn.ModuleList([PoseEncoder(dims[0], cfg.d_model)])
            self.decoders = nn.ModuleList([PoseDecoder(cfg.d_model, dims[0])])
            self._agent_net = (0, 0)
        else:
            self.encoders = nn.ModuleList(PoseEncoder(d, cfg.d_model) for d in dims)
            self.decoders = nn.ModuleList(PoseDecoder(cfg.d_model, d) for d in dims)
            self._agent_net = (0, 1)

        self.intent = IntentEmbedder(vocab, cfg.d_model, cfg.use_text, intent_vectors)
        self.register_buffer(
            "pos_embedding",
            torch.as_tensor(
                sinusoidal_embedding(cfg.seq_len, cfg.d_model), dtype=torch.float32
            ),
        )
        if cfg.use_dct:
            self.register_buffer(
                "dct_mat",
                torch.as_tensor(dct_matrix(cfg.seq_len), dtype=torch.float32),
            )
        else:
            self.dct_mat = None

        self.sa_blocks = nn.ModuleList(
            AttentionBlock(cfg.d_model, cfg.n_heads, cfg.ffn_expansion, cfg.dropout)
            for _ in range(cfg.n_layers_sa)
        )
        self.temp_mlp = (
            TemporalSmoothing(cfg.seq_len + 1, cfg.k_mlp, cfg.mlp_expansion)
            if cfg.use_tempmlp and cfg.k_mlp > 0
            else None
        )

        def ca_stack():
            return nn.ModuleList(
                AttentionBlock(cfg.d_model, cfg.n_heads, cfg.ffn_expansion, cfg.dropout)
                for _ in range(cfg.n_layers_ca)
            )

        self.refine_fwd = nn.ModuleList(ca_stack() for _ in range(cfg.k_refine))
        self.refine_bwd = (
            self.refine_fwd
            if cfg.share_ca_weights
            else nn.ModuleList(ca_stack() for _ in range(cfg.k_refine))
        )

    # -- component surfaces -------------------------------------------------

    def encode_poses(self, x: torch.Tensor, agent: int) -> torch.Tensor:
        """(B, T, J*n) -> (B, T, D); frames are mapped independently."""
        return self.encoders[self._agent_net[agent]](x)

    def single_motion_encode(
        self, e_ind: torch.Tensor, intent_vec: torch.Tensor
    ) -> torch.Tensor:
        """(B, T, D) + (B, D) intent -> (B, T+1, D) individual representation."""
        b, t, d = e_ind.shape
        if t != self.cfg.seq_len:
            raise ValueError(f"expected {self.cfg.seq_len} pose tokens, got {t}")
        pos = self.pos_embedding.to(e_ind.dtype)
        tokens = torch.cat([intent_vec.unsqueeze(1), e_ind + pos], dim=1)
        for block in self.sa_blocks:
            tokens = block(tokens)
        return self.temporal_smooth(tokens)

    def temporal_smooth(self, e: torch.Tensor) -> torch.Tensor:
        if self.temp_mlp is None:
            return e
        return self.temp_mlp(e)

    def social_refine(
        self, e0: torch.Tensor, e1: torch.Tensor
    ) -> tuple[torch.Tensor, torch.Tensor]:
        """Iterated dual cross-attention; agent 0 is refined first."""
        if e0.shape != e1.shape:
            raise ValueError(f"latent shapes differ: {tuple(e0.shape)} vs {tuple(e1.shape)}")
        for fwd_stack, bwd_stack in zip(self.refine_fwd, self.refine_bwd):
            for block in fwd_stack:
                e0 = block(e0, kv=e1)
            for block in bwd_stack:
                e1 = block(e1, kv=e0)
        return e0, e1

    def decode_poses(
        self, e: torch.Tensor, x_ref: torch.Tensor | None, agent: int
    ) -> torch.Tensor:
        """(B, T+1, D) latent -> (B, T, J*n) prediction.

        Drops the intent token, undoes the frequency transform when active,
        decodes per token, and adds the reference pose unless the residual
        baseline is ablated.
        """
        if e.shape[1] != self.cfg.seq_len + 1:
            raise ValueError(
                f"latent is missing the intent token: expected {self.cfg.seq_len + 1} "
                f"tokens, got {e.shape[1]}"
            )
        tokens = e[:, 1:, :]
        if self.cfg.use_dct:
            mat = self.dct_mat.to(tokens.dtype)
            tokens = torch.einsum("tk,bkd->btd", mat, tokens)
        out = self.decoders[self._agent_net[agent]](tokens)
        if self.cfg.use_residual_baseline:
            if x_ref is None:
                raise ValueError("residual baseline needs the reference pose")
            out = out + x_ref
        return out

    # -- full forward -------------------------------------------------------

    def forward(
        self, x_agents: Sequence[torch.Tensor], intent_idx: torch.Tensor
    ) -> dict[str, list[torch.Tensor]]:
        if len(x_agents) != 2:
            raise ValueError(f"expected 2 agents, got {len(x_agents)}")
        for i, x in enumerate(x_agents):
            if x.shape[-1] != self.cfg.agent_dims[i]:
                raise ValueError(
                    f"agent {i} width {x.shape[-1]} != configured {self.cfg.agent_dims[i]}"
                )
        intent_vec = self.intent(intent_idx).to(x_agents[0].dtype)
        x_refs = [x[:, -1:, :] for x in x_agents]

        e_ind = []
        for i, x in enumerate(x_agents):
            e = self.encode_poses(x, i)
            if self.cfg.use_dct:
                mat = self.dct_mat.to(e.dtype)
                e = torch.einsum("kt,btd->bkd", mat, e)
            e_ind.append(self.single_motion_encode(e, intent_vec))

        e_soc = list(self.social_refine(e_ind[0], e_ind[1]))
        pred_ind = [
            self.decode_poses(e_ind[i], x_refs[i], i) for i in range(2)
        ]
        pred = [self.decode_poses(e_soc[i], x_refs[i], i) for i in range(2)]
        return {"pred": pred, "pred_ind": pred_ind, "e_ind": e_ind, "e_soc": e_soc}

    def decode_fn(self, agent: int):
        """Decoding closure for the loss suite: (latent, x_ref) -> prediction."""

        def decode(e: torch.Tensor, x_ref: torch.Tensor | None) -> torch.Tensor:
            return self.decode_poses(e, x_ref, agent)

        return decode

    def intent_index_tensor(self, labels: Sequence[str]) -> torch.Tensor:
        if not self.cfg.use_text:
            return torch.zeros(len(labels), dtype=torch.long)
        return torch.tensor([self.intent.index_of(l) for l in labels], dtype=torch.long)

    def embed_intent(self, label: str) -> torch.Tensor:
        return self.intent.embed_label(label)

    @property
    def dtype(self) -> torch.dtype:
        return next(self.parameters()).dtype


@dataclass(frozen=True)
class ForwardResult:
    """Numpy-world view of one forward pass over a training sample."""

    predictions: tuple[Motion, ...]
    predictions_individual: tuple[Motion, ...]
    e_ind: tuple[np.ndarray, ...]
    e_soc: tuple[np.ndarray, ...]


def sample_to_tensors(
    sample: TrainingSample, dtype: torch.dtype
) -> list[torch.Tensor]:
    """Per-agent (1, T, J*n) input tensors from a training sample."""
    out = []
    for motion in sample.x_ind:
        t = motion.num_frames
        flat = motion.values.reshape(t, -1).copy()
        out.append(torch.as_tensor(flat, dtype=dtype).unsqueeze(0))
    return out


def echo_forward(sample: TrainingSample, model: EchoModel) -> ForwardResult:
    """Run the forecaster on one sample and return motions plus latents."""
    dtype = model.dtype
    xs = sample_to_tensors(sample, dtype)
    idx = model.intent_index_tensor([sample.intent])
    with torch.no_grad():
        out = model(xs, idx)

    def to_motions(tensors: list[torch.Tensor]) -> tuple[Motion, ...]:
        motions = []
        for i, t in enumerate(tensors):
            ref = sample.x_ind[i]
            values = (
                t[0].numpy().astype(np.float64).reshape(ref.values.shape)
            )
            motions.append(Motion(values, ref.representation, ref.fps))
        return tuple(motions)

    return ForwardResult(
        predictions=to_motions(out["pred"]),
        predictions_individual=to_motions(out["pred_ind"]),
        e_ind=tuple(e[0].numpy() for e in out["e_ind"]),
        e_soc=tuple(e[0].numpy() for e in out["e_soc"]),
    )
