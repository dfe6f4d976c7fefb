"""Spatiotemporal forecasting models over backscatter windows.

Both models consume a logit-space window (B, T, C, S, S) and emit two maps
(mu, sigma) of shape (B, C, S, S): the predicted per-pixel mean and standard
deviation of the *next* frame. sigma comes from a softplus plus a small
floor, so it is strictly positive by construction.

transformer: frames are cut into P x P patches (each flattened across both
channels), embedded linearly, tagged with learned spatial and temporal
embeddings, and run through pre-norm encoder blocks (LN -> multi-head
attention -> residual, LN -> ReLU feed-forward -> residual, dropout on each
sublayer output). The token at each spatial position's latest time step
feeds two independent 2-layer heads that predict that patch's mu and sigma.

gru: frames are flattened to C*S^2 vectors and run through a stacked GRU
(first layer consumes the flattened frame directly; hidden size d_model);
the final hidden state feeds the same kind of two-headed readout for the
whole frame.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, replace

import numpy as np

from .autodiff import Tensor, dropout, layer_norm
from .errors import FormatError, ShapeError, ValidationError

KINDS = ("transformer", "gru")


@dataclass(frozen=True)
class ModelConfig:
    kind: str = "transformer"
    input_size: int = 16
    patch_size: int = 8
    channels: int = 2
    d_model: int = 256
    num_heads: int = 4
    num_layers: int = 4
    ff_dim: int = 768
    # None ties the head width to ff_dim (the transformer's head and
    # feed-forward widths are one knob); the gru default pins 978.
    head_hidden: int | None = None
    dropout: float = 0.2
    max_t: int = 10
    sigma_floor: float = 1e-3

    @staticmethod
    def transformer_default() -> "ModelConfig":
        return ModelConfig()

    @staticmethod
    def gru_default() -> "ModelConfig":
        return ModelConfig(kind="gru", input_size=8, d_model=326,
                           num_layers=4, head_hidden=978)

    @property
    def resolved_head_hidden(self) -> int:
        return self.ff_dim if self.head_hidden is None else self.head_hidden

    @property
    def patches_per_frame(self) -> int:
        return (self.input_size // self.patch_size) ** 2

    @property
    def patch_dim(self) -> int:
        return self.channels * self.patch_size ** 2

    @property
    def frame_dim(self) -> int:
        return self.channels * self.input_size ** 2

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise ValidationError(f"unknown model kind {self.kind!r}")
        for name in ("input_size", "channels", "d_model", "num_layers"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be >= 1")
        if self.channels != 2:
            raise ValidationError(f"models are dual-pol only (channels=2), got {self.channels}")
        if self.resolved_head_hidden < 1:
            raise ValidationError("head width must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValidationError(f"dropout must be in [0,1), got {self.dropout}")
        if self.max_t < 2:
            raise ValidationError(f"max_t must be >= 2, got {self.max_t}")
        if not self.sigma_floor > 0:
            raise ValidationError(f"sigma floor must be > 0, got {self.sigma_floor}")
        if self.kind == "transformer":
            if self.patch_size < 1 or self.input_size % self.patch_size != 0:
                raise ValidationError(
                    f"patch size {self.patch_size} must divide input size {self.input_size}"
                )
            if self.num_heads < 1 or self.d_model % self.num_heads != 0:
                raise ValidationError(
                    f"num_heads {self.num_heads} must divide d_model {self.d_model}"
                )
            if self.ff_dim < 1:
                raise ValidationError("ff_dim must be >= 1")


# ---------------------------------------------------------------------------
# patch layout helpers (pure numpy; the tensor-graph versions live in Model)
# ---------------------------------------------------------------------------

def patch_split(frames: np.ndarray, patch: int) -> np.ndarray:
    """(..., C, S, S) -> (..., Np, C*patch*patch); row-major patch order."""
    *lead, c, s, s2 = frames.shape
    if s != s2 or s % patch != 0:
        raise ShapeError(f"cannot split {s}x{s2} frames into {patch}x{patch} patches")
    n = s // patch
    x = frames.reshape(*lead, c, n, patch, n, patch)
    x = np.moveaxis(x, (-4, -2), (-5, -4))  # (..., n, n, c, patch, patch)
    return np.ascontiguousarray(x).reshape(*lead, n * n, c * patch * patch)


def patch_merge(patches: np.ndarray, patch: int, size: int, channels: int = 2) -> np.ndarray:
    """Inverse of patch_split: (..., Np, C*patch*patch) -> (..., C, S, S)."""
    *lead, np_, pd = patches.shape
    n = size // patch
    if np_ != n * n or pd != channels * patch * patch:
        raise ShapeError(f"patch array {patches.shape} does not tile a "
                         f"{channels}x{size}x{size} frame with patch {patch}")
    x = patches.reshape(*lead, n, n, channels, patch, patch)
    x = np.moveaxis(x, (-5, -4), (-4, -2))  # (..., c, n, patch, n, patch)
    return np.ascontiguousarray(x).reshape(*lead, channels, size, size)


class Model:
    """Parameter container plus forward pass for either model kind."""

    def __init__(self, cfg: ModelConfig, seed: int = 0, dtype=np.float32):
        cfg.validate()
        self.cfg = cfg
        self.dtype = np.dtype(dtype)
        self.params: dict[str, Tensor] = {}
        rng = np.random.default_rng(seed)
        if cfg.kind == "transformer":
            self._init_transformer(rng)
        else:
            self._init_gru(rng)

    # -- initialization -----------------------------------------------------

    def _linear(self, rng, name: str, fan_in: int, fan_out: int) -> None:
        bound = 1.0 / np.sqrt(fan_in)
        self.params[f"{name}.w"] = self._param(rng.uniform(-bound, bound, (fan_in, fan_out)))
        self.params[f"{name}.b"] = self._param(rng.uniform(-bound, bound, (fan_out,)))

    def _param(self, values) -> Tensor:
        return Tensor(np.asarray(values, dtype=self.dtype), requires_grad=True)

    def _init_transformer(self, rng) -> None:
        cfg = self.cfg
        self._linear(rng, "embed", cfg.patch_dim, cfg.d_model)
        self.params["pos_spatial"] = self._param(
            rng.normal(0.0, 0.02, (cfg.patches_per_frame, cfg.d_model)))
        self.params["pos_temporal"] = self._param(
            rng.normal(0.0, 0.02, (cfg.max_t, cfg.d_model)))
        for i in range(cfg.num_layers):
            self._layer_norm_init(f"enc{i}.ln1", cfg.d_model)
            for proj in ("wq", "wk", "wv", "wo"):
                self._linear(rng, f"enc{i}.attn.{proj}", cfg.d_model, cfg.d_model)
            self._layer_norm_init(f"enc{i}.ln2", cfg.d_model)
            self._linear(rng, f"enc{i}.ff1", cfg.d_model, cfg.ff_dim)
            self._linear(rng, f"enc{i}.ff2", cfg.ff_dim, cfg.d_model)
        self._layer_norm_init("final_ln", cfg.d_model)
        hidden = cfg.resolved_head_hidden
        for head in ("mu_head", "sigma_head"):
            self._linear(rng, f"{head}.l1", cfg.d_model, hidden)
            self._linear(rng, f"{head}.l2", hidden, cfg.patch_dim)

    def _init_gru(self, rng) -> None:
        cfg = self.cfg
        h = cfg.d_model
        for layer in range(cfg.num_layers):
            fan_in = cfg.frame_dim if layer == 0 else h
            bound = 1.0 / np.sqrt(h)
            self.params[f"gru{layer}.w_ih"] = self._param(
                rng.uniform(-bound, bound, (fan_in, 3 * h)))
            self.params[f"gru{layer}.w_hh"] = self._param(
                rng.uniform(-bound, bound, (h, 3 * h)))
            self.params[f"gru{layer}.b_ih"] = self._param(rng.uniform(-bound, bound, (3 * h,)))
            self.params[f"gru{layer}.b_hh"] = self._param(rng.uniform(-bound, bound, (3 * h,)))
        hidden = cfg.resolved_head_hidden
        for head in ("mu_head", "sigma_head"):
            self._linear(rng, f"{head}.l1", h, hidden)
            self._linear(rng, f"{head}.l2", hidden, cfg.frame_dim)

    def _layer_norm_init(self, name: str, dim: int) -> None:
        self.params[f"{name}.g"] = self._param(np.ones(dim))
        self.params[f"{name}.b"] = self._param(np.zeros(dim))

    # -- bookkeeping ----------------------------------------------------------

    def parameter_count(self) -> int:
        return sum(int(p.data.size) for p in self.params.values())

    def zero_grads(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def cast(self, dtype) -> "Model":
        """Copy of this model with parameters cast to `dtype`."""
        clone = Model.__new__(Model)
        clone.cfg = self.cfg
        clone.dtype = np.dtype(dtype)
        clone.params = {
            name: Tensor(p.data.astype(dtype), requires_grad=True)
            for name, p in self.params.items()
        }
        return clone

    # -- forward --------------------------------------------------------------

    def forward(self, x: np.ndarray, train: bool = False,
                rng: np.random.Generator | None = None) -> tuple[Tensor, Tensor]:
        """Forecast the frame after the window; returns (mu, sigma) tensors."""
        cfg = self.cfg
        x = np.asarray(x, dtype=self.dtype)
        if x.ndim != 5:
            raise ShapeError(f"window must be (B,T,C,S,S), got {x.shape}")
        b, t, c, s, s2 = x.shape
        if c != cfg.channels or s != cfg.input_size or s2 != cfg.input_size:
            raise ShapeError(
                f"window {x.shape} does not match model input "
                f"({cfg.channels}, {cfg.input_size}, {cfg.input_size})"
            )
        if t < 2:
            raise ValidationError(f"window needs at least 2 frames, got {t}")
        if cfg.kind == "transformer" and t > cfg.max_t:
            raise ValidationError(f"window length {t} exceeds max_t {cfg.max_t}")
        if cfg.kind == "transformer":
            return self._forward_transformer(x, train, rng)
        return self._forward_gru(x, train, rng)

    def _head(self, h: Tensor, name: str) -> Tensor:
        p = self.params
        z = (h @ p[f"{name}.l1.w"] + p[f"{name}.l1.b"]).relu()
        return z @ p[f"{name}.l2.w"] + p[f"{name}.l2.b"]

    def _forward_transformer(self, x, train, rng):
        cfg, p = self.cfg, self.params
        b, t = x.shape[0], x.shape[1]
        npf, d = cfg.patches_per_frame, cfg.d_model
        heads, dk = cfg.num_heads, cfg.d_model // cfg.num_heads

        tokens = patch_split(x, cfg.patch_size)           # (B, T, Np, patch_dim)
        h = Tensor(tokens) @ p["embed.w"] + p["embed.b"]  # (B, T, Np, D)
        h = h + p["pos_spatial"].reshape(1, 1, npf, d)
        h = h + p["pos_temporal"][:t].reshape(1, t, 1, d)
        h = h.reshape(b, t * npf, d)

        scale = 1.0 / np.sqrt(dk)
        for i in range(cfg.num_layers):
            pre = layer_norm(h, p[f"enc{i}.ln1.g"], p[f"enc{i}.ln1.b"])
            q = (pre @ p[f"enc{i}.attn.wq.w"] + p[f"enc{i}.attn.wq.b"])
            k = (pre @ p[f"enc{i}.attn.wk.w"] + p[f"enc{i}.attn.wk.b"])
            v = (pre @ p[f"enc{i}.attn.wv.w"] + p[f"enc{i}.attn.wv.b"])
            n = t * npf
            q = q.reshape(b, n, heads, dk).transpose((0, 2, 1, 3))
            k = k.reshape(b, n, heads, dk).transpose((0, 2, 1, 3))
            v = v.reshape(b, n, heads, dk).transpose((0, 2, 1, 3))
            att = ((q @ k.transpose((0, 1, 3, 2))) * scale).softmax()
            ctx = (att @ v).transpose((0, 2, 1, 3)).reshape(b, n, d)
            ctx = ctx @ p[f"enc{i}.attn.wo.w"] + p[f"enc{i}.attn.wo.b"]
            h = h + dropout(ctx, cfg.dropout, rng, train)

            pre = layer_norm(h, p[f"enc{i}.ln2.g"], p[f"enc{i}.ln2.b"])
            ff = (pre @ p[f"enc{i}.ff1.w"] + p[f"enc{i}.ff1.b"]).relu()
            ff = ff @ p[f"enc{i}.ff2.w"] + p[f"enc{i}.ff2.b"]
            h = h + dropout(ff, cfg.dropout, rng, train)

        h = layer_norm(h, p["final_ln.g"], p["final_ln.b"])
        latest = h.reshape(b, t, npf, d)[:, t - 1]        # (B, Np, D)

        mu_p = self._head(latest, "mu_head")              # (B, Np, patch_dim)
        sig_p = self._head(latest, "sigma_head").softplus() + cfg.sigma_floor
        return self._merge_patches(mu_p), self._merge_patches(sig_p)

    def _merge_patches(self, patches: Tensor) -> Tensor:
        cfg = self.cfg
        b = patches.shape[0]
        n = cfg.input_size // cfg.patch_size
        x = patches.reshape(b, n, n, cfg.channels, cfg.patch_size, cfg.patch_size)
        x = x.transpose((0, 3, 1, 4, 2, 5))
        return x.reshape(b, cfg.channels, cfg.input_size, cfg.input_size)

    def _forward_gru(self, x, train, rng):
        cfg, p = self.cfg, self.params
        b, t = x.shape[0], x.shape[1]
        hdim = cfg.d_model
        frames = x.reshape(b, t, cfg.frame_dim)
        states = [Tensor(np.zeros((b, hdim), dtype=self.dtype)) for _ in range(cfg.num_layers)]
        for step in range(t):
            inp = Tensor(np.ascontiguousarray(frames[:, step]))
            for layer in range(cfg.num_layers):
                hprev = states[layer]
                gi = inp @ p[f"gru{layer}.w_ih"] + p[f"gru{layer}.b_ih"]
                gh = hprev @ p[f"gru{layer}.w_hh"] + p[f"gru{layer}.b_hh"]
                r = (gi[:, :hdim] + gh[:, :hdim]).sigmoid()
                z = (gi[:, hdim:2 * hdim] + gh[:, hdim:2 * hdim]).sigmoid()
                n = (gi[:, 2 * hdim:] + r * gh[:, 2 * hdim:]).tanh()
                hnew = (1.0 - z) * n + z * hprev
                states[layer] = hnew
                out = hnew
                if layer < cfg.num_layers - 1:
                    out = dropout(hnew, cfg.dropout, rng, train)
                inp = out
        final = states[-1]                                # (B, H)
        mu = self._head(final, "mu_head")
        sig = self._head(final, "sigma_head").softplus() + cfg.sigma_floor
        shape = (b, cfg.channels, cfg.input_size, cfg.input_size)
        return mu.reshape(shape), sig.reshape(shape)


# ---------------------------------------------------------------------------
# checkpoints: one weights blob + a json index + the full config
# ---------------------------------------------------------------------------

CHECKPOINT_VERSION = 1


def save_checkpoint(model: Model, directory: str) -> None:
    os.makedirs(directory, exist_ok=True)
    index = []
    offset = 0
    with open(os.path.join(directory, "weights.bin"), "wb") as fh:
        for name in sorted(model.params):
            data = np.ascontiguousarray(model.params[name].data, dtype="<f4")
            fh.write(data.tobytes())
            index.append({"name": name, "shape": list(data.shape), "offset": offset})
            offset += data.nbytes
    with open(os.path.join(directory, "index.json"), "w", encoding="utf-8") as fh:
        json.dump(index, fh, indent=2, sort_keys=True)
        fh.write("\n")
    meta = {"version": CHECKPOINT_VERSION, "config": asdict(model.cfg)}
    with open(os.path.join(directory, "model.json"), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_checkpoint(directory: str) -> Model:
    try:
        with open(os.path.join(directory, "model.json"), "r", encoding="utf-8") as fh:
            meta = json.load(fh)
        with open(os.path.join(directory, "index.json"), "r", encoding="utf-8") as fh:
            index = json.load(fh)
        with open(os.path.join(directory, "weights.bin"), "rb") as fh:
            blob = fh.read()
    except json.JSONDecodeError as exc:
        raise FormatError(f"{directory}: unreadable checkpoint metadata: {exc}") from exc
    if meta.get("version") != CHECKPOINT_VERSION:
        raise FormatError(f"{directory}: unsupported checkpoint version {meta.get('version')}")
    cfg = ModelConfig(**meta["config"])
    model = Model(cfg, seed=0)
    expected = set(model.params)
    provided = {entry["name"] for entry in index}
    if expected != provided:
        missing = sorted(expected - provided)
        surplus = sorted(provided - expected)
        raise FormatError(
            f"{directory}: parameter set mismatch (missing {missing}, surplus {surplus})"
        )
    for entry in index:
        shape = tuple(entry["shape"])
        size = int(np.prod(shape)) * 4
        start = int(entry["offset"])
        if start + size > len(blob):
            raise FormatError(f"{directory}: weights.bin too short for {entry['name']}")
        arr = np.frombuffer(blob[start:start + size], dtype="<f4").reshape(shape)
        if model.params[entry["name"]].data.shape != shape:
            raise FormatError(
                f"{directory}: {entry['name']} has shape {shape}, expected "
                f"{model.params[entry['name']].data.shape}"
            )
        model.params[entry["name"]] = Tensor(arr.copy(), requires_grad=True)
    return model


def preset_model_size(ff_dim: int, num_layers: int) -> ModelConfig:
    """Transformer preset with the head width tied to the feed-forward width."""
    return replace(ModelConfig.transformer_default(),
                   ff_dim=ff_dim, num_layers=num_layers, head_hidden=None)


def preset_input_patch(input_size: int, patch_size: int) -> ModelConfig:
    return replace(ModelConfig.transformer_default(),
                   input_size=input_size, patch_size=patch_size)
