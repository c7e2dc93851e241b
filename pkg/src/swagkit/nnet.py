"""Feed-forward classifier with a frozen random base and trainable low-rank adapters.

The base network is a tanh MLP whose weights are generated from a seed and
never trained. Every dense layer carries a rank-r adapter pair (A, B); the
effective weight is ``W0 + (alpha/r) * B @ A``. Only A and B receive
gradients, so the trainable subspace of a model with layer sizes
(n_l -> m_l) has dimension ``sum_l r * (m_l + n_l)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NumericError, ShapeError

__all__ = [
    "ModelConfig",
    "Model",
    "Batch",
    "init_model",
    "forward",
    "loss_and_grads",
    "get_params",
    "set_params",
    "num_params",
    "save_model",
    "load_model",
]


@dataclass(frozen=True)
class ModelConfig:
    input_dim: int
    hidden_dims: tuple[int, ...]
    num_classes: int
    lora_rank: int = 8
    lora_alpha: float = 16.0
    lora_dropout_p: float = 0.1
    base_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        if self.input_dim < 1 or self.num_classes < 2:
            raise ConfigError("need input_dim >= 1 and num_classes >= 2")
        if any(h < 1 for h in self.hidden_dims):
            raise ConfigError("hidden layer sizes must be positive")
        if not 0.0 <= self.lora_dropout_p < 1.0:
            raise ConfigError(f"lora_dropout_p must lie in [0, 1), got {self.lora_dropout_p}")
        if self.lora_rank < 1:
            raise ConfigError("lora_rank must be >= 1")
        for n_in, n_out in self.layer_dims():
            if self.lora_rank > min(n_in, n_out):
                raise ConfigError(
                    f"lora_rank {self.lora_rank} exceeds min dim of layer "
                    f"({n_in} -> {n_out})"
                )

    def layer_dims(self) -> list[tuple[int, int]]:
        """(n_in, n_out) for every dense layer, input to output."""
        sizes = [self.input_dim, *self.hidden_dims, self.num_classes]
        return list(zip(sizes[:-1], sizes[1:]))

    def to_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "hidden_dims": list(self.hidden_dims),
            "num_classes": self.num_classes,
            "lora_rank": self.lora_rank,
            "lora_alpha": self.lora_alpha,
            "lora_dropout_p": self.lora_dropout_p,
            "base_seed": self.base_seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(
            input_dim=int(d["input_dim"]),
            hidden_dims=tuple(d["hidden_dims"]),
            num_classes=int(d["num_classes"]),
            lora_rank=int(d.get("lora_rank", 8)),
            lora_alpha=float(d.get("lora_alpha", 16.0)),
            lora_dropout_p=float(d.get("lora_dropout_p", 0.1)),
            base_seed=int(d.get("base_seed", 0)),
        )


@dataclass
class Model:
    """Frozen base weights plus trainable adapter pairs.

    ``base_weights`` are marked read-only and shared between copies; A and B
    are owned per instance. Mutation (``set_params``, training) needs
    exclusive access; forward evaluation never writes.
    """

    config: ModelConfig
    base_weights: list[np.ndarray]
    a_mats: list[np.ndarray]
    b_mats: list[np.ndarray]
    dtype: np.dtype = field(default=np.dtype(np.float32))

    @property
    def scaling(self) -> float:
        return self.config.lora_alpha / self.config.lora_rank

    def effective_weights(self) -> list[np.ndarray]:
        s = self.dtype.type(self.scaling)
        return [
            w0 + s * (b @ a)
            for w0, a, b in zip(self.base_weights, self.a_mats, self.b_mats)
        ]

    def copy(self) -> "Model":
        """Copy with fresh adapter arrays; the frozen base is shared."""
        return Model(
            config=self.config,
            base_weights=self.base_weights,
            a_mats=[a.copy() for a in self.a_mats],
            b_mats=[b.copy() for b in self.b_mats],
            dtype=self.dtype,
        )


@dataclass
class Batch:
    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.features = np.atleast_2d(np.asarray(self.features))
        self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if self.features.shape[0] < 1:
            raise ValueError("batch must contain at least one example")
        if self.features.shape[0] != self.labels.shape[0]:
            raise ShapeError(
                f"{self.features.shape[0]} feature rows vs {self.labels.shape[0]} labels"
            )
        if not np.isfinite(self.features).all():
            raise ValueError("batch features must be finite")

    def __len__(self) -> int:
        return self.features.shape[0]


def init_model(config: ModelConfig, rng_seed: int, dtype=np.float32) -> Model:
    """Build a model whose adapted forward initially equals the base forward.

    Base weights come from a Gaussian scheme seeded by ``config.base_seed``
    (std 1/sqrt(n_in) per layer). A is Gaussian with std 1/sqrt(n_in), seeded
    by ``rng_seed``; B starts at zero so B @ A vanishes at init.
    """
    dtype = np.dtype(dtype)
    base_rng = np.random.default_rng(config.base_seed)
    adapter_rng = np.random.default_rng(rng_seed)
    r = config.lora_rank

    base, a_mats, b_mats = [], [], []
    for n_in, n_out in config.layer_dims():
        w0 = (base_rng.standard_normal((n_out, n_in)) / np.sqrt(n_in)).astype(dtype)
        w0.flags.writeable = False
        base.append(w0)
        a = (adapter_rng.standard_normal((r, n_in)) / np.sqrt(n_in)).astype(dtype)
        a_mats.append(a)
        b_mats.append(np.zeros((n_out, r), dtype=dtype))
    return Model(config=config, base_weights=base, a_mats=a_mats, b_mats=b_mats, dtype=dtype)


def _layer_outputs(model: Model, x: np.ndarray, dropout_rng) -> list[np.ndarray]:
    """Activations entering each layer plus the final probability matrix."""
    cfg = model.config
    p = cfg.lora_dropout_p
    s = model.dtype.type(model.scaling)
    n_layers = len(model.base_weights)

    acts = [x]
    h = x
    for l in range(n_layers):
        branch = (h @ model.a_mats[l].T) @ model.b_mats[l].T * s
        if dropout_rng is not None and p > 0.0:
            mask = (dropout_rng.random(branch.shape) >= p).astype(model.dtype)
            branch = branch * mask / model.dtype.type(1.0 - p)
        z = h @ model.base_weights[l].T + branch
        if not np.isfinite(z).all():
            raise NumericError(f"non-finite activation in layer {l}")
        h = _softmax(z) if l == n_layers - 1 else np.tanh(z)
        acts.append(h)
    return acts


def _softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def forward(model: Model, batch: Batch, dropout_rng: np.random.Generator | None = None) -> np.ndarray:
    """Class probabilities, one row per example.

    ``dropout_rng=None`` is the deterministic mode. With a generator,
    inverted dropout at rate ``lora_dropout_p`` is applied to the adapter
    branch output of every layer; the base path is never dropped.
    """
    x = np.asarray(batch.features, dtype=model.dtype)
    if x.shape[1] != model.config.input_dim:
        raise ShapeError(
            f"batch has {x.shape[1]} features, model expects {model.config.input_dim}"
        )
    return _layer_outputs(model, x, dropout_rng)[-1]


def loss_and_grads(model: Model, batch: Batch) -> tuple[float, np.ndarray]:
    """Mean cross-entropy and its gradient in the flat adapter layout.

    Gradients flow to A and B only. For a layer z = W_eff @ h with
    W_eff = W0 + (alpha/r) B A and upstream G = dL/dW_eff:
    dL/dA = (alpha/r) B^T G and dL/dB = (alpha/r) G A^T.
    """
    if len(batch) < 1:
        raise ValueError("cannot evaluate loss on an empty batch")
    x = np.asarray(batch.features, dtype=model.dtype)
    y = batch.labels
    cfg = model.config
    if x.shape[1] != cfg.input_dim:
        raise ShapeError(
            f"batch has {x.shape[1]} features, model expects {cfg.input_dim}"
        )
    if y.min() < 0 or y.max() >= cfg.num_classes:
        raise ValueError("labels out of range for model's class count")

    acts = _layer_outputs(model, x, None)
    probs = acts[-1]
    n = x.shape[0]
    eps = np.finfo(model.dtype).tiny
    loss = float(-np.log(np.maximum(probs[np.arange(n), y], eps)).mean())

    s = model.dtype.type(model.scaling)
    w_eff = model.effective_weights()
    delta = probs.copy()
    delta[np.arange(n), y] -= 1.0
    delta /= model.dtype.type(n)

    grads_a: list[np.ndarray] = [None] * len(w_eff)  # type: ignore[list-item]
    grads_b: list[np.ndarray] = [None] * len(w_eff)  # type: ignore[list-item]
    for l in range(len(w_eff) - 1, -1, -1):
        h = acts[l]
        g = delta.T @ h
        grads_a[l] = s * (model.b_mats[l].T @ g)
        grads_b[l] = s * (g @ model.a_mats[l].T)
        if l > 0:
            delta = (delta @ w_eff[l]) * (1.0 - h * h)

    flat = np.concatenate([g.ravel() for g in grads_a] + [g.ravel() for g in grads_b])
    return loss, flat


def num_params(model_or_config) -> int:
    cfg = model_or_config.config if isinstance(model_or_config, Model) else model_or_config
    r = cfg.lora_rank
    return sum(r * (n_in + n_out) for n_in, n_out in cfg.layer_dims())


def get_params(model: Model) -> np.ndarray:
    """Flat adapter vector: all A matrices in layer order, then all B."""
    return np.concatenate(
        [a.ravel() for a in model.a_mats] + [b.ravel() for b in model.b_mats]
    )


def set_params(model: Model, v: np.ndarray) -> Model:
    """Write a flat adapter vector back into the model (in place)."""
    v = np.asarray(v)
    expected = num_params(model)
    if v.ndim != 1 or v.shape[0] != expected:
        raise ShapeError(f"parameter vector has length {v.size}, model needs {expected}")
    pos = 0
    for mats in (model.a_mats, model.b_mats):
        for m in mats:
            m[...] = v[pos : pos + m.size].reshape(m.shape).astype(model.dtype)
            pos += m.size
    return model


def save_model(model: Model, path) -> None:
    """Checkpoint as JSON: config plus adapter vector.

    Base weights are regenerated from ``base_seed`` on load, not stored.
    """
    doc = {
        "format": "swagkit-model",
        "version": 1,
        "config": model.config.to_dict(),
        "dtype": model.dtype.name,
        "params": [float(x) for x in get_params(model)],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_model(path) -> Model:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != "swagkit-model":
        raise ConfigError(f"{path} is not a model checkpoint")
    config = ModelConfig.from_dict(doc["config"])
    model = init_model(config, rng_seed=0, dtype=np.dtype(doc["dtype"]))
    set_params(model, np.asarray(doc["params"], dtype=model.dtype))
    return model
