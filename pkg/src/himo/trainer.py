"""Deterministic mini-batch training of the toy dual encoders.

Each step encodes both modalities, fits the in-batch PCA on the text
embeddings (never cached across batches), evaluates the configured loss
variant with analytic gradients, backpropagates through both encoders and
applies AdamW with linear warm-up.

The defaults (learning rate 1e-3, 50 warm-up steps) suit encoders trained
from scratch on synthetic data; fine-tuning a large pretrained model would
want a far smaller rate and a longer warm-up.
"""

import json
import logging
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import encoders, hide, losses, metrics
from .dataio import PairedDataset
from .encoders import EncoderParams
from .errors import TrainingError, ValidationError
from .metrics import ScoreSequence
from .synth import HierarchySpec, generate_hierarchical_batch

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    tau: float = hide.DEFAULT_TAU
    lam: float = losses.DEFAULT_LAMBDA
    temperature: float = losses.DEFAULT_TEMPERATURE
    learning_rate: float = 1e-3
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    epochs: int = 10
    batch_size: int = 128
    seed: int = 0
    loss_variant: str = "global_plus_comp"
    warmup_steps: int = 50
    embed_dim: int = 64
    hidden_dim: int | None = None

    def validate(self) -> None:
        if not 0.0 < self.tau <= 1.0:
            raise ValidationError(f"tau must lie in (0, 1], got {self.tau}")
        if self.lam < 0:
            raise ValidationError(f"lambda must be non-negative, got {self.lam}")
        for name in ("temperature", "learning_rate"):
            if getattr(self, name) <= 0:
                raise ValidationError(f"{name} must be positive")
        if self.weight_decay < 0:
            raise ValidationError("weight_decay must be non-negative")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValidationError("betas must lie in [0, 1)")
        if self.epochs < 1:
            raise ValidationError("epochs must be >= 1")
        if self.batch_size < 2:
            raise ValidationError("batch_size must be >= 2")
        if self.warmup_steps < 0:
            raise ValidationError("warmup_steps must be >= 0")
        if self.loss_variant not in losses.LOSS_VARIANTS:
            raise ValidationError(
                f"loss_variant must be one of {losses.LOSS_VARIANTS}, got {self.loss_variant!r}")
        if self.embed_dim < 1 or (self.hidden_dim is not None and self.hidden_dim < 1):
            raise ValidationError("embedding dimensions must be positive")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        data = dict(data)
        if "lambda" in data:
            data["lam"] = data.pop("lambda")
        unknown = set(data) - known
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**data)
        cfg.validate()
        return cfg

    @classmethod
    def from_json(cls, path) -> "TrainConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


# --- optimiser -------------------------------------------------------------

@dataclass
class AdamWState:
    step: int = 0
    exp_avg: dict = field(default_factory=dict)
    exp_avg_sq: dict = field(default_factory=dict)


def warmup_lr(config: TrainConfig, step: int) -> float:
    if config.warmup_steps and step <= config.warmup_steps:
        return config.learning_rate * step / config.warmup_steps
    return config.learning_rate


def adamw_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
               state: AdamWState, config: TrainConfig):
    """One AdamW update (decoupled weight decay, bias-corrected moments).

    Returns new parameter arrays; ``state`` is updated in place.
    """
    state.step += 1
    t = state.step
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient for {name}", step=t)
    lr = warmup_lr(config, t)
    b1, b2 = config.beta1, config.beta2
    out = {}
    for name, p in params.items():
        g = grads[name]
        m = state.exp_avg.get(name)
        v = state.exp_avg_sq.get(name)
        m = (1 - b1) * g if m is None else b1 * m + (1 - b1) * g
        v = (1 - b2) * g * g if v is None else b2 * v + (1 - b2) * g * g
        state.exp_avg[name], state.exp_avg_sq[name] = m, v
        m_hat = m / (1 - b1**t)
        v_hat = v / (1 - b2**t)
        out[name] = p * (1 - lr * config.weight_decay) - lr * m_hat / (np.sqrt(v_hat) + config.eps)
    return out, state


# --- data ------------------------------------------------------------------

DEFAULT_SPEC = HierarchySpec()
DEFAULT_N_TRAIN = 6400
DEFAULT_N_TEST = 512


def make_synthetic_dataset(spec: HierarchySpec = DEFAULT_SPEC, n_train: int = DEFAULT_N_TRAIN,
                           n_test: int = DEFAULT_N_TEST) -> dict[str, PairedDataset]:
    """Draw ``n_train + n_test`` pairs from ``spec`` and split them."""
    batch = generate_hierarchical_batch(replace(spec, batch_size=n_train + n_test))
    full = PairedDataset(batch.image_embeddings, batch.layer_components)
    return {"train": full.subset(np.arange(n_train)),
            "test": full.subset(np.arange(n_train, n_train + n_test))}


# --- training --------------------------------------------------------------

@dataclass
class TrainTrace:
    records: list[dict]
    image_params: EncoderParams
    text_params: EncoderParams
    config: TrainConfig

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.records)


def init_encoders(config: TrainConfig, d_in: int) -> tuple[EncoderParams, EncoderParams]:
    rng = np.random.default_rng([config.seed, 1])
    image = encoders.init_params(d_in, config.embed_dim, rng, config.hidden_dim)
    text = encoders.init_params(d_in, config.embed_dim, rng, config.hidden_dim)
    return image, text


def run_training(config: TrainConfig, data: PairedDataset) -> TrainTrace:
    """Train both encoders on ``data`` and return the per-step trace."""
    config.validate()
    n = len(data)
    if n < config.batch_size:
        raise ValidationError(f"dataset has {n} pairs, fewer than batch_size={config.batch_size}")
    x_img = data.image_features
    x_txt = data.text_features
    image, text = init_encoders(config, x_img.shape[1])
    img_state, txt_state = AdamWState(), AdamWState()
    rng = np.random.default_rng([config.seed, 2])
    steps_per_epoch = n // config.batch_size
    records = []
    step = 0
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        for b in range(steps_per_epoch):
            idx = order[b * config.batch_size:(b + 1) * config.batch_size]
            step += 1
            v = encoders.encode_batch(image, x_img[idx])
            u = encoders.encode_batch(text, x_txt[idx])
            out = losses.variant_loss(config.loss_variant, v, u, config.tau, config.lam,
                                      config.temperature, with_grad=True)
            if config.loss_variant != "global_only" and out.rank_m == 0:
                log.warning("step %d: degenerate batch, PCA rank 0", step)
            g_img = encoders.encoder_backward(image, x_img[idx], out.grad_v)
            g_txt = encoders.encoder_backward(text, x_txt[idx], out.grad_u)
            new_img, img_state = adamw_step(image.named(), g_img.named(), img_state, config)
            new_txt, txt_state = adamw_step(text.named(), g_txt.named(), txt_state, config)
            image, text = image.with_arrays(new_img), text.with_arrays(new_txt)
            record = {
                "step": step,
                "epoch": epoch,
                "lr": warmup_lr(config, step),
                "loss_total": out.loss_total,
                "loss_global": out.loss_global,
                "loss_comp": out.loss_comp,
                "rank_m": int(out.rank_m or 0),
            }
            for key in ("loss_total", "loss_global", "loss_comp"):
                if not np.isfinite(record[key]):
                    raise TrainingError(f"non-finite {key}", step=step)
            records.append(record)
    return TrainTrace(records, image, text, config)


# --- evaluation ------------------------------------------------------------

def subtext_scores(image: EncoderParams, text: EncoderParams, data: PairedDataset,
                   k: int | None = None) -> np.ndarray:
    """(N, K) cosine between each image and its cumulative subtexts.

    With ``k`` smaller than the number of layers, layers are grouped into k
    contiguous segments by the caption segmentation rule.
    """
    n_layers = data.num_layers
    k = n_layers if k is None else k
    sizes = metrics.segment_sizes(n_layers, k)
    ends = np.cumsum(sizes) - 1
    cum = data.subtexts()[ends]
    v = encoders.encode_batch(image, data.image_features)
    out = np.empty((len(data), k))
    for j in range(k):
        out[:, j] = np.einsum("ij,ij->i", v, encoders.encode_batch(text, cum[j]))
    return out


def score_sequences(scores: np.ndarray, prefix: str = "sample") -> list[ScoreSequence]:
    return [ScoreSequence(tuple(map(float, row)), f"{prefix}-{i}") for i, row in enumerate(scores)]


def evaluate(image: EncoderParams, text: EncoderParams, data: PairedDataset,
             recall_ks=(1, 5, 10)) -> dict:
    """HiMo@2, HiMo@3, mean-Pearson HiMo@K and I2T/T2I Recall@K on ``data``."""
    out = {}
    full = subtext_scores(image, text, data)
    if data.num_layers > 3:
        mean, n_bad = metrics.himo_k_mean(full)
        out["himo_k"] = mean
        out["himo_k_degenerate"] = n_bad
    for k in (2, 3):
        if data.num_layers >= k:
            out[f"himo_{k}"] = metrics.himo_shallow(subtext_scores(image, text, data, k), k)
    v = encoders.encode_batch(image, data.image_features)
    u = encoders.encode_batch(text, data.text_features)
    sim = v @ u.T
    gt = np.arange(len(data))
    for k in recall_ks:
        if k <= len(data):
            out[f"i2t_r{k}"] = metrics.recall_at_k(sim, gt, k)
            out[f"t2i_r{k}"] = metrics.recall_at_k(sim.T, gt, k)
    return out


# --- ablation sweeps -------------------------------------------------------

ABLATION_AXES = {
    "loss_variant": ("loss_variant", losses.LOSS_VARIANTS),
    "tau": ("tau", (0.6, 0.7, 0.8, 0.85, 0.9, 0.95)),
    "lambda": ("lam", (0.5, 1.0, 2.0)),
    # toy stand-ins for batch sizes 256 / 512 / 1024
    "batch_size": ("batch_size", (32, 64, 128)),
}
ABLATION_METRICS = ("himo_k", "himo_2", "himo_3", "i2t_r1", "t2i_r1", "i2t_r5", "t2i_r5")


def ablation_cell(axis: str, value, seed: int, base: TrainConfig = TrainConfig(),
                  spec: HierarchySpec = DEFAULT_SPEC, n_train: int = DEFAULT_N_TRAIN,
                  n_test: int = DEFAULT_N_TEST) -> dict:
    """Train and evaluate one (axis value, seed) cell; data depends on seed only."""
    if axis not in ABLATION_AXES:
        raise ValidationError(f"unknown ablation axis {axis!r}; expected one of {sorted(ABLATION_AXES)}")
    field_name = ABLATION_AXES[axis][0]
    data = make_synthetic_dataset(replace(spec, seed=seed), n_train, n_test)
    config = replace(base, seed=seed, **{field_name: value})
    trace = run_training(config, data["train"])
    scores = evaluate(trace.image_params, trace.text_params, data["test"])
    row = {"axis": axis, "value": value, "seed": seed,
           "final_loss": float(np.mean([r["loss_total"] for r in trace.records[-20:]]))}
    row.update({m: scores.get(m) for m in ABLATION_METRICS})
    return row


def summarize_ablation(rows: list[dict]) -> list[dict]:
    """Per-value mean over seeds, in first-seen value order."""
    order, groups = [], {}
    for row in rows:
        key = row["value"]
        if key not in groups:
            order.append(key)
            groups[key] = []
        groups[key].append(row)
    out = []
    for key in order:
        g = groups[key]
        summary = {"axis": g[0]["axis"], "value": key, "seed": "mean"}
        for m in ("final_loss",) + ABLATION_METRICS:
            vals = [r[m] for r in g if r[m] is not None]
            summary[m] = float(np.mean(vals)) if vals else None
        out.append(summary)
    return out
