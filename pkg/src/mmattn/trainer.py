"""Xavier initialisation, regularised loss, Adam, early stopping, checkpoints."""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import tensor as T
from .corpus import Batch, Dataset, batch_iter
from .tensor import ContractError, NumericalError, Tensor

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1


def xavier_init(shape, rng: np.random.Generator | int | None = None) -> np.ndarray:
    """Uniform samples in ``±sqrt(6 / (fan_in + fan_out))`` for a 2-d shape."""
    if len(shape) != 2:
        raise ContractError(f"xavier_init expects a 2-d shape, got {tuple(shape)}")
    fan_in, fan_out = shape
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return np.random.default_rng(rng).uniform(-bound, bound, size=tuple(shape))


@dataclass
class TrainConfig:
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    l2_lambda: float = 1e-5
    batch_size: int = 32
    patience: int = 20
    max_epochs: int = 100
    clip_norm: float = 5.0
    eval_every: int = 1
    seed: int = 1234

    def validate(self) -> None:
        for name in ("learning_rate", "beta1", "beta2", "epsilon", "batch_size", "patience", "max_epochs", "eval_every"):
            if not getattr(self, name) > 0:
                raise ContractError(f"train.{name} must be positive")
        if self.l2_lambda < 0 or self.clip_norm < 0:
            raise ContractError("train.l2_lambda and train.clip_norm must be non-negative")
        if not (self.beta1 < 1 and self.beta2 < 1):
            raise ContractError("Adam betas must lie in (0, 1)")


# -- loss ------------------------------------------------------------------


def l2_penalty(model, lam: float) -> Tensor | None:
    """``lam * sum(theta^2)`` over weight matrices and non-PAD embedding rows."""
    if lam == 0:
        return None
    terms = []
    for info in model.param_info():
        t = info.tensor
        if info.kind == "bias":
            continue
        if info.kind == "embedding":
            keep = np.ones(t.shape)
            keep[0] = 0.0
            t = t * keep
        terms.append(T.sum(t * t))
    total = terms[0]
    for term in terms[1:]:
        total = total + term
    return T.scale(total, lam)


def loss_terms(batch: Batch, model, l2_lambda: float = 0.0) -> tuple[Tensor, Tensor]:
    """``(total, nll)``: mean per-token NLL over non-PAD targets, and that plus the L2 term."""
    n = batch.n_tokens
    if n == 0:
        raise ContractError("loss: batch has no target tokens")
    nll = T.scale(model.nll(batch), 1.0 / n)
    reg = l2_penalty(model, l2_lambda)
    total = nll if reg is None else nll + reg
    if not np.isfinite(total.data).all():
        raise NumericalError(f"loss is {total.item()} on a batch of {batch.size} ({n} target tokens)")
    return total, nll


def loss(batch: Batch, model, l2_lambda: float = 0.0) -> Tensor:
    return loss_terms(batch, model, l2_lambda)[0]


# -- optimisation ----------------------------------------------------------


@dataclass
class OptimizerState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0


def adam_step(params: dict[str, Tensor], grads: dict[str, np.ndarray], state: OptimizerState, config: TrainConfig) -> None:
    """Bias-corrected Adam update in place."""
    state.t += 1
    b1, b2 = config.beta1, config.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p.data)
        if g.shape != p.shape:
            raise T.DimensionError(f"adam: gradient {g.shape} vs parameter {name} {p.shape}")
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p.data -= config.learning_rate * (m / c1) / (np.sqrt(v / c2) + config.epsilon)


def clip_by_global_norm(grads: dict[str, np.ndarray], max_norm: float) -> float:
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if not math.isfinite(norm):
        raise NumericalError("gradient norm is not finite")
    if max_norm > 0 and norm > max_norm:
        s = max_norm / norm
        for g in grads.values():
            g *= s
    return norm


def compute_grads(model, batch: Batch, l2_lambda: float) -> tuple[float, float, dict[str, np.ndarray]]:
    """Return ``(loss, nll, grads)`` for one batch; model grads are left cleared."""
    model.zero_grad()
    value, nll = loss_terms(batch, model, l2_lambda)
    value.backward()
    grads = {}
    for name, p in model.named_parameters():
        grads[name] = p.grad.copy() if p.grad is not None else np.zeros_like(p.data)
    model.zero_grad()
    return value.item(), nll.item(), grads


def train_step(model, batch: Batch, state: OptimizerState, config: TrainConfig) -> float:
    """One clipped Adam update; returns the batch's per-token NLL."""
    _, nll, grads = compute_grads(model, batch, config.l2_lambda)
    clip_by_global_norm(grads, config.clip_norm)
    adam_step(dict(model.named_parameters()), grads, state, config)
    return nll


# -- training loop ---------------------------------------------------------


@dataclass
class EpochLog:
    epoch: int
    train_loss: float  # per-token NLL without the L2 term
    score: float | None = None


@dataclass
class TrainResult:
    log: list[EpochLog]
    best_state: dict[str, np.ndarray]
    best_score: float | None
    best_epoch: int
    stopped_early: bool
    optimizer: OptimizerState


def dataset_nll(model, dataset: Dataset, batch_size: int = 64) -> float:
    """Per-token NLL of ``dataset`` without regularisation."""
    total, count = 0.0, 0
    with T.no_grad():
        for batch in batch_iter(dataset, batch_size):
            total += model.nll(batch).item()
            count += batch.n_tokens
    return total / max(count, 1)


def train(
    model,
    dataset: Dataset,
    config: TrainConfig,
    evaluator: Callable[[object], float] | None = None,
    on_epoch: Callable[[EpochLog], bool] | None = None,
    restore_best: bool = True,
) -> TrainResult:
    """Shuffled minibatch training with patience-based early stopping.

    ``evaluator(model)`` scores the model after every ``eval_every`` epochs
    (higher is better); without one, the final parameters count as best.
    ``on_epoch`` may return True to stop after the current epoch.
    """
    config.validate()
    state = OptimizerState()
    history: list[EpochLog] = []
    best_state = model.state_dict()
    best_score: float | None = None
    best_epoch = 0
    waited = 0
    stopped = False
    for epoch in range(1, config.max_epochs + 1):
        total, tokens = 0.0, 0
        for batch in batch_iter(dataset, config.batch_size, shuffle_seed=config.seed + epoch):
            value = train_step(model, batch, state, config)
            total += value * batch.n_tokens
            tokens += batch.n_tokens
        entry = EpochLog(epoch, total / max(tokens, 1))
        if evaluator is not None and epoch % config.eval_every == 0:
            entry.score = float(evaluator(model))
            if best_score is None or entry.score > best_score:
                best_score, best_epoch, waited = entry.score, epoch, 0
                best_state = model.state_dict()
            else:
                waited += 1
        history.append(entry)
        log.info("epoch %d loss %.4f score %s", epoch, entry.train_loss, entry.score)
        if evaluator is not None and waited >= config.patience:
            stopped = True
            break
        if on_epoch is not None and on_epoch(entry):
            break
    if evaluator is None:
        best_state = model.state_dict()
        best_epoch = history[-1].epoch if history else 0
    elif restore_best:
        model.load_state_dict(best_state)
    return TrainResult(history, best_state, best_score, best_epoch, stopped, state)


# -- checkpoints -----------------------------------------------------------


def config_digest(config: dict) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True).encode("utf-8")).hexdigest()


def save_checkpoint(path, model, optimizer: OptimizerState | None = None, extra: dict | None = None) -> None:
    """Write parameters, optimizer moments and metadata into one ``.npz`` container."""
    meta = {
        "version": CHECKPOINT_VERSION,
        "model": model.config.to_dict(),
        "extra": extra or {},
    }
    meta["digest"] = config_digest({"model": meta["model"], "extra": meta["extra"]})
    arrays = {f"param/{k}": v for k, v in model.state_dict().items()}
    if optimizer is not None:
        arrays["adam/t"] = np.asarray(optimizer.t)
        for k, v in optimizer.m.items():
            arrays[f"adam.m/{k}"] = v
            arrays[f"adam.v/{k}"] = optimizer.v[k]
    arrays["meta"] = np.frombuffer(json.dumps(meta).encode("utf-8"), dtype=np.uint8)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path):
    """Return ``(model, optimizer_state, extra)`` from :func:`save_checkpoint` output."""
    from .model import ModelConfig, MultimodalNMT

    with np.load(path, allow_pickle=False) as z:
        meta = json.loads(bytes(z["meta"]).decode("utf-8"))
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ContractError(f"{path}: unsupported checkpoint version {meta.get('version')}")
        expect = config_digest({"model": meta["model"], "extra": meta["extra"]})
        if expect != meta.get("digest"):
            raise ContractError(f"{path}: config digest mismatch")
        params = {k[len("param/"):]: z[k] for k in z.files if k.startswith("param/")}
        opt = OptimizerState()
        if "adam/t" in z.files:
            opt.t = int(z["adam/t"])
            for k in z.files:
                if k.startswith("adam.m/"):
                    name = k[len("adam.m/"):]
                    opt.m[name] = z[k].copy()
                    opt.v[name] = z[f"adam.v/{name}"].copy()
    model = MultimodalNMT(ModelConfig(**meta["model"]), rng=0)
    model.load_state_dict(params)
    return model, opt, meta["extra"]


def save_log(path, history: list[EpochLog]) -> None:
    rows = ["epoch\ttrain_loss\tscore"]
    for e in history:
        rows.append(f"{e.epoch}\t{e.train_loss:.6f}\t{'' if e.score is None else f'{e.score:.4f}'}")
    Path(path).write_text("\n".join(rows) + "\n", encoding="utf-8")


def asdict_config(config: TrainConfig) -> dict:
    return asdict(config)
