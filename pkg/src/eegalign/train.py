"""Optimization loops for both training stages.

Stage 1 (pretrain) fits the dual-branch encoder with the joint reconstruction
objective; stage 2 (tune) fits the instruction head (and, at a reduced rate,
the transformer branches) with the prototype alignment loss. Both stages use
decoupled-weight-decay Adam under a cosine-annealed learning rate, are bitwise
deterministic for a fixed seed in single-thread mode, and serialize full state
(parameters, moments, schedule step, RNG) to resumable checkpoints.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np
import torch
from torch import nn

from .encoder import (
    DualEncoder,
    EncoderConfig,
    loss_cau,
    loss_ctx,
    pretrain_loss,
    slice_targets,
)
from .instruct import (
    CatalogEntry,
    InstructConfig,
    InstructionHead,
    PrototypeBank,
    alignment_loss,
)
from .signal import RawTrial, SignalConfig, sample_mask_band, segment, spectral_mask
from .textembed import TextEmbedder
from .tokenizer import TokenizerConfig

CHECKPOINT_VERSION = 1
MODEL_TAGS = {"nonlinearity": "gelu", "tokenizer_variant": "conv-depthwise-avgpool"}


@dataclass
class TrainConfig:
    batch_size: int = 32  # paper-scale: 512
    peak_lr: float = 1e-3
    min_lr: float = 1e-4
    weight_decay: float = 1e-3
    betas: tuple[float, float] = (0.9, 0.999)
    epochs: int = 10
    transformer_lr_scale: float = 0.1
    other_lr_scale: float = 1.0
    seed: int = 0
    stage: str = "pretrain"
    grad_clip: float | None = None
    use_frequency_mask: bool = True
    use_random_mask: bool = True
    use_causal_mask: bool = True
    instruction_mode: str = "both"  # "task", "task_and_targets", or "both"

    def __post_init__(self) -> None:
        if not 0 < self.min_lr <= self.peak_lr:
            raise ValueError("need 0 < min_lr <= peak_lr")
        if self.transformer_lr_scale <= 0 or self.other_lr_scale <= 0:
            raise ValueError("lr scales must be positive")
        if self.stage not in ("pretrain", "tune"):
            raise ValueError(f"unknown stage {self.stage!r}")
        if self.instruction_mode not in ("task", "task_and_targets", "both"):
            raise ValueError(f"unknown instruction mode {self.instruction_mode!r}")


def cosine_lr(step: int, total_steps: int, peak: float, minimum: float) -> float:
    """Cosine annealing from peak (step 0) down to minimum (final step)."""
    if total_steps <= 0:
        raise ValueError("total_steps must be positive")
    if not 0 <= step <= total_steps:
        raise ValueError(f"step {step} outside [0, {total_steps}]")
    return minimum + 0.5 * (peak - minimum) * (1.0 + math.cos(math.pi * step / total_steps))


class AdamW(torch.optim.Optimizer):
    """Decoupled-weight-decay Adam with a per-group learning-rate scale."""

    def __init__(self, params, lr=1e-3, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.0):
        defaults = dict(lr=lr, betas=betas, eps=eps, weight_decay=weight_decay, lr_scale=1.0)
        super().__init__(params, defaults)

    @torch.no_grad()
    def step(self, closure=None):
        loss = closure() if closure is not None else None
        for group in self.param_groups:
            lr = group["lr"] * group["lr_scale"]
            beta1, beta2 = group["betas"]
            for p in group["params"]:
                if p.grad is None:
                    continue
                grad = p.grad
                if not torch.isfinite(grad).all():
                    raise FloatingPointError("non-finite gradient; aborting step")
                state = self.state[p]
                if len(state) == 0:
                    state["step"] = 0
                    state["exp_avg"] = torch.zeros_like(p)
                    state["exp_avg_sq"] = torch.zeros_like(p)
                state["step"] += 1
                t = state["step"]
                m, v = state["exp_avg"], state["exp_avg_sq"]
                m.mul_(beta1).add_(grad, alpha=1 - beta1)
                v.mul_(beta2).addcmul_(grad, grad, value=1 - beta2)
                if group["weight_decay"] != 0:
                    p.mul_(1 - lr * group["weight_decay"])
                m_hat = m / (1 - beta1**t)
                v_hat = v / (1 - beta2**t)
                p.addcdiv_(m_hat, v_hat.sqrt().add_(group["eps"]), value=-lr)
        return loss


def set_base_lr(optimizer: torch.optim.Optimizer, lr: float) -> None:
    for group in optimizer.param_groups:
        group["lr"] = lr


def _is_transformer_param(name: str) -> bool:
    return any(part in ("bidirectional", "causal") for part in name.split("."))


def parameter_groups(model: nn.Module, config: TrainConfig) -> list[dict]:
    """Two groups: the branch transformers (scaled lr) and everything else."""
    transformer, other = [], []
    for name, p in model.named_parameters():
        (transformer if _is_transformer_param(name) else other).append(p)
    return [
        {"params": transformer, "lr_scale": config.transformer_lr_scale},
        {"params": other, "lr_scale": config.other_lr_scale},
    ]


def grad_check(
    named_params: Iterable[tuple[str, torch.Tensor]],
    loss_fn: Callable[[], torch.Tensor],
    epsilon: float = 1e-5,
    max_coords_per_param: int | None = None,
    seed: int = 0,
) -> float:
    """Worst relative error between analytic and central-difference gradients.

    ``loss_fn`` must recompute the loss from scratch. Intended for float64
    parameters and tiny models; large tensors can be subsampled via
    ``max_coords_per_param`` (a deterministic coordinate sample per tensor).
    """
    named_params = list(named_params)
    params = [p for _, p in named_params]
    for p in params:
        p.grad = None
    loss_fn().backward()
    analytic = [None if p.grad is None else p.grad.detach().clone() for p in params]
    rng = np.random.default_rng(seed)
    worst = 0.0
    for (_, p), grad in zip(named_params, analytic):
        if grad is None:
            continue
        flat = p.detach().view(-1)
        n = flat.numel()
        if max_coords_per_param is not None and n > max_coords_per_param:
            coords = rng.choice(n, size=max_coords_per_param, replace=False)
        else:
            coords = range(n)
        for idx in coords:
            original = flat[idx].item()
            with torch.no_grad():
                flat[idx] = original + epsilon
            f_plus = float(loss_fn().detach())
            with torch.no_grad():
                flat[idx] = original - epsilon
            f_minus = float(loss_fn().detach())
            with torch.no_grad():
                flat[idx] = original
            numeric = (f_plus - f_minus) / (2 * epsilon)
            a = float(grad.view(-1)[idx])
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-6)
            worst = max(worst, err)
    for p in params:
        p.grad = None
    return worst


@dataclass
class EpochStats:
    epoch: int
    split: str
    loss: float
    lr: float


def write_history_csv(history: Sequence[EpochStats], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "split", "loss", "lr"])
        for row in history:
            writer.writerow([row.epoch, row.split, repr(row.loss), repr(row.lr)])


class FullModel(nn.Module):
    """Dual-branch encoder plus the instruction-conditioned head."""

    def __init__(self, encoder: DualEncoder, head: InstructionHead):
        super().__init__()
        self.encoder = encoder
        self.head = head

    def forward(self, segments: torch.Tensor, e_ins: torch.Tensor) -> torch.Tensor:
        """(B, S, 65, t) segments + (B, k) instructions -> (B, k) embeddings."""
        tokens = self.encoder.tokenizer(segments)
        m = self.encoder.encode_for_tuning(tokens)
        return self.head(m, e_ins)


@dataclass
class TuneDataset:
    """A labeled corpus with its instruction strings and prototype bank."""

    tag: str
    trials: list[RawTrial]
    entry: CatalogEntry
    bank: PrototypeBank


def make_tune_dataset(
    tag: str,
    trials: list[RawTrial],
    entry: CatalogEntry,
    embedder: TextEmbedder,
) -> TuneDataset:
    bank = PrototypeBank.from_embeddings([embedder(t) for t in entry.targets])
    for trial in trials:
        if trial.label is None:
            raise ValueError(f"trial {trial.trial_id!r} has no label")
        if trial.label not in entry.targets:
            raise KeyError(
                f"label {trial.label!r} of trial {trial.trial_id!r} has no prototype "
                f"in dataset {tag!r}"
            )
    return TuneDataset(tag=tag, trials=trials, entry=entry, bank=bank)


def trial_segments(trial: RawTrial, window_samples: int) -> np.ndarray:
    """(S, 65, t) float32 stack of a standardized trial's windows."""
    segs = segment(trial, window_samples)
    if not segs:
        raise ValueError(f"trial {trial.trial_id!r} shorter than one window")
    return np.stack([np.asarray(s.data, dtype=np.float32) for s in segs])


def _batched_indices(
    lengths: list[int], batch_size: int, rng: np.random.Generator
) -> list[list[int]]:
    """Shuffled batches of trial indices, grouped by equal segment count."""
    groups: dict[int, list[int]] = {}
    for i, n in enumerate(lengths):
        groups.setdefault(n, []).append(i)
    batches = []
    for n in sorted(groups):
        members = np.array(groups[n])
        members = members[rng.permutation(len(members))]
        for start in range(0, len(members), batch_size):
            batches.append([int(i) for i in members[start : start + batch_size]])
    return batches


@dataclass
class PretrainResult:
    model: DualEncoder
    history: list[EpochStats] = field(default_factory=list)
    steps_taken: int = 0
    total_steps: int = 0
    numpy_rng_state: dict | None = None
    torch_rng_state: torch.Tensor | None = None
    optimizer_state: dict | None = None
    epochs_done: int = 0


def run_pretrain(
    corpus: list[RawTrial],
    *,
    encoder_cfg: EncoderConfig | None = None,
    tokenizer_cfg: TokenizerConfig | None = None,
    train_cfg: TrainConfig | None = None,
    signal_cfg: SignalConfig | None = None,
    stop_after_epochs: int | None = None,
    resume: "Checkpoint | None" = None,
) -> PretrainResult:
    """Joint reconstruction pretraining over a standardized corpus.

    Per batch: optional spectral band masking per segment, tokenization, the
    masked-context loss (if enabled) and the next-slice loss (if enabled),
    then one optimizer step. Targets are always the unperturbed slices.
    ``stop_after_epochs`` ends the run early (for checkpoint/resume); the
    cosine schedule always spans the configured total epochs.
    """
    if not corpus:
        raise ValueError("pretraining corpus is empty")
    encoder_cfg = encoder_cfg or EncoderConfig()
    tokenizer_cfg = tokenizer_cfg or TokenizerConfig(d=encoder_cfg.d)
    train_cfg = train_cfg or TrainConfig()
    signal_cfg = signal_cfg or SignalConfig()
    if not (train_cfg.use_random_mask or train_cfg.use_causal_mask):
        raise ValueError(
            "no pretraining objective: enable the random and/or causal mask switch"
        )

    torch.manual_seed(train_cfg.seed)
    model = DualEncoder(encoder_cfg, tokenizer_cfg)
    rng = np.random.default_rng(train_cfg.seed)
    optimizer = AdamW(
        parameter_groups(model, train_cfg),
        lr=train_cfg.peak_lr,
        betas=train_cfg.betas,
        weight_decay=train_cfg.weight_decay,
    )
    start_epoch = 0
    history: list[EpochStats] = []
    if resume is not None:
        if resume.stage != "pretrain":
            raise ValueError(f"cannot resume pretraining from a {resume.stage!r} checkpoint")
        model.load_state_dict(resume.model_state)
        optimizer.load_state_dict(resume.optimizer_state)
        torch.set_rng_state(resume.torch_rng_state)
        rng.bit_generator.state = resume.numpy_rng_state
        start_epoch = resume.epochs_done
        history = [EpochStats(**row) for row in resume.history]

    stacks = [trial_segments(t, signal_cfg.window_samples) for t in corpus]
    lengths = [s.shape[0] for s in stacks]
    steps_per_epoch = len(_batched_indices(lengths, train_cfg.batch_size, np.random.default_rng(0)))
    total_steps = train_cfg.epochs * steps_per_epoch
    step = start_epoch * steps_per_epoch
    end_epoch = train_cfg.epochs if stop_after_epochs is None else stop_after_epochs
    tps = tokenizer_cfg.tokens_per_segment

    model.train()
    for epoch in range(start_epoch, end_epoch):
        epoch_loss, n_batches = 0.0, 0
        lr = train_cfg.peak_lr
        for batch in _batched_indices(lengths, train_cfg.batch_size, rng):
            lr = cosine_lr(step, total_steps, train_cfg.peak_lr, train_cfg.min_lr)
            set_base_lr(optimizer, lr)
            originals = np.stack([stacks[i] for i in batch])  # (B, S, 65, t)
            if train_cfg.use_frequency_mask:
                perturbed = _spectral_mask_batch(originals, corpus, batch, signal_cfg, rng)
            else:
                perturbed = originals
            seg_in = torch.from_numpy(np.ascontiguousarray(perturbed))
            targets = slice_targets(torch.from_numpy(np.ascontiguousarray(originals)), tps)
            tokens = model.tokenizer(seg_in)
            ctx = torch.zeros((), dtype=tokens.dtype)
            cau = torch.zeros((), dtype=tokens.dtype)
            if train_cfg.use_random_mask:
                masked, mask = model.mask_token_batch(tokens, encoder_cfg.mask_ratio, rng)
                states = model.forward_bidirectional(masked)
                ctx = loss_ctx(states, mask, targets, model.decoder)
            if train_cfg.use_causal_mask:
                states_c = model.forward_causal(tokens)
                cau = loss_cau(states_c, targets, model.decoder)
            loss = pretrain_loss(ctx, cau, encoder_cfg)
            optimizer.zero_grad(set_to_none=True)
            loss.backward()
            if train_cfg.grad_clip is not None:
                nn.utils.clip_grad_norm_(model.parameters(), train_cfg.grad_clip)
            optimizer.step()
            step += 1
            epoch_loss += float(loss.detach())
            n_batches += 1
        history.append(EpochStats(epoch=epoch, split="train", loss=epoch_loss / n_batches, lr=lr))
    model.eval()
    return PretrainResult(
        model=model,
        history=history,
        steps_taken=step,
        total_steps=total_steps,
        numpy_rng_state=rng.bit_generator.state,
        torch_rng_state=torch.get_rng_state(),
        optimizer_state=optimizer.state_dict(),
        epochs_done=end_epoch,
    )


def _spectral_mask_batch(
    originals: np.ndarray,
    corpus: list[RawTrial],
    batch: list[int],
    signal_cfg: SignalConfig,
    rng: np.random.Generator,
) -> np.ndarray:
    """Suppress an independently sampled frequency band in every segment."""
    from .signal import Segment

    out = np.empty_like(originals)
    for b, trial_idx in enumerate(batch):
        for s in range(originals.shape[1]):
            band = sample_mask_band(
                rng,
                signal_cfg.mask_cutoff_lo_hz,
                signal_cfg.mask_cutoff_hi_hz,
                signal_cfg.mask_band_width_hz,
            )
            seg = Segment(
                data=originals[b, s], trial_id=corpus[trial_idx].trial_id, index=s
            )
            out[b, s] = spectral_mask(seg, band, sample_rate=signal_cfg.target_rate_hz).data
    return out


@dataclass
class TuneResult:
    model: FullModel
    history: list[EpochStats] = field(default_factory=list)
    datasets: list[TuneDataset] = field(default_factory=list)
    steps_taken: int = 0
    total_steps: int = 0
    numpy_rng_state: dict | None = None
    torch_rng_state: torch.Tensor | None = None
    optimizer_state: dict | None = None
    epochs_done: int = 0


def run_tune(
    datasets: list[TuneDataset],
    pretrained: DualEncoder,
    embedder: TextEmbedder,
    *,
    instruct_cfg: InstructConfig | None = None,
    train_cfg: TrainConfig | None = None,
    signal_cfg: SignalConfig | None = None,
    val_datasets: list[TuneDataset] | None = None,
) -> TuneResult:
    """Instruction tuning against prototype targets.

    Per batch: encode, FiLM-condition on each sample's instruction embedding,
    query cross-attention, aggregation, alignment loss, one optimizer step
    with the transformer groups at their reduced learning-rate scale. With
    ``instruction_mode = "both"`` each sample alternates randomly between its
    dataset's two instruction phrasings.
    """
    if not datasets or all(not d.trials for d in datasets):
        raise ValueError("tuning corpus is empty")
    instruct_cfg = instruct_cfg or InstructConfig()
    train_cfg = train_cfg or TrainConfig(stage="tune")
    signal_cfg = signal_cfg or SignalConfig()

    torch.manual_seed(train_cfg.seed)
    n_classes = max(d.bank.size for d in datasets)
    head = InstructionHead(pretrained.config.d, instruct_cfg, n_classes=n_classes)
    model = FullModel(encoder=pretrained, head=head)
    rng = np.random.default_rng(train_cfg.seed)
    optimizer = AdamW(
        parameter_groups(model, train_cfg),
        lr=train_cfg.peak_lr,
        betas=train_cfg.betas,
        weight_decay=train_cfg.weight_decay,
    )

    samples = [(di, ti) for di, ds in enumerate(datasets) for ti in range(len(ds.trials))]
    stacks = [
        trial_segments(datasets[di].trials[ti], signal_cfg.window_samples)
        for di, ti in samples
    ]
    lengths = [s.shape[0] for s in stacks]
    steps_per_epoch = len(_batched_indices(lengths, train_cfg.batch_size, np.random.default_rng(0)))
    total_steps = train_cfg.epochs * steps_per_epoch
    step = 0
    history: list[EpochStats] = []

    cache: dict[str, torch.Tensor] = {}
    for ds in datasets + (val_datasets or []):
        for text in ds.entry.training_instructions():
            if text not in cache:
                cache[text] = torch.from_numpy(embedder(text).vector).to(torch.float32)

    model.train()
    for epoch in range(train_cfg.epochs):
        epoch_loss, n_batches = 0.0, 0
        lr = train_cfg.peak_lr
        for batch in _batched_indices(lengths, train_cfg.batch_size, rng):
            lr = cosine_lr(step, total_steps, train_cfg.peak_lr, train_cfg.min_lr)
            set_base_lr(optimizer, lr)
            seg_in = torch.from_numpy(
                np.ascontiguousarray(np.stack([stacks[i] for i in batch]))
            )
            e_ins, protos, sizes, label_idx = [], [], [], []
            for i in batch:
                di, ti = samples[i]
                ds = datasets[di]
                text = _choose_instruction(ds.entry, train_cfg.instruction_mode, rng)
                e_ins.append(cache[text])
                y = ds.trials[ti].label
                protos.append(ds.bank.vectors[ds.bank.index(y)])
                sizes.append(ds.bank.size)
                label_idx.append(ds.bank.index(y))
            h = model(seg_in, torch.stack(e_ins))
            if instruct_cfg.head == "softmax":
                loss = nn.functional.cross_entropy(h, torch.tensor(label_idx))
            else:
                proto_mat = torch.stack(protos).to(h.dtype)
                cos = (h * proto_mat).sum(dim=-1) / h.norm(dim=-1)
                loss = ((1.0 - cos) / torch.tensor(sizes, dtype=h.dtype)).mean()
            optimizer.zero_grad(set_to_none=True)
            loss.backward()
            if train_cfg.grad_clip is not None:
                nn.utils.clip_grad_norm_(model.parameters(), train_cfg.grad_clip)
            optimizer.step()
            step += 1
            epoch_loss += float(loss.detach())
            n_batches += 1
        history.append(EpochStats(epoch=epoch, split="train", loss=epoch_loss / n_batches, lr=lr))
        if val_datasets:
            val_loss = _tune_eval_loss(model, val_datasets, signal_cfg, instruct_cfg, cache)
            history.append(EpochStats(epoch=epoch, split="val", loss=val_loss, lr=lr))
    model.eval()
    return TuneResult(
        model=model,
        history=history,
        datasets=datasets,
        steps_taken=step,
        total_steps=total_steps,
        numpy_rng_state=rng.bit_generator.state,
        torch_rng_state=torch.get_rng_state(),
        optimizer_state=optimizer.state_dict(),
        epochs_done=train_cfg.epochs,
    )


def _choose_instruction(entry: CatalogEntry, mode: str, rng: np.random.Generator) -> str:
    task, task_targets = entry.training_instructions()
    if mode == "task":
        return task
    if mode == "task_and_targets":
        return task_targets
    return task if rng.integers(2) == 0 else task_targets


def _tune_eval_loss(model, val_datasets, signal_cfg, instruct_cfg, cache) -> float:
    was_training = model.training
    model.eval()
    total, count = 0.0, 0
    with torch.no_grad():
        for ds in val_datasets:
            e = cache[ds.entry.task_instruction]
            for trial in ds.trials:
                seg_in = torch.from_numpy(trial_segments(trial, signal_cfg.window_samples))[None]
                h = model(seg_in, e[None])
                if instruct_cfg.head == "softmax":
                    idx = torch.tensor([ds.bank.index(trial.label)])
                    total += float(nn.functional.cross_entropy(h, idx))
                else:
                    total += float(alignment_loss(h[0], trial.label, ds.bank))
                count += 1
    model.train(was_training)
    return total / max(count, 1)


# --- checkpointing ---------------------------------------------------------


@dataclass
class Checkpoint:
    """Everything needed to reproduce forwards bitwise and resume training."""

    version: int
    stage: str
    model_state: dict
    optimizer_state: dict | None
    epochs_done: int
    steps_taken: int
    total_steps: int
    torch_rng_state: torch.Tensor | None
    numpy_rng_state: dict | None
    config: dict
    tags: dict
    history: list[dict]
    banks: dict | None = None
    embed_source: dict | None = None


def _config_snapshot(**configs) -> dict:
    return {name: asdict(cfg) for name, cfg in configs.items() if cfg is not None}


def checkpoint_from_pretrain(
    result: PretrainResult,
    *,
    encoder_cfg: EncoderConfig,
    tokenizer_cfg: TokenizerConfig,
    train_cfg: TrainConfig,
    signal_cfg: SignalConfig,
) -> Checkpoint:
    return Checkpoint(
        version=CHECKPOINT_VERSION,
        stage="pretrain",
        model_state=result.model.state_dict(),
        optimizer_state=result.optimizer_state,
        epochs_done=result.epochs_done,
        steps_taken=result.steps_taken,
        total_steps=result.total_steps,
        torch_rng_state=result.torch_rng_state,
        numpy_rng_state=result.numpy_rng_state,
        config=_config_snapshot(
            encoder=encoder_cfg, tokenizer=tokenizer_cfg, train=train_cfg, signal=signal_cfg
        ),
        tags=dict(MODEL_TAGS),
        history=[asdict(row) for row in result.history],
    )


def checkpoint_from_tune(
    result: TuneResult,
    *,
    encoder_cfg: EncoderConfig,
    tokenizer_cfg: TokenizerConfig,
    instruct_cfg: InstructConfig,
    train_cfg: TrainConfig,
    signal_cfg: SignalConfig,
    embed_source: dict | None = None,
) -> Checkpoint:
    banks = {
        ds.tag: {
            "classes": list(ds.bank.classes),
            "vectors": ds.bank.vectors,
            "entry": {
                "name": ds.entry.name,
                "task": ds.entry.task_instruction,
                "task_and_targets": ds.entry.task_and_targets_instruction,
                "targets": list(ds.entry.targets),
            },
        }
        for ds in result.datasets
    }
    return Checkpoint(
        version=CHECKPOINT_VERSION,
        stage="tune",
        model_state=result.model.state_dict(),
        optimizer_state=result.optimizer_state,
        epochs_done=result.epochs_done,
        steps_taken=result.steps_taken,
        total_steps=result.total_steps,
        torch_rng_state=result.torch_rng_state,
        numpy_rng_state=result.numpy_rng_state,
        config=_config_snapshot(
            encoder=encoder_cfg,
            tokenizer=tokenizer_cfg,
            instruct=instruct_cfg,
            train=train_cfg,
            signal=signal_cfg,
        ),
        tags=dict(MODEL_TAGS),
        history=[asdict(row) for row in result.history],
        banks=banks,
        embed_source=embed_source,
    )


def checkpoint_save(ckpt: Checkpoint, path: str | Path) -> None:
    """Atomic write: serialize to a sibling temp file, then rename."""
    path = Path(path)
    payload = asdict(ckpt)
    tmp = path.with_name(path.name + ".tmp")
    torch.save(payload, tmp)
    os.replace(tmp, path)


def checkpoint_load(path: str | Path) -> Checkpoint:
    path = Path(path)
    try:
        payload = torch.load(path, map_location="cpu", weights_only=False)
    except Exception as exc:
        raise ValueError(f"cannot read checkpoint {path}: {exc}") from exc
    version = payload.get("version")
    if version != CHECKPOINT_VERSION:
        raise ValueError(
            f"checkpoint version {version} unsupported (this build reads {CHECKPOINT_VERSION})"
        )
    return Checkpoint(**payload)


def _cfg_from_dict(cls, data: dict):
    known = {f for f in cls.__dataclass_fields__}
    kwargs = {k: v for k, v in data.items() if k in known}
    if "betas" in kwargs:
        kwargs["betas"] = tuple(kwargs["betas"])
    return cls(**kwargs)


def configs_from_checkpoint(ckpt: Checkpoint) -> dict:
    out = {}
    builders = {
        "encoder": EncoderConfig,
        "tokenizer": TokenizerConfig,
        "instruct": InstructConfig,
        "train": TrainConfig,
        "signal": SignalConfig,
    }
    for name, cls in builders.items():
        if name in ckpt.config:
            out[name] = _cfg_from_dict(cls, ckpt.config[name])
    return out


def model_from_checkpoint(ckpt: Checkpoint) -> DualEncoder | FullModel:
    """Rebuild the saved model; forward outputs match the saved run bitwise."""
    cfgs = configs_from_checkpoint(ckpt)
    encoder = DualEncoder(cfgs["encoder"], cfgs["tokenizer"])
    if ckpt.stage == "pretrain":
        encoder.load_state_dict(ckpt.model_state)
        encoder.eval()
        return encoder
    n_classes = max(len(b["classes"]) for b in (ckpt.banks or {"": {"classes": [0, 0]}}).values())
    head = InstructionHead(cfgs["encoder"].d, cfgs["instruct"], n_classes=n_classes)
    model = FullModel(encoder=encoder, head=head)
    model.load_state_dict(ckpt.model_state)
    model.eval()
    return model


def banks_from_checkpoint(ckpt: Checkpoint) -> dict[str, tuple[CatalogEntry, PrototypeBank]]:
    if not ckpt.banks:
        raise ValueError("checkpoint carries no prototype banks (pretrain stage?)")
    out = {}
    for tag, raw in ckpt.banks.items():
        entry = CatalogEntry(
            name=raw["entry"]["name"],
            task_instruction=raw["entry"]["task"],
            task_and_targets_instruction=raw["entry"]["task_and_targets"],
            targets=tuple(raw["entry"]["targets"]),
        )
        bank = PrototypeBank(classes=tuple(raw["classes"]), vectors=raw["vectors"])
        out[tag] = (entry, bank)
    return out
