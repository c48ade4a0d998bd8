"""Dataset indexing, the random batch generator and the epoch loop."""

from __future__ import annotations

import dataclasses
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .imaging import ImageIOError, degrade, list_pngs, load_image, resize_bilinear
from .nn import (
    AdamState,
    PlateauScheduler,
    UNetModel,
    adam_step,
    checkpoint_save,
    mse_loss_and_grad,
    unet_backward,
    unet_forward,
)

log = logging.getLogger(__name__)


class NonFiniteLossError(FloatingPointError):
    def __init__(self, epoch: int, step: int, loss: float):
        self.epoch, self.step, self.loss = epoch, step, loss
        super().__init__(f"non-finite loss {loss} at epoch {epoch}, step {step}")


@dataclass
class TrainConfig:
    epochs: int = 40
    steps_per_epoch: int = 20
    batch_size: int = 10
    scale_percent: int = 50
    lr: float = 1e-3
    seed: int = 0
    image_size: int = 256
    dataset_dir: str | None = None
    checkpoint_dir: str | None = None
    loss_log: str | None = None
    channels: tuple[int, int] = (32, 64)
    dropout_rate: float = 0.25
    # train on mask-extracted pairs instead of whole images (needs <stem>.mask.png files)
    train_on_masked: bool = False

    def __post_init__(self):
        self.channels = tuple(self.channels)
        self.validate()

    def validate(self) -> None:
        if self.image_size < 4 or self.image_size % 4:
            raise ValueError(f"image_size must be a positive multiple of 4, got {self.image_size}")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 0 or self.steps_per_epoch < 1:
            raise ValueError("epochs must be >= 0 and steps_per_epoch >= 1")
        if not 1 <= self.scale_percent <= 100:
            raise ValueError("scale_percent must be in [1, 100]")
        if not (self.lr >= 0 and math.isfinite(self.lr)):
            raise ValueError("lr must be a finite non-negative number")
        if len(self.channels) != 2 or min(self.channels) < 1:
            raise ValueError("channels must be two positive integers")
        if not 0 <= self.dropout_rate < 1:
            raise ValueError("dropout_rate must be in [0, 1)")

    @classmethod
    def from_sources(cls, json_path=None, **overrides) -> "TrainConfig":
        """Build from an optional JSON file, then apply non-None ``overrides``."""
        values = {}
        if json_path is not None:
            with open(json_path, encoding="utf-8") as f:
                values = json.load(f)
            if not isinstance(values, dict):
                raise ValueError(f"{json_path}: config must be a JSON object")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(values) - known)
        if unknown:
            raise ValueError(f"unknown config keys: {unknown}")
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["channels"] = list(self.channels)
        return d


@dataclass(frozen=True)
class LossRecord:
    epoch: int
    mean_loss: float
    lr: float


@dataclass
class LossLog:
    records: list[LossRecord] = field(default_factory=list)

    HEADER = "epoch,mean_loss,lr\n"

    @staticmethod
    def format_row(rec: LossRecord) -> str:
        return f"{rec.epoch},{rec.mean_loss!r},{rec.lr!r}\n"

    def to_csv(self) -> str:
        return self.HEADER + "".join(self.format_row(r) for r in self.records)

    def losses(self) -> list[float]:
        return [r.mean_loss for r in self.records]


def _is_mask_file(path: Path) -> bool:
    return ".mask" in path.name[: -len(path.suffix)]


def index_dataset(directory) -> list[Path]:
    """Sorted PNG paths in ``directory`` (mask files excluded)."""
    paths = [p for p in list_pngs(directory) if not _is_mask_file(p)]
    if not paths:
        raise ImageIOError(directory, "dataset directory contains no PNG images")
    return paths


def _load_pair(path: Path, cfg: TrainConfig):
    hr = load_image(path)
    if hr.shape[:2] != (cfg.image_size, cfg.image_size):
        hr = resize_bilinear(hr, cfg.image_size, cfg.image_size)
    lr = degrade(hr, cfg.scale_percent)
    if cfg.train_on_masked:
        from .pipeline import extract_foreground, find_masks, load_masks

        mask_paths = find_masks(path)
        if not mask_paths:
            raise ImageIOError(path, "train_on_masked is set but no <stem>.mask.png exists")
        mask = load_masks(mask_paths, shape=hr.shape[:2])
        hr, lr = extract_foreground(hr, mask), extract_foreground(lr, mask)
    return lr, hr


def batch_generate(index, cfg: TrainConfig, rng: np.random.Generator, cache: dict | None = None):
    """Draw ``batch_size`` images uniformly with replacement.

    Returns ``(lr_batch, hr_batch)`` as float32 NHWC arrays in sample order.
    ``cache`` (path -> (lr, hr)) only saves decoding work; results are identical
    with or without it.
    """
    if len(index) == 0:
        raise ValueError("cannot sample from an empty dataset index")
    picks = rng.integers(0, len(index), size=cfg.batch_size)
    lrs, hrs = [], []
    for i in picks:
        path = Path(index[i])
        if cache is not None and path in cache:
            lr, hr = cache[path]
        else:
            lr, hr = _load_pair(path, cfg)
            if cache is not None:
                cache[path] = (lr, hr)
        lrs.append(lr)
        hrs.append(hr)
    return np.stack(lrs).astype(np.float32), np.stack(hrs).astype(np.float32)


def _streams(seed: int):
    init_ss, sample_ss, dropout_ss = np.random.SeedSequence(seed).spawn(3)
    return (int(init_ss.generate_state(1)[0]),
            np.random.default_rng(sample_ss),
            np.random.default_rng(dropout_ss))


def train_step(model: UNetModel, state: AdamState, lr_batch, hr_batch, dropout_seed: int) -> float:
    out, tape = unet_forward(model, lr_batch, train_mode=True, rng_seed=dropout_seed)
    loss, grad = mse_loss_and_grad(out, hr_batch)
    if math.isfinite(loss):
        adam_step(model.params, unet_backward(model, tape, grad), state)
    return loss


def fit(cfg: TrainConfig, index=None):
    """Train from scratch. Returns ``(model, state, loss_log)``.

    Each epoch runs ``steps_per_epoch`` Adam steps, records the mean step
    loss with the learning rate used, feeds that mean to the plateau
    scheduler, and writes ``ckpt_epoch_{e}.fsr`` when ``checkpoint_dir`` is set.
    """
    if index is None:
        if cfg.dataset_dir is None:
            raise ValueError("no dataset_dir configured")
        index = index_dataset(cfg.dataset_dir)
    init_seed, sample_rng, dropout_rng = _streams(cfg.seed)
    model = UNetModel.init(init_seed, cfg.channels, cfg.dropout_rate)
    state = AdamState.for_params(model.params, lr=cfg.lr)
    sched = PlateauScheduler(lr=cfg.lr)
    log_ = LossLog()
    cache: dict = {}

    ckpt_dir = Path(cfg.checkpoint_dir) if cfg.checkpoint_dir else None
    if ckpt_dir is not None:
        ckpt_dir.mkdir(parents=True, exist_ok=True)
    csv = None
    if cfg.loss_log:
        Path(cfg.loss_log).parent.mkdir(parents=True, exist_ok=True)
        csv = open(cfg.loss_log, "w", encoding="utf-8", newline="\n")
        csv.write(LossLog.HEADER)
        csv.flush()
    try:
        for epoch in range(1, cfg.epochs + 1):
            lr_in_effect = state.lr
            losses = []
            for step in range(1, cfg.steps_per_epoch + 1):
                lr_b, hr_b = batch_generate(index, cfg, sample_rng, cache)
                loss = train_step(model, state, lr_b, hr_b, int(dropout_rng.integers(2**63)))
                if not math.isfinite(loss):
                    raise NonFiniteLossError(epoch, step, loss)
                losses.append(loss)
            rec = LossRecord(epoch, float(sum(losses) / len(losses)), lr_in_effect)
            log_.records.append(rec)
            state.lr = sched.step(rec.mean_loss)
            log.info("epoch %d/%d  loss %.4f  lr %.2e", epoch, cfg.epochs, rec.mean_loss, rec.lr)
            if csv is not None:
                csv.write(LossLog.format_row(rec))
                csv.flush()
            if ckpt_dir is not None:
                checkpoint_save(model, state, ckpt_dir / f"ckpt_epoch_{epoch}.fsr")
    finally:
        if csv is not None:
            csv.close()
    return model, state, log_


def predict(model: UNetModel, img: np.ndarray) -> np.ndarray:
    """Eval-mode inference on one (H, W, 3) image; output is unclamped float64."""
    x = np.asarray(img, dtype=np.float32)[None]
    out, _ = unet_forward(model, x, train_mode=False)
    return out[0].astype(np.float64)
