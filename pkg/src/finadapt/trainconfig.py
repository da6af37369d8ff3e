"""Two-stage fine-tuning configuration.

Stage one continues next-token pre-training on packed 2048-token document
blocks for two epochs, saving four checkpoints per epoch. Stage two
fine-tunes on rendered instructions at a context of 1000 tokens for one
epoch; sequences longer than the context are cut off and shorter ones are
right-padded. Both stages share the optimizer block: AdamW, learning rate
1e-4, weight decay 0.1, batch size 32, gradient accumulation 4.

Serialization is canonical (sorted keys, fixed indentation), so emitting the
same stage twice yields byte-identical files.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from .errors import InputDataError
from .tokenization import TokenIdOutOfRange


class Stage(str, Enum):
    DOCS_PRETRAIN = "docs_pretrain"
    INSTRUCTION_FINETUNE = "instruction_finetune"


@dataclass(frozen=True)
class TrainConfig:
    stage: Stage
    context_len: int
    epochs: int
    checkpoints_per_epoch: int
    optimizer: str = "adamw"
    learning_rate: float = 1e-4
    weight_decay: float = 0.1
    batch_size: int = 32
    grad_accum: int = 4
    pad_token_policy: str = "none"  # "none" or "pad_to_context"
    select_best_by: str = "eval_loss"
    loss_masking: str = "full_sequence"  # "full_sequence" or "answer_only"

    def validate(self) -> None:
        if self.context_len < 1 or self.epochs < 1 or self.checkpoints_per_epoch < 1:
            raise InputDataError("context_len, epochs, checkpoints_per_epoch must be >= 1")
        if self.learning_rate <= 0 or self.weight_decay < 0:
            raise InputDataError("learning_rate must be > 0 and weight_decay >= 0")
        if self.batch_size < 1 or self.grad_accum < 1:
            raise InputDataError("batch_size and grad_accum must be >= 1")
        if self.pad_token_policy not in ("none", "pad_to_context"):
            raise InputDataError(f"unknown pad policy {self.pad_token_policy!r}")
        if self.loss_masking not in ("full_sequence", "answer_only"):
            raise InputDataError(f"unknown loss masking {self.loss_masking!r}")
        if self.stage is Stage.DOCS_PRETRAIN:
            ok = (
                self.context_len == 2048
                and self.epochs == 2
                and self.checkpoints_per_epoch == 4
                and self.pad_token_policy == "none"
            )
            if not ok:
                raise InputDataError("document pre-training stage fields are fixed")
        if self.stage is Stage.INSTRUCTION_FINETUNE:
            ok = (
                self.context_len == 1000
                and self.epochs == 1
                and self.pad_token_policy == "pad_to_context"
            )
            if not ok:
                raise InputDataError("instruction fine-tuning stage fields are fixed")

    def to_json_dict(self) -> dict:
        return {
            "stage": self.stage.value,
            "context_len": self.context_len,
            "epochs": self.epochs,
            "checkpoints_per_epoch": self.checkpoints_per_epoch,
            "optimizer": self.optimizer,
            "learning_rate": self.learning_rate,
            "weight_decay": self.weight_decay,
            "batch_size": self.batch_size,
            "grad_accum": self.grad_accum,
            "pad_token_policy": self.pad_token_policy,
            "select_best_by": self.select_best_by,
            "loss_masking": self.loss_masking,
        }


def emit_config(stage: Stage) -> TrainConfig:
    if stage is Stage.DOCS_PRETRAIN:
        config = TrainConfig(
            stage=stage,
            context_len=2048,
            epochs=2,
            checkpoints_per_epoch=4,
            pad_token_policy="none",
        )
    elif stage is Stage.INSTRUCTION_FINETUNE:
        config = TrainConfig(
            stage=stage,
            context_len=1000,
            epochs=1,
            checkpoints_per_epoch=4,
            pad_token_policy="pad_to_context",
        )
    else:
        raise InputDataError(f"unknown stage {stage!r}")
    config.validate()
    return config


def serialize_config(
    config: TrainConfig,
    dataset_path: str = "",
    seed: int = 0,
    pad_token_id: int | None = None,
    init_from: str = "",
) -> str:
    """Canonical JSON for the config file consumed by the trainer."""
    config.validate()
    body = config.to_json_dict()
    body["dataset_path"] = dataset_path
    body["seed"] = seed
    if pad_token_id is not None:
        body["pad_token_id"] = pad_token_id
    if init_from:
        body["init_from"] = init_from
    return json.dumps(body, sort_keys=True, indent=2) + "\n"


def write_config(
    config: TrainConfig,
    path: str | Path,
    dataset_path: str = "",
    seed: int = 0,
    pad_token_id: int | None = None,
    init_from: str = "",
) -> None:
    Path(path).write_text(
        serialize_config(
            config,
            dataset_path=dataset_path,
            seed=seed,
            pad_token_id=pad_token_id,
            init_from=init_from,
        ),
        encoding="utf-8",
    )


def load_config(path: str | Path) -> tuple[TrainConfig, dict]:
    """Read a config file back; returns the config and the full raw record."""
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise InputDataError(f"cannot load train config from {path}: {exc}") from exc
    try:
        config = TrainConfig(
            stage=Stage(raw["stage"]),
            context_len=int(raw["context_len"]),
            epochs=int(raw["epochs"]),
            checkpoints_per_epoch=int(raw["checkpoints_per_epoch"]),
            optimizer=str(raw["optimizer"]),
            learning_rate=float(raw["learning_rate"]),
            weight_decay=float(raw["weight_decay"]),
            batch_size=int(raw["batch_size"]),
            grad_accum=int(raw["grad_accum"]),
            pad_token_policy=str(raw["pad_token_policy"]),
            select_best_by=str(raw.get("select_best_by", "eval_loss")),
            loss_masking=str(raw.get("loss_masking", "full_sequence")),
        )
    except (KeyError, ValueError) as exc:
        raise InputDataError(f"{path}: invalid train config: {exc}") from exc
    config.validate()
    return config, raw


def fit_to_context(
    ids: list[int],
    config: TrainConfig,
    pad_id: int,
    vocab_size: int | None = None,
) -> list[int]:
    """Truncate to the stage context or right-pad up to it."""
    if config.stage is not Stage.INSTRUCTION_FINETUNE:
        raise InputDataError("fit_to_context applies to the instruction fine-tuning stage")
    if pad_id < 0 or (vocab_size is not None and pad_id >= vocab_size):
        raise TokenIdOutOfRange(f"pad id {pad_id} outside vocabulary")
    if len(ids) >= config.context_len:
        return list(ids[: config.context_len])
    return list(ids) + [pad_id] * (config.context_len - len(ids))
