"""Loss aggregation, optimisation steps, checkpoints and the training loop."""
from __future__ import annotations

import hashlib
import io
import json
import logging
import math
from pathlib import Path
from typing import Sequence

import torch
from torch import nn

from .adversarial import MultiLengthDiscriminator, WindowSpec, gan_losses
from .config import Config
from .corpus import load_manifest
from .data import Batch, Example, Vocab, batch_order, collate, example_from_record, variance_ranges
from .model import AcousticModel, GeneratorOutput
from .phrasing import pause_loss
from .tensorfile import atomic_write_bytes

log = logging.getLogger(__name__)

LOSS_TERMS = ("loss_mel", "loss_dur", "loss_pitch", "loss_energy", "loss_pause", "loss_adv_g")
LOG_FIELDS = ("step", "loss_total") + LOSS_TERMS + ("loss_adv_d",)
CHECKPOINT_FORMAT = "pausetts-checkpoint-1"


class NonFiniteLossError(FloatingPointError):
    def __init__(self, term: str, step: int):
        super().__init__(f"non-finite {term} at step {step}")
        self.term = term
        self.step = step


def step_seed(seed: int, step: int) -> int:
    return (seed * 1_000_003 + step) % (2**63 - 1)


def adversarial_active(cfg: Config, step: int) -> bool:
    return cfg.adv.enabled and step >= cfg.adv.warmup_steps


def _masked_mean(values: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    m = mask.to(values.dtype)
    while m.dim() < values.dim():
        m = m.unsqueeze(-1)
    m = m.expand_as(values)
    return (values * m).sum() / m.sum().clamp(min=1.0)


def total_generator_loss(
    out: GeneratorOutput, batch: Batch, cfg: Config, step: int, adv_g_loss: torch.Tensor | None = None
) -> tuple[torch.Tensor, dict[str, torch.Tensor]]:
    """Weighted sum of reconstruction, variance, pause and (after warmup) adversarial terms."""
    t = cfg.train
    T = batch.mel.shape[1]
    mel_pred = out.mel[:, :T]
    terms = {
        "loss_mel": _masked_mean((mel_pred - batch.mel).abs(), batch.mel_mask),
        "loss_dur": _masked_mean(
            (out.log_duration - torch.log1p(batch.durations.to(out.log_duration.dtype))) ** 2, batch.ph_mask
        ),
        "loss_pitch": _masked_mean((out.pitch - batch.pitch) ** 2, batch.ph_mask),
        "loss_energy": _masked_mean((out.energy - batch.energy) ** 2, batch.ph_mask),
    }
    if out.pause_logits is not None:
        terms["loss_pause"] = pause_loss(out.pause_logits, batch.pause_labels, batch.word_mask)
    else:
        terms["loss_pause"] = mel_pred.new_zeros(())
    if adv_g_loss is not None and adversarial_active(cfg, step):
        terms["loss_adv_g"] = adv_g_loss
    else:
        terms["loss_adv_g"] = mel_pred.new_zeros(())
    weights = {
        "loss_mel": t.w_mel,
        "loss_dur": t.w_dur,
        "loss_pitch": t.w_pitch,
        "loss_energy": t.w_energy,
        "loss_pause": t.w_pause,
        "loss_adv_g": cfg.adv.weight,
    }
    for name, value in terms.items():
        if not torch.isfinite(value):
            raise NonFiniteLossError(name, step)
    total = sum(weights[k] * terms[k] for k in LOSS_TERMS)
    return total, terms


def decay_groups(module: nn.Module, weight_decay: float) -> list[dict]:
    """Decoupled weight decay on every parameter except biases."""
    decay, no_decay = [], []
    for name, p in module.named_parameters():
        (no_decay if name.endswith("bias") else decay).append(p)
    return [
        {"params": decay, "weight_decay": weight_decay},
        {"params": no_decay, "weight_decay": 0.0},
    ]


def make_optimizer(module: nn.Module, cfg: Config) -> torch.optim.AdamW:
    t = cfg.train
    return torch.optim.AdamW(
        decay_groups(module, t.weight_decay), lr=t.lr, betas=(t.beta1, t.beta2), eps=t.eps
    )


def parameter_hash(module: nn.Module) -> str:
    h = hashlib.sha256()
    for name, tensor in sorted(module.state_dict().items()):
        h.update(name.encode())
        h.update(tensor.detach().cpu().contiguous().numpy().tobytes())
    return h.hexdigest()


class Trainer:
    """Owns generator, discriminator, their optimizers and the global step."""

    def __init__(self, cfg: Config, vocab: Vocab, ctx_dim: int, dtype: torch.dtype = torch.float32):
        self.cfg = cfg
        self.vocab = vocab
        self.ctx_dim = ctx_dim
        self.dtype = dtype
        torch.manual_seed(cfg.train.seed)
        self.model = AcousticModel(len(vocab), ctx_dim, cfg.model).to(dtype)
        self.discriminator = MultiLengthDiscriminator(
            cfg.model.n_mels, cfg.adv.window_lengths, cfg.adv.hidden, cfg.adv.n_layers
        ).to(dtype)
        self.opt_g = make_optimizer(self.model, cfg)
        self.opt_d = make_optimizer(self.discriminator, cfg)
        self.window_spec = WindowSpec(tuple(cfg.adv.window_lengths), cfg.train.seed)
        self.step = 0

    # -- optimisation ---------------------------------------------------------------------------

    def train_step(self, batch: Batch) -> dict[str, float]:
        """One generator update (plus a discriminator update once adversarial training is active)."""
        cfg, step = self.cfg, self.step
        batch = batch.to(self.dtype)
        torch.manual_seed(step_seed(cfg.train.seed, step))
        rng = torch.Generator().manual_seed(step_seed(cfg.train.seed + 1, step))
        self.model.train()
        self.discriminator.train()

        out = self.model(batch)
        mel_fake = out.mel[:, : batch.mel.shape[1]]
        adv_on = adversarial_active(cfg, step)
        placements, g_adv = [], None
        if adv_on:
            placements = self.discriminator.place_windows(batch.mel_mask, self.window_spec, rng)
            if placements:
                real_s, fake_s = self.discriminator.score_pairs(batch.mel, mel_fake, placements)
                _, g_adv = gan_losses(real_s, fake_s)
        total, terms = total_generator_loss(out, batch, cfg, step, g_adv)
        if not torch.isfinite(total):
            raise NonFiniteLossError("loss_total", step)
        self.opt_g.zero_grad(set_to_none=False)
        total.backward()
        self.opt_g.step()

        d_loss = None
        if adv_on and placements:
            real_s, fake_s = self.discriminator.score_pairs(batch.mel, mel_fake.detach(), placements)
            d_loss, _ = gan_losses(real_s, fake_s)
            if not torch.isfinite(d_loss):
                raise NonFiniteLossError("loss_adv_d", step)
            self.opt_d.zero_grad(set_to_none=False)
            d_loss.backward()
            self.opt_d.step()

        metrics = {"step": step, "loss_total": float(total.detach())}
        metrics.update({k: float(v.detach()) for k, v in terms.items()})
        metrics["loss_adv_d"] = float(d_loss.detach()) if d_loss is not None else 0.0
        self.step += 1
        return metrics

    # -- checkpoints ------------------------------------------------------------------------------

    def state_dict(self) -> dict:
        ckpt = {
            "format": CHECKPOINT_FORMAT,
            "config": self.cfg.to_dict(),
            "vocab": self.vocab.symbols,
            "ctx_dim": self.ctx_dim,
            "discriminator": self.discriminator.state_dict(),
            "trainer": {
                "step": self.step,
                "opt_g": self.opt_g.state_dict(),
                "opt_d": self.opt_d.state_dict(),
                "seed": self.cfg.train.seed,
                "dtype": str(self.dtype),
            },
        }
        for section in AcousticModel.SECTIONS:
            ckpt[section] = getattr(self.model, section).state_dict()
        return ckpt

    def save(self, path) -> Path:
        buf = io.BytesIO()
        torch.save(self.state_dict(), buf)
        atomic_write_bytes(path, buf.getvalue())
        return Path(path)

    @classmethod
    def from_checkpoint(cls, path, cfg: Config | None = None) -> "Trainer":
        ckpt = read_checkpoint(path)
        saved_cfg = Config.from_dict(ckpt["config"])
        if cfg is None:
            cfg = saved_cfg
        elif cfg.model != saved_cfg.model:
            raise ValueError(f"{path}: model config differs from the checkpoint's")
        dtype = torch.float64 if ckpt["trainer"].get("dtype") == "torch.float64" else torch.float32
        trainer = cls(cfg, Vocab(ckpt["vocab"]), ckpt["ctx_dim"], dtype)
        for section in AcousticModel.SECTIONS:
            getattr(trainer.model, section).load_state_dict(ckpt[section])
        trainer.discriminator.load_state_dict(ckpt["discriminator"])
        trainer.opt_g.load_state_dict(ckpt["trainer"]["opt_g"])
        trainer.opt_d.load_state_dict(ckpt["trainer"]["opt_d"])
        trainer.step = int(ckpt["trainer"]["step"])
        return trainer

    # -- diagnostics ------------------------------------------------------------------------------

    @torch.no_grad()
    def discriminator_margin(self, examples: Sequence[Example], seed: int = 0, fake: str = "synth") -> float:
        """Mean D(real) - mean D(fake) over paired windows, discriminator in eval mode.

        ``fake="synth"`` scores free-running inference output, ``"teacher"`` the
        teacher-forced reconstructions the discriminator was trained against.
        """
        if fake not in ("synth", "teacher"):
            raise ValueError(f"fake must be 'synth' or 'teacher', got {fake!r}")
        self.model.eval()
        self.discriminator.eval()
        batch = collate(examples).to(self.dtype)
        if fake == "teacher":
            out = self.model(batch)
        else:
            out = self.model.synthesize(batch)
        T = min(batch.mel.shape[1], out.mel.shape[1])
        mask = batch.mel_mask[:, :T] & out.mel_mask[:, :T]
        rng = torch.Generator().manual_seed(seed)
        placements = self.discriminator.place_windows(mask, self.window_spec, rng)
        if not placements:
            return float("nan")
        real, fake_s = self.discriminator.score_pairs(batch.mel[:, :T], out.mel[:, :T], placements)
        return float(real.mean() - fake_s.mean())


def read_checkpoint(path) -> dict:
    try:
        ckpt = torch.load(path, map_location="cpu", weights_only=False)
    except (OSError, RuntimeError) as exc:
        raise ValueError(f"cannot read checkpoint {path}: {exc}") from exc
    if not isinstance(ckpt, dict) or ckpt.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path} is not a {CHECKPOINT_FORMAT} file")
    return ckpt


def load_examples(manifest, cfg: Config, vocab: Vocab | None = None) -> tuple[list[Example], Vocab]:
    fe = cfg.data.features
    records = load_manifest(manifest, fe.sample_rate, fe.hop_length, cfg.model.n_speakers, cfg.data.punctuation)
    if not records:
        raise ValueError(f"manifest {manifest} has no utterances")
    if vocab is None:
        vocab = Vocab.from_records(records, extra=[cfg.data.boundary_token])
    return [example_from_record(r, vocab, cfg.data) for r in records], vocab


def checkpoint_name(step: int) -> str:
    return f"checkpoint_{step:08d}.pt"


def new_trainer(examples: Sequence[Example], vocab: Vocab, cfg: Config, dtype=torch.float32) -> Trainer:
    """Fresh trainer whose pitch/energy quantization ranges come from ``examples``."""
    trainer = Trainer(cfg, vocab, examples[0].word_ctx.shape[1], dtype)
    p_range, e_range = variance_ranges(examples)
    trainer.model.variance.set_ranges(p_range, e_range)
    return trainer


def run_training(manifest, cfg: Config, out_dir, resume=None, dtype: torch.dtype = torch.float32) -> Trainer:
    """Train until ``cfg.train.max_steps``; writes checkpoints and ``metrics.jsonl`` under ``out_dir``."""
    if resume is not None:
        trainer = Trainer.from_checkpoint(resume, cfg)
        examples, _ = load_examples(manifest, cfg, trainer.vocab)
    else:
        examples, vocab = load_examples(manifest, cfg)
        trainer = new_trainer(examples, vocab, cfg, dtype)
    return train_loop(trainer, examples, out_dir)


def train_loop(trainer: Trainer, examples: Sequence[Example], out_dir) -> Trainer:
    cfg = trainer.cfg
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    log_path = out_dir / "metrics.jsonl"
    _truncate_log(log_path, trainer.step)
    if trainer.step == 0:
        trainer.save(out_dir / checkpoint_name(0))
        trainer.save(out_dir / "last.pt")
    with log_path.open("a") as fh:
        while trainer.step < cfg.train.max_steps:
            idx = batch_order(len(examples), cfg.train.batch_size, cfg.train.seed, trainer.step)
            batch = collate([examples[i] for i in idx])
            try:
                metrics = trainer.train_step(batch)
            except NonFiniteLossError:
                path = trainer.save(out_dir / f"abort_{trainer.step:08d}.pt")
                log.error("non-finite loss, state saved to %s", path)
                raise
            if metrics["step"] % cfg.train.log_every == 0:
                fh.write(json.dumps({k: metrics[k] for k in LOG_FIELDS}) + "\n")
            if trainer.step % cfg.train.checkpoint_every == 0 or trainer.step == cfg.train.max_steps:
                fh.flush()
                trainer.save(out_dir / checkpoint_name(trainer.step))
                trainer.save(out_dir / "last.pt")
    return trainer


def _truncate_log(path: Path, step: int) -> None:
    """Drop log lines at or beyond ``step`` so a resumed run keeps steps strictly increasing."""
    if not path.exists():
        return
    kept = [ln for ln in path.read_text().splitlines() if ln.strip() and json.loads(ln)["step"] < step]
    atomic_write_bytes(path, ("\n".join(kept) + "\n").encode() if kept else b"")


def read_metrics(path) -> list[dict]:
    return [json.loads(ln) for ln in Path(path).read_text().splitlines() if ln.strip()]
