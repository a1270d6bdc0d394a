"""Two-phase training (pretext pretraining, then adversarial prediction),
evaluation, and the ablation / sensitivity drivers built on top of them."""

from __future__ import annotations

import copy
import csv
import logging
import math
import time
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn

from . import checkpoint as ckpt
from .adversarial import PatchDiscriminator, discriminator_loss, generator_adv_loss
from .autoencoder import (
    AppearanceAE,
    Encoder,
    JointDecoder,
    MotionAE,
    PretrainDecoder,
    TwoStreamSpec,
    aggregate,
    mse,
    pretrain_appearance_loss,
    pretrain_motion_loss,
    stack_frames,
)
from .config import AblationConfig, LossWeights, RunConfig, save_config
from .datasets import DatasetLayout, Video, add_salt_pepper, load_dataset, synthesize_benchmark
from .flow import FlowProvider, cache_flows, get_provider
from .memory import MemoryPool
from .scoring import ScoreSeries, auc_report, export_error_map, psnr_error, write_report

logger = logging.getLogger(__name__)

METRIC_FIELDS = ["phase", "epoch", "step", "lr", "L_pre_a", "L_pre_m", "L_D", "L_a", "L_m", "L_r", "L_adv", "L_G"]


def seed_everything(seed: int) -> None:
    torch.manual_seed(seed)
    torch.use_deterministic_algorithms(True, warn_only=True)


def cosine_lr(step: int, total_steps: int, lr0: float, lr_min: float = 0.0) -> float:
    """Cosine annealing from ``lr0`` at step 0 to ``lr_min`` at ``total_steps``."""
    if total_steps <= 0:
        return lr0
    t = min(max(step, 0), total_steps) / total_steps
    return lr_min + 0.5 * (lr0 - lr_min) * (1.0 + math.cos(math.pi * t))


def _set_lr(opt: torch.optim.Optimizer, lr: float) -> None:
    for g in opt.param_groups:
        g["lr"] = lr


# ---------------------------------------------------------------------------
# data


@dataclass
class ClipData:
    """Channels-first frames/flows per video plus a flat clip index."""

    frames: list[np.ndarray]  # (T, 3, H, W)
    flows: list[np.ndarray]  # (T-1, 2, H, W)
    index: np.ndarray  # (n_clips, 2): video position, first frame
    k_in: int
    videos: list[Video]

    def __len__(self) -> int:
        return len(self.index)

    def batch(self, ids) -> tuple[torch.Tensor, torch.Tensor]:
        k = self.k_in
        fr, fl = [], []
        for i in ids:
            v, s = self.index[i]
            fr.append(self.frames[v][s : s + k + 1])
            fl.append(self.flows[v][s : s + k - 1].reshape(-1, *self.flows[v].shape[-2:]))
        return torch.from_numpy(np.stack(fr)), torch.from_numpy(np.stack(fl))


def prepare_clips(videos: list[Video], k_in: int, provider: FlowProvider, flow_cache: str | Path) -> ClipData:
    frames, flows, index = [], [], []
    for vi, v in enumerate(videos):
        if len(v) < k_in + 1:
            raise ValueError(f"video {v.video_id!r} has {len(v)} frames, needs at least {k_in + 1}")
        frames.append(np.ascontiguousarray(v.frames.transpose(0, 3, 1, 2)))
        flows.append(np.ascontiguousarray(cache_flows(v, provider, flow_cache).transpose(0, 3, 1, 2)))
        index += [(vi, s) for s in range(len(v) - k_in)]
    return ClipData(frames, flows, np.asarray(index, dtype=np.int64), k_in, videos)


def _layout(cfg: RunConfig) -> DatasetLayout:
    d = cfg.data
    return DatasetLayout(d.frames_dir, d.labels_dir, d.frame_glob, d.label_suffix)


def flow_cache_dir(cfg: RunConfig) -> Path:
    return Path(cfg.data.flow_cache) if cfg.data.flow_cache else Path(cfg.run_dir) / "flows"


def ensure_data(cfg: RunConfig) -> None:
    """Synthesize the configured benchmark if its directories are missing."""
    if not cfg.synth:
        return
    for split, root in (("train", cfg.data.train_root), ("test", cfg.data.test_root)):
        if split in cfg.synth and not (Path(root) / cfg.data.frames_dir).is_dir():
            synthesize_benchmark(cfg.synth[split], root, k_in=cfg.model.k_in)


def load_split(cfg: RunConfig, split: str) -> list[Video]:
    root = cfg.data.train_root if split == "train" else cfg.data.test_root
    return load_dataset(root, _layout(cfg), cfg.model.resolution, eval_mode=split == "test")


def _batches(n: int, batch_size: int, seed: int, phase: int, epoch: int) -> list[np.ndarray]:
    order = np.random.default_rng([seed, phase, epoch]).permutation(n)
    return [order[i : i + batch_size] for i in range(0, n, batch_size)]


def _noise_seed(seed: int, step: int) -> int:
    return int(np.random.SeedSequence([seed, 7, step]).generate_state(1)[0])


class MetricsLog:
    """Append-only CSV of per-step losses."""

    def __init__(self, path: str | Path | None):
        self.path = Path(path) if path else None
        if self.path and not self.path.exists():
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "w", newline="") as fh:
                csv.writer(fh).writerow(METRIC_FIELDS)

    def append(self, row: dict) -> None:
        if self.path is None:
            return
        with open(self.path, "a", newline="") as fh:
            csv.writer(fh).writerow([_fmt(row.get(k, "")) for k in METRIC_FIELDS])


def _fmt(v):
    return repr(float(v)) if isinstance(v, float) else v


# ---------------------------------------------------------------------------
# pretraining


@dataclass
class PhaseResult:
    checkpoint: Path
    losses: list[dict]


def pretrain(
    cfg: RunConfig,
    data: ClipData,
    out_path: str | Path,
    metrics: MetricsLog | None = None,
    resume: str | Path | None = None,
    max_epochs: int | None = None,
) -> PhaseResult:
    """Train the denoising appearance AE and the flow-reconstruction motion AE.

    A checkpoint is written after every epoch. ``max_epochs`` stops early
    without changing the learning-rate schedule (useful for resume tests).
    """
    sch = cfg.schedule
    seed_everything(cfg.seed)
    spec = TwoStreamSpec(cfg.model.k_in, cfg.model.encoder)
    ae_a, ae_m = AppearanceAE(spec), MotionAE(spec)
    opt_a = torch.optim.Adam(ae_a.parameters(), lr=sch.lr, betas=sch.betas)
    opt_m = torch.optim.Adam(ae_m.parameters(), lr=sch.lr, betas=sch.betas)
    n_batches = math.ceil(len(data) / sch.batch_size)
    total = sch.pretrain_epochs * n_batches
    start_epoch = 0
    if resume is not None:
        arrays, man = ckpt.load_archive(resume)
        ckpt.load_module("ae_a", ae_a, arrays)
        ckpt.load_module("ae_m", ae_m, arrays)
        ckpt.load_optimizer("opt_a", opt_a, arrays, man["opt_groups"]["opt_a"])
        ckpt.load_optimizer("opt_m", opt_m, arrays, man["opt_groups"]["opt_m"])
        start_epoch = man["epoch"]
    metrics = metrics or MetricsLog(None)
    end_epoch = sch.pretrain_epochs if max_epochs is None else min(max_epochs, sch.pretrain_epochs)
    losses = []
    out_path = Path(out_path)
    ae_a.train(), ae_m.train()
    for epoch in range(start_epoch, end_epoch):
        for b, ids in enumerate(_batches(len(data), sch.batch_size, cfg.seed, 0, epoch)):
            step = epoch * n_batches + b
            lr = cosine_lr(step, total, sch.lr, sch.lr_min)
            _set_lr(opt_a, lr), _set_lr(opt_m, lr)
            frames, flows = data.batch(ids)
            clean = frames[:, : cfg.model.k_in]
            noisy = add_salt_pepper(clean, sch.noise_fraction, _noise_seed(cfg.seed, step))
            la = pretrain_appearance_loss(ae_a, stack_frames(noisy), stack_frames(clean))
            opt_a.zero_grad()
            la.backward()
            opt_a.step()
            lm = pretrain_motion_loss(ae_m, flows)
            opt_m.zero_grad()
            lm.backward()
            opt_m.step()
            row = {"phase": "pretrain", "epoch": epoch, "step": step, "lr": lr,
                   "L_pre_a": la.item(), "L_pre_m": lm.item()}
            if not (math.isfinite(row["L_pre_a"]) and math.isfinite(row["L_pre_m"])):
                raise FloatingPointError(f"non-finite pretrain loss at step {step}")
            losses.append(row)
            metrics.append(row)
        logger.info("pretrain epoch %d: L_pre_a=%.5f L_pre_m=%.5f", epoch, losses[-1]["L_pre_a"], losses[-1]["L_pre_m"])
        _save_pretrain(out_path, cfg, ae_a, ae_m, opt_a, opt_m, epoch + 1, (epoch + 1) * n_batches)
    if not out_path.exists():
        _save_pretrain(out_path, cfg, ae_a, ae_m, opt_a, opt_m, start_epoch, start_epoch * n_batches)
    return PhaseResult(out_path, losses)


def _save_pretrain(path, cfg, ae_a, ae_m, opt_a, opt_m, epoch, step):
    arrays = {**ckpt.module_arrays("ae_a", ae_a), **ckpt.module_arrays("ae_m", ae_m)}
    oa, ga = ckpt.optimizer_arrays("opt_a", opt_a)
    om, gm = ckpt.optimizer_arrays("opt_m", opt_m)
    arrays.update(oa), arrays.update(om)
    manifest = {
        "phase": "pretrain",
        "epoch": epoch,
        "step": step,
        "seed": cfg.seed,
        "pretrain_key": cfg.pretrain_key(),
        "architecture": {"k_in": cfg.model.k_in, "resolution": cfg.model.resolution,
                         "encoder": cfg.to_dict()["model"]["encoder"]},
        "frozen": ["ae_a/decoder", "ae_m/decoder"],
        "opt_groups": {"opt_a": ga, "opt_m": gm},
    }
    ckpt.save_archive(path, arrays, manifest)


# ---------------------------------------------------------------------------
# main phase


class STMAE(nn.Module):
    """Two encoders, two memory pools and the joint prediction decoder.

    The pretext decoders are carried along frozen so that checkpoints keep
    them; they take no part in prediction.
    """

    def __init__(self, cfg: RunConfig, ablation: AblationConfig | None = None):
        super().__init__()
        m = cfg.model
        spec = TwoStreamSpec(m.k_in, m.encoder)
        self.ablation = ablation or cfg.ablation
        self.k_in = m.k_in
        self.enc_a = Encoder(spec.appearance_channels, m.encoder)
        self.enc_m = Encoder(spec.motion_channels, m.encoder)
        self.dec_a = PretrainDecoder(spec.appearance_channels, m.encoder, bounded=True)
        self.dec_m = PretrainDecoder(spec.motion_channels, m.encoder, bounded=False)
        for p in (*self.dec_a.parameters(), *self.dec_m.parameters()):
            p.requires_grad_(False)
        C = m.encoder.feature_channels
        self.mem_s = MemoryPool(m.memory_items, C, m.k_top, "spatial", seed=cfg.seed * 2 + 1)
        self.mem_t = MemoryPool(m.memory_items, C, m.k_top, "temporal", seed=cfg.seed * 2 + 2)
        self.decoder = JointDecoder(m.encoder)

    def load_pretrained(self, path: str | Path) -> None:
        arrays, _ = ckpt.load_archive(path)
        for name, sub in (("ae_a/encoder", self.enc_a), ("ae_a/decoder", self.dec_a),
                          ("ae_m/encoder", self.enc_m), ("ae_m/decoder", self.dec_m)):
            ckpt.load_module(name, sub, arrays)

    def generator_parameters(self) -> list[nn.Parameter]:
        ab = self.ablation
        params = list(self.decoder.parameters())
        if ab.use_appearance_stream:
            params += list(self.enc_a.parameters())
        if ab.use_motion_stream:
            params += list(self.enc_m.parameters())
        return params

    def forward(self, frames_in: torch.Tensor, flows_in: torch.Tensor):
        """``frames_in`` (B, k, 3, H, W), ``flows_in`` (B, 2(k-1), H, W)."""
        ab = self.ablation
        feats = {}
        if ab.use_appearance_stream:
            z_a = self.enc_a(stack_frames(frames_in))
            feats["z_a"] = z_a
        if ab.use_motion_stream:
            z_m = self.enc_m(flows_in)
            feats["z_m"] = z_m
        ref = feats.get("z_a", feats.get("z_m"))
        zeros = torch.zeros_like(ref)
        z_a = feats.get("z_a", zeros)
        z_m = feats.get("z_m", zeros)
        za_hat = self.mem_s.read(z_a) if ab.use_spatial_memory else zeros
        zm_hat = self.mem_t.read(z_m) if ab.use_temporal_memory else zeros
        pred = self.decoder(aggregate(z_a, za_hat, z_m, zm_hat))
        return pred, feats

    def write_memories(self, feats: dict) -> None:
        if self.ablation.use_spatial_memory:
            self.mem_s.write(feats["z_a"])
        if self.ablation.use_temporal_memory:
            self.mem_t.write(feats["z_m"])


def compute_L_a(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    return mse(pred, target)


_warned_nondiff = set()


def compute_L_m(pred: torch.Tensor, prev: torch.Tensor, target: torch.Tensor, provider: FlowProvider) -> torch.Tensor:
    """MSE between flow(pred, prev) and flow(target, prev)."""
    with torch.no_grad():
        ref = provider.pairwise_flow(target, prev)
    if provider.differentiable:
        return mse(provider.pairwise_flow(pred, prev), ref)
    if provider.name not in _warned_nondiff:
        warnings.warn(f"flow provider {provider.name!r} is not differentiable; L_m carries no gradient", stacklevel=2)
        logger.warning("L_m computed with non-differentiable provider %s", provider.name)
        _warned_nondiff.add(provider.name)
    with torch.no_grad():
        return mse(provider.pairwise_flow(pred.detach(), prev), ref)


def memory_loss(model: STMAE, feats: dict) -> torch.Tensor:
    ab = model.ablation
    total = torch.zeros(())
    if ab.use_spatial_memory:
        total = total + model.mem_s.separation_loss(feats["z_a"])
    if ab.use_temporal_memory:
        total = total + model.mem_t.separation_loss(feats["z_m"])
    return total


def generator_terms(model, disc, pred, target, prev, feats, ablation, provider) -> dict[str, torch.Tensor]:
    """Individual generator loss terms; disabled terms are exactly zero."""
    zero = pred.new_zeros(())
    return {
        "L_a": compute_L_a(pred, target) if ablation.use_L_a else zero,
        "L_m": compute_L_m(pred, prev, target, provider) if ablation.use_L_m else zero,
        "L_r": memory_loss(model, feats) if ablation.use_L_r else zero,
        "L_adv": generator_adv_loss(disc, pred) if ablation.use_L_adv else zero,
    }


def total_generator_loss(terms: dict[str, torch.Tensor], w: LossWeights) -> torch.Tensor:
    return terms["L_a"] + w.motion * terms["L_m"] + w.separation * terms["L_r"] + w.adversarial * terms["L_adv"]


def build_main(cfg: RunConfig):
    seed_everything(cfg.seed)
    model = STMAE(cfg)
    torch.manual_seed(cfg.seed + 100)
    disc = PatchDiscriminator(3, cfg.model.disc_channels)
    sch = cfg.schedule
    opt_g = torch.optim.Adam(model.generator_parameters(), lr=sch.lr, betas=sch.betas)
    opt_d = torch.optim.Adam(disc.parameters(), lr=sch.lr, betas=sch.betas)
    return model, disc, opt_g, opt_d


def train_step(model, disc, opt_g, opt_d, frames, flows, cfg: RunConfig, provider: FlowProvider) -> dict:
    """One discriminator step, one generator step, then the memory writes."""
    ab = model.ablation
    k = model.k_in
    inputs, target, prev = frames[:, :k], frames[:, k], frames[:, k - 1]
    pred, feats = model(inputs, flows)
    row = {}
    if ab.use_L_adv:
        ld = discriminator_loss(disc, target, pred)
        opt_d.zero_grad()
        ld.backward()
        opt_d.step()
        row["L_D"] = ld.item()
    for p in disc.parameters():
        p.requires_grad_(False)
    try:
        terms = generator_terms(model, disc, pred, target, prev, feats, ab, provider)
        lg = total_generator_loss(terms, cfg.weights)
        opt_g.zero_grad()
        lg.backward()
        opt_g.step()
    finally:
        for p in disc.parameters():
            p.requires_grad_(True)
    model.write_memories(feats)
    row.update({k_: v.item() for k_, v in terms.items()})
    row["L_G"] = lg.item()
    return row


def train_main(
    cfg: RunConfig,
    data: ClipData,
    pretrained: str | Path,
    out_path: str | Path,
    metrics: MetricsLog | None = None,
    resume: str | Path | None = None,
    max_epochs: int | None = None,
) -> PhaseResult:
    cfg.ablation.validate()
    sch = cfg.schedule
    model, disc, opt_g, opt_d = build_main(cfg)
    model.load_pretrained(pretrained)
    provider = get_provider(cfg.flow.loss_provider)
    n_batches = math.ceil(len(data) / sch.batch_size)
    total = sch.main_epochs * n_batches
    start_epoch = 0
    if resume is not None:
        start_epoch = _load_main(resume, model, disc, opt_g, opt_d)
    metrics = metrics or MetricsLog(None)
    end_epoch = sch.main_epochs if max_epochs is None else min(max_epochs, sch.main_epochs)
    out_path = Path(out_path)
    losses = []
    model.train(), disc.train()
    for epoch in range(start_epoch, end_epoch):
        for b, ids in enumerate(_batches(len(data), sch.batch_size, cfg.seed, 1, epoch)):
            step = epoch * n_batches + b
            lr = cosine_lr(step, total, sch.lr, sch.lr_min)
            _set_lr(opt_g, lr), _set_lr(opt_d, lr)
            frames, flows = data.batch(ids)
            row = train_step(model, disc, opt_g, opt_d, frames, flows, cfg, provider)
            if not all(math.isfinite(v) for v in row.values()):
                raise FloatingPointError(f"non-finite loss at main step {step}: {row}")
            row.update(phase="main", epoch=epoch, step=step, lr=lr)
            losses.append(row)
            metrics.append(row)
        logger.info("main epoch %d: L_G=%.5f L_a=%.5f", epoch, losses[-1]["L_G"], losses[-1]["L_a"])
        _save_main(out_path, cfg, model, disc, opt_g, opt_d, epoch + 1, (epoch + 1) * n_batches, pretrained)
    if not out_path.exists():
        _save_main(out_path, cfg, model, disc, opt_g, opt_d, start_epoch, start_epoch * n_batches, pretrained)
    return PhaseResult(out_path, losses)


def _save_main(path, cfg, model, disc, opt_g, opt_d, epoch, step, pretrained):
    arrays = {**ckpt.module_arrays("model", model), **ckpt.module_arrays("disc", disc)}
    og, gg = ckpt.optimizer_arrays("opt_g", opt_g)
    od, gd = ckpt.optimizer_arrays("opt_d", opt_d)
    arrays.update(og), arrays.update(od)
    manifest = {
        "phase": "main",
        "epoch": epoch,
        "step": step,
        "seed": cfg.seed,
        "config": cfg.to_dict(),
        "k_top": {"spatial": model.mem_s.k_top, "temporal": model.mem_t.k_top},
        "frozen": ["model/dec_a", "model/dec_m"],
        "pretrained": str(pretrained),
        "opt_groups": {"opt_g": gg, "opt_d": gd},
    }
    ckpt.save_archive(path, arrays, manifest)


def _load_main(path, model, disc, opt_g=None, opt_d=None) -> int:
    arrays, man = ckpt.load_archive(path)
    ckpt.load_module("model", model, arrays)
    ckpt.load_module("disc", disc, arrays)
    if opt_g is not None:
        ckpt.load_optimizer("opt_g", opt_g, arrays, man["opt_groups"]["opt_g"])
        ckpt.load_optimizer("opt_d", opt_d, arrays, man["opt_groups"]["opt_d"])
    return man["epoch"]


def load_model(path: str | Path) -> tuple[STMAE, RunConfig]:
    from .config import config_from_dict

    _, man = ckpt.load_archive(path)
    cfg = config_from_dict(man["config"])
    model = STMAE(cfg)
    disc = PatchDiscriminator(3, cfg.model.disc_channels)
    _load_main(path, model, disc)
    model.eval()
    return model, cfg


# ---------------------------------------------------------------------------
# evaluation


@torch.no_grad()
def predict_video(model: STMAE, data: ClipData, video_pos: int, batch_size: int = 32):
    """Predicted frames for every target ``t >= k_in`` of one video."""
    ids = np.nonzero(data.index[:, 0] == video_pos)[0]
    preds, targets, idx = [], [], []
    k = model.k_in
    for i in range(0, len(ids), batch_size):
        frames, flows = data.batch(ids[i : i + batch_size])
        pred, _ = model(frames[:, :k], flows)
        preds.append(pred.numpy())
        targets.append(frames[:, k].numpy())
        idx.append(data.index[ids[i : i + batch_size], 1] + k)
    return np.concatenate(preds), np.concatenate(targets), np.concatenate(idx)


def evaluate(
    model: STMAE,
    cfg: RunConfig,
    data: ClipData,
    out_dir: str | Path | None = None,
) -> tuple[list[ScoreSeries], dict]:
    """Score every test video; memories are read-only throughout."""
    model.eval()
    series = []
    out_dir = Path(out_dir) if out_dir else None
    n_frames, t0 = 0, time.perf_counter()
    maps_dir = None
    for vp, video in enumerate(data.videos):
        preds, targets, idx = predict_video(model, data, vp, cfg.eval.batch_size)
        e = [psnr_error(p, t) for p, t in zip(preds, targets)]
        labels = None if video.labels is None else video.labels[idx]
        s = ScoreSeries(video.video_id, idx, e, labels)
        series.append(s)
        n_frames += len(idx)
        if out_dir is not None and cfg.eval.error_maps > 0:
            maps_dir = out_dir / "error_maps"
            for j in np.argsort(-s.anomaly, kind="stable")[: cfg.eval.error_maps]:
                export_error_map(preds[j].transpose(1, 2, 0), targets[j].transpose(1, 2, 0),
                                 maps_dir / f"{video.video_id}_{int(idx[j]):06d}.png")
    latency = (time.perf_counter() - t0) / max(n_frames, 1)
    report = auc_report(series, cfg.eval.normalization)
    report["seconds_per_frame"] = latency
    if out_dir is not None:
        sdir = out_dir / "scores"
        sdir.mkdir(parents=True, exist_ok=True)
        for s in series:
            s.to_csv(sdir / f"{s.video_id}.csv")
        # latency varies run to run; keep it out of the deterministic report
        write_report({k: v for k, v in report.items() if k != "seconds_per_frame"}, out_dir / "report.json")
        write_report({"seconds_per_frame": latency, "fps": 1.0 / latency if latency else None},
                     out_dir / "timing.json")
    return series, report


# ---------------------------------------------------------------------------
# orchestration


@dataclass
class ExperimentResult:
    auc: float
    report: dict
    run_dir: Path
    checkpoint: Path
    pretrained: Path


def run_pretrain(cfg: RunConfig, train: ClipData | None = None, cache_dir: str | Path | None = None) -> Path:
    """Pretrain once per pretrain key; reuse an existing archive otherwise."""
    cache_dir = Path(cache_dir) if cache_dir else Path(cfg.run_dir) / "checkpoints"
    path = cache_dir / f"pretrain_{cfg.pretrain_key()}.ckpt"
    if path.exists():
        _, man = ckpt.load_archive(path)
        if man["epoch"] >= cfg.schedule.pretrain_epochs:
            return path
    if train is None:
        train = prepare_clips(load_split(cfg, "train"), cfg.model.k_in, get_provider(cfg.flow.input_provider),
                              flow_cache_dir(cfg))
    metrics = MetricsLog(Path(cfg.run_dir) / "metrics.csv")
    pretrain(cfg, train, path, metrics)
    return path


def run_experiment(
    cfg: RunConfig,
    pretrain_cache: str | Path | None = None,
) -> ExperimentResult:
    """Pretrain (cached), train, and evaluate one configuration under ``cfg.run_dir``."""
    cfg.validate()
    run_dir = Path(cfg.run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    save_config(cfg, run_dir / "config.json")
    ensure_data(cfg)
    provider = get_provider(cfg.flow.input_provider)
    train = prepare_clips(load_split(cfg, "train"), cfg.model.k_in, provider, flow_cache_dir(cfg))
    test = prepare_clips(load_split(cfg, "test"), cfg.model.k_in, provider, flow_cache_dir(cfg))
    pre = run_pretrain(cfg, train, pretrain_cache)
    metrics = MetricsLog(run_dir / "metrics.csv")
    main_path = run_dir / "checkpoints" / "main.ckpt"
    train_main(cfg, train, pre, main_path, metrics)
    model, _ = load_model(main_path)
    _, report = evaluate(model, cfg, test, run_dir)
    logger.info("%s: AUC=%.4f", run_dir, report["auc"])
    return ExperimentResult(report["auc"], report, run_dir, main_path, pre)


def run_ablation(cfg: RunConfig, rows: list[int] | None = None) -> list[dict]:
    """Train/evaluate ablation rows on one seed and dataset; write ablation.csv/.md."""
    rows = rows or cfg.ablation_rows
    base = Path(cfg.run_dir)
    base.mkdir(parents=True, exist_ok=True)
    flows = cfg.data.flow_cache or str(base / "flows")
    out = []
    for r in rows:
        sub = copy.deepcopy(cfg)
        sub.ablation = AblationConfig.row(r)
        sub.run_dir = str(base / f"model{r}")
        sub.data.flow_cache = flows
        res = run_experiment(sub, pretrain_cache=base / "pretrain_cache")
        out.append({"model": r, **{k: int(v) for k, v in sub.to_dict()["ablation"].items()}, "auc": res.auc})
    _write_table(out, base / "ablation.csv", base / "ablation.md")
    return out


def sweep_grid(cfg: RunConfig) -> list[tuple[int, int | None]]:
    grid = [(n, k) for n in cfg.sweep.memory_items for k in cfg.sweep.k_top]
    if cfg.sweep.include_unconstrained:
        grid += [(n, None) for n in cfg.sweep.memory_items]
    return grid


def run_sweep(cfg: RunConfig) -> list[dict]:
    """AUC over the memory-size x top-k grid; ``k_top=None`` rows are unconstrained."""
    base = Path(cfg.run_dir)
    base.mkdir(parents=True, exist_ok=True)
    flows = cfg.data.flow_cache or str(base / "flows")
    out = []
    for n, k in sweep_grid(cfg):
        sub = copy.deepcopy(cfg)
        sub.model.memory_items, sub.model.k_top = n, k
        sub.run_dir = str(base / f"N{n}_k{'all' if k is None else k}")
        sub.data.flow_cache = flows
        res = run_experiment(sub, pretrain_cache=base / "pretrain_cache")
        out.append({"N": n, "k": "all" if k is None else k, "auc": res.auc})
    _write_table(out, base / "sweep.csv", base / "sweep.md")
    return out


def _write_table(rows: list[dict], csv_path: Path, md_path: Path) -> None:
    keys = list(rows[0])
    with open(csv_path, "w", newline="") as fh:
        w = csv.DictWriter(fh, keys)
        w.writeheader()
        w.writerows([{k: _fmt(v) for k, v in r.items()} for r in rows])
    lines = ["| " + " | ".join(keys) + " |", "|" + "---|" * len(keys)]
    for r in rows:
        lines.append("| " + " | ".join(f"{v:.4f}" if isinstance(v, float) else str(v) for v in r.values()) + " |")
    md_path.write_text("\n".join(lines) + "\n")
