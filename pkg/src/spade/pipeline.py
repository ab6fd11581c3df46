"""End-to-end orchestration: two-stage per-frame inference, training on the
synthetic corpus, sparsity/distribution sweeps, and report rendering."""

from __future__ import annotations

import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .alignment import AffineFit, align_global, align_with_laser
from .core import (
    CameraIntrinsics,
    DepthRaster,
    Space,
    SparsePointSet,
    from_inverse,
)
from .densify import JBUParams, fill_default, jbu_densify, sparse_scale_map
from .errors import (
    ConfigError,
    DivergenceError,
    EmptyEvaluationError,
    NumericError,
    SpadeError,
)
from .losses import loss_total
from .metrics import MetricReport, aggregate_metrics, compute_metrics
from .nn import CCDTConfig, FeaturePyramid, RefinementNet, Tensor, no_grad
from .nn.checkpoint import load_checkpoint, save_checkpoint
from .optim import AdamW
from .sensors import PatternSpec, sample_pattern, subsample
from .synth import OracleSpec, SceneSpec, generate_scene, oracle_relative

log = logging.getLogger(__name__)

TRAIN_LAYOUTS = ("seafloor_bumps", "canyon", "frame_with_ropes")


def spade_threads() -> int:
    """Worker cap from the SPADE_THREADS environment variable (default 1)."""
    try:
        return max(1, int(os.environ.get("SPADE_THREADS", "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class RunConfig:
    network: CCDTConfig = field(default_factory=CCDTConfig)
    jbu: JBUParams = field(default_factory=JBUParams)
    input_hw: tuple = (64, 96)
    pyramid_channels: tuple = (16, 32, 48, 64)
    epochs: int = 10
    lr: float = 2e-4
    lr_decayed: float = 5e-5
    decay_after_epoch: int = 6
    batch_size: int = 8
    weight_decay: float = 1e-2
    betas: tuple = (0.9, 0.999)
    train_frames: int = 200
    val_frames: int = 20
    points_min: int = 20
    points_max: int = 260
    subsample_fraction: float = 0.9
    bias_amplitude: float = 0.2
    bias_wavelength: float = 18.0
    noise_sigma: float = 0.01
    eval_cap_m: float = 10.0
    seed: int = 0

    def __post_init__(self):
        h, w = self.input_hw
        if h % 32 or w % 32:
            raise ConfigError(f"input resolution {h}x{w} must be divisible by 32")
        if not (1 <= self.decay_after_epoch <= self.epochs):
            raise ConfigError(
                f"decay epoch {self.decay_after_epoch} outside schedule of {self.epochs} epochs"
            )
        if self.batch_size < 1 or self.train_frames < 1:
            raise ConfigError("batch size and frame counts must be positive")

    def to_dict(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_dict(payload: dict) -> "RunConfig":
        payload = dict(payload)
        unknown = set(payload) - set(RunConfig.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        if "network" in payload and isinstance(payload["network"], dict):
            net = {k: tuple(v) if isinstance(v, list) else v for k, v in payload["network"].items()}
            payload["network"] = CCDTConfig(**net)
        if "jbu" in payload and isinstance(payload["jbu"], dict):
            payload["jbu"] = JBUParams(**payload["jbu"])
        for key in ("input_hw", "pyramid_channels", "betas"):
            if key in payload and isinstance(payload[key], list):
                payload[key] = tuple(payload[key])
        return RunConfig(**payload)

    @staticmethod
    def from_json_file(path) -> "RunConfig":
        with open(path, "r", encoding="utf-8") as f:
            try:
                return RunConfig.from_dict(json.load(f))
            except json.JSONDecodeError as e:
                raise ConfigError(f"bad config JSON in {path}: {e}")


@dataclass(frozen=True)
class SweepSpec:
    point_counts: tuple = (200, 100, 50, 10)
    patterns: tuple = ("feature_like",)
    range_caps: tuple = (10.0, 5.0, 2.0)
    n_frames: int = 20

    def __post_init__(self):
        if not self.point_counts or not self.patterns or not self.range_caps:
            raise ConfigError("sweep lists must be non-empty")

    @staticmethod
    def from_dict(payload: dict) -> "SweepSpec":
        payload = {k: tuple(v) if isinstance(v, list) else v for k, v in payload.items()}
        unknown = set(payload) - set(SweepSpec.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown sweep fields: {sorted(unknown)}")
        return SweepSpec(**payload)


@dataclass(frozen=True)
class LaserRig:
    intrinsics: CameraIntrinsics
    baseline_m: float = 0.1


@dataclass
class FrameData:
    name: str
    gt: DepthRaster
    guide: DepthRaster
    z_rel: DepthRaster
    points: SparsePointSet


@dataclass
class FrameResult:
    depth: DepthRaster
    aligned: DepthRaster
    fit: AffineFit
    eps_hat: np.ndarray
    metrics: MetricReport | None = None


def default_intrinsics(h: int, w: int) -> CameraIntrinsics:
    return CameraIntrinsics(fx=float(w), fy=float(w), cx=(w - 1) / 2.0, cy=(h - 1) / 2.0)


class SpadeModel:
    """Refinement network plus feature pyramid under one checkpointable roof.

    Freshly built models are neutral: the output head weight is zero, so the
    predicted correction is exactly 1 and the pipeline reduces to global
    alignment. Training starts from `init="train"`, which perturbs only that
    final weight slightly so gradients reach the rest of the network while
    the initial output stays near 1.
    """

    HEAD_INIT_SCALE = 0.01

    def __init__(self, cfg: RunConfig, seed: int | None = None, init: str = "neutral"):
        if init not in ("neutral", "train"):
            raise ConfigError(f"unknown init mode {init!r}")
        self.cfg = cfg
        rng = np.random.default_rng([cfg.seed if seed is None else seed, 7])
        self.pyramid = FeaturePyramid(rng, in_ch=1, channels=cfg.pyramid_channels)
        self.refine = RefinementNet(
            cfg.network, cfg.input_hw, pyramid_channels=cfg.pyramid_channels, rng=rng
        )
        if init == "train":
            head = self.refine.head.conv3
            fan_in = head.weight.data.shape[1]
            head.weight.data = (
                np.sqrt(6.0 / fan_in)
                * self.HEAD_INIT_SCALE
                * rng.uniform(-1.0, 1.0, size=head.weight.data.shape)
            )

    def train(self):
        self.pyramid.train()
        self.refine.train()
        return self

    def eval(self):
        self.pyramid.eval()
        self.refine.eval()
        return self

    def parameters(self):
        return self.pyramid.parameters() + self.refine.parameters()

    def param_count(self) -> int:
        return self.pyramid.param_count() + self.refine.param_count()

    def state_dict(self) -> dict:
        state = {f"pyramid.{k}": v for k, v in self.pyramid.state_dict().items()}
        state.update({f"refine.{k}": v for k, v in self.refine.state_dict().items()})
        return state

    def load_state_dict(self, state: dict):
        self.pyramid.load_state_dict(
            {k[len("pyramid.") :]: v for k, v in state.items() if k.startswith("pyramid.")}
        )
        self.refine.load_state_dict(
            {k[len("refine.") :]: v for k, v in state.items() if k.startswith("refine.")}
        )

    def save(self, path, extra_meta: dict | None = None):
        meta = {"config": self.cfg.to_dict(), "seed": self.cfg.seed}
        if extra_meta:
            meta.update(extra_meta)
        save_checkpoint(path, self.state_dict(), meta=meta)

    @staticmethod
    def load(path, cfg: RunConfig | None = None) -> "SpadeModel":
        state, meta = load_checkpoint(path)
        if cfg is None:
            if "config" not in meta:
                raise ConfigError(f"checkpoint {path} has no embedded config; pass one explicitly")
            cfg = RunConfig.from_dict(meta["config"])
        model = SpadeModel(cfg)
        model.load_state_dict(state)
        return model


# ---------------------------------------------------------------------------
# corpus generation
# ---------------------------------------------------------------------------


def build_corpus(cfg: RunConfig, split: str, n_frames: int | None = None) -> list[FrameData]:
    """Deterministic synthetic frames; train/val/eval draw disjoint seed streams."""
    stream = {"train": 1, "val": 2, "eval": 3}
    if split not in stream:
        raise ConfigError(f"unknown corpus split {split!r}")
    if n_frames is None:
        n_frames = {"train": cfg.train_frames, "val": cfg.val_frames, "eval": cfg.val_frames}[split]
    h, w = cfg.input_hw
    frames = []
    for i in range(n_frames):
        rng = np.random.default_rng([cfg.seed, stream[split], i])
        depth_min = float(rng.uniform(0.8, 1.6))
        depth_max = depth_min + float(rng.uniform(1.2, 3.0))
        scene = SceneSpec(
            layout=TRAIN_LAYOUTS[i % len(TRAIN_LAYOUTS)],
            height=h,
            width=w,
            depth_min=depth_min,
            depth_max=depth_max,
            texture_scale=float(rng.uniform(6.0, 14.0)),
            seed=int(rng.integers(2**31)),
        )
        gt, guide = generate_scene(scene)
        oracle = OracleSpec(
            s_true=float(rng.uniform(0.8, 2.5)),
            t_true=float(rng.uniform(0.0, 0.4)),
            bias_amplitude=cfg.bias_amplitude,
            bias_wavelength=cfg.bias_wavelength,
            noise_sigma=cfg.noise_sigma,
            seed=int(rng.integers(2**31)),
        )
        z_rel = oracle_relative(gt, oracle)
        count = int(rng.integers(cfg.points_min, cfg.points_max + 1))
        pts = sample_pattern(
            gt,
            PatternSpec(kind="feature_like", count=count, seed=int(rng.integers(2**31))),
            guide=guide,
        )
        frames.append(FrameData(f"{split}_{i:04d}", gt, guide, z_rel, pts))
    return frames


# ---------------------------------------------------------------------------
# stage composition
# ---------------------------------------------------------------------------


def stage1_align(
    z_rel: DepthRaster, pts: SparsePointSet, laser: LaserRig | None = None
) -> tuple[DepthRaster, AffineFit]:
    """Global alignment with laser routing: a laser rig plus a two-point set
    takes the baseline path and never attempts the joint fit."""
    if laser is not None and len(pts) == 2:
        return align_with_laser(z_rel, pts, laser.intrinsics, laser.baseline_m)
    return align_global(z_rel, pts)


def densified_corrections(
    pts: SparsePointSet, aligned: DepthRaster, jbu: JBUParams
) -> tuple[np.ndarray, np.ndarray]:
    """Sparse corrections propagated by JBU and hole-filled with 1."""
    usable = SparsePointSet([p for p in pts if aligned.valid[p.v_row, p.u]])
    if len(usable) == 0:
        raise EmptyEvaluationError("no sparse points survive alignment masking")
    eps = sparse_scale_map(usable, aligned)
    dense = fill_default(jbu_densify(eps, aligned, jbu))
    return dense.values, eps.known


def run_frame(
    model: SpadeModel,
    z_rel: DepthRaster,
    guide: DepthRaster,
    pts: SparsePointSet,
    gt: DepthRaster | None = None,
    laser: LaserRig | None = None,
    cap_m: float | None = None,
) -> FrameResult:
    """Full two-stage inference for one frame."""
    cfg = model.cfg
    if z_rel.shape != tuple(cfg.input_hw):
        raise ConfigError(f"frame {z_rel.shape} does not match configured input {cfg.input_hw}")
    aligned, fit = stage1_align(z_rel, pts, laser)
    eps_dense, _ = densified_corrections(pts, aligned, cfg.jbu)

    model.eval()
    with no_grad():
        feats = model.pyramid(Tensor(guide.values[None, None]))
        eps_hat = model.refine(
            Tensor(eps_dense[None, None]), Tensor(aligned.values[None, None]), feats
        )
    eps_hat_map = eps_hat.data[0, 0]
    refined_inv = np.where(aligned.valid, aligned.values * eps_hat_map, 0.0)
    refined = from_inverse(DepthRaster(refined_inv, aligned.valid, Space.INVERSE))

    report = None
    if gt is not None:
        report = compute_metrics(refined, gt, cap_m if cap_m is not None else cfg.eval_cap_m)
    return FrameResult(depth=refined, aligned=aligned, fit=fit, eps_hat=eps_hat_map, metrics=report)


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------


def _subsample_seed(cfg_seed: int, epoch: int, frame_idx: int) -> int:
    return (cfg_seed * 1_000_003 + epoch * 10_007 + frame_idx * 101) & 0x7FFFFFFF


def _frame_training_arrays(frame: FrameData, pts: SparsePointSet, cfg: RunConfig):
    aligned, _ = align_global(frame.z_rel, pts)
    eps_dense, _ = densified_corrections(pts, aligned, cfg.jbu)
    target_inv = np.zeros(frame.gt.shape)
    np.divide(1.0, frame.gt.values, out=target_inv, where=frame.gt.valid)
    mask = frame.gt.valid & aligned.valid
    return eps_dense, aligned.values, target_inv, mask


def _batch_loss(model: SpadeModel, batch: list):
    eps_b = Tensor(np.stack([b[0] for b in batch])[:, None])
    z_b = np.stack([b[1] for b in batch])[:, None]
    guide_b = Tensor(np.stack([b[4] for b in batch])[:, None])
    feats = model.pyramid(guide_b)
    eps_hat = model.refine(eps_b, Tensor(z_b), feats)
    zhat = eps_hat * Tensor(z_b)
    total = None
    reports = []
    for i, (_, _, target, mask, _) in enumerate(batch):
        frame_loss, rep = loss_total(zhat[i, 0], target, mask)
        reports.append(rep)
        total = frame_loss if total is None else total + frame_loss
    return total * (1.0 / len(batch)), reports


def train(cfg: RunConfig, out_dir=None, quiet=False):
    """Optimize the refinement net and feature pyramid on the synthetic corpus.

    The relative-depth oracle is frozen by construction (it has no
    parameters); per-epoch point subsampling re-runs alignment, so the
    network sees a slightly different correction field each epoch.
    """
    train_frames = build_corpus(cfg, "train")
    val_frames = build_corpus(cfg, "val")
    model = SpadeModel(cfg, init="train")
    opt = AdamW(
        model.parameters(),
        lr=cfg.lr,
        betas=cfg.betas,
        weight_decay=cfg.weight_decay,
    )

    history = []
    last_good: dict | None = None
    for epoch in range(1, cfg.epochs + 1):
        opt.lr = cfg.lr if epoch <= cfg.decay_after_epoch else cfg.lr_decayed
        order = np.random.default_rng([cfg.seed, 4, epoch]).permutation(len(train_frames))
        model.train()
        epoch_losses = []
        for start in range(0, len(order), cfg.batch_size):
            idxs = order[start : start + cfg.batch_size]
            batch = []
            for fi in idxs:
                frame = train_frames[fi]
                pts = subsample(
                    frame.points, cfg.subsample_fraction, seed=_subsample_seed(cfg.seed, epoch, int(fi))
                )
                eps_dense, z_vals, target, mask = _frame_training_arrays(frame, pts, cfg)
                batch.append((eps_dense, z_vals, target, mask, frame.guide.values))
            loss, _ = _batch_loss(model, batch)
            if not np.isfinite(loss.data):
                raise DivergenceError(
                    f"training loss became non-finite at epoch {epoch}"
                    + ("; last good checkpoint retained" if last_good else "")
                )
            opt.zero_grad()
            loss.backward()
            opt.step()
            epoch_losses.append(loss.item())

        model.eval()
        val_losses = []
        with no_grad():
            for vi in range(0, len(val_frames), cfg.batch_size):
                batch = []
                for frame in val_frames[vi : vi + cfg.batch_size]:
                    eps_dense, z_vals, target, mask = _frame_training_arrays(frame, frame.points, cfg)
                    batch.append((eps_dense, z_vals, target, mask, frame.guide.values))
                vloss, _ = _batch_loss(model, batch)
                val_losses.append(vloss.item())
        entry = {
            "epoch": epoch,
            "lr": opt.lr,
            "train_loss": float(np.mean(epoch_losses)),
            "val_loss": float(np.mean(val_losses)),
        }
        history.append(entry)
        last_good = model.state_dict()
        if not quiet:
            log.info(
                "epoch %d/%d lr %.2e train %.4f val %.4f",
                epoch,
                cfg.epochs,
                opt.lr,
                entry["train_loss"],
                entry["val_loss"],
            )

    train_log = {
        "history": history,
        "param_count": model.param_count(),
        "seed": cfg.seed,
        "epochs": cfg.epochs,
    }
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        model.save(os.path.join(out_dir, "checkpoint.spw1"), extra_meta={"epochs": cfg.epochs})
        with open(os.path.join(out_dir, "training_log.json"), "w", encoding="utf-8") as f:
            json.dump(train_log, f, indent=1, sort_keys=True)
    return model, train_log


# ---------------------------------------------------------------------------
# evaluation sweeps
# ---------------------------------------------------------------------------

_FIXED_COUNT_PATTERNS = {"dvl4": 4, "laser2": 2}


def _sweep_points(frame: FrameData, pattern: str, count: int, cfg: RunConfig, frame_idx: int):
    h, w = cfg.input_hw
    seed = (cfg.seed * 7 + frame_idx * 13) & 0x7FFFFFFF
    if pattern == "feature_like":
        return subsample(frame.points, min(count, len(frame.points)), seed=seed)
    if pattern == "uniform_grid":
        rows = max(1, int(round(np.sqrt(count * h / w))))
        cols = max(1, int(np.ceil(count / rows)))
        pts = sample_pattern(frame.gt, PatternSpec(kind="uniform_grid", grid_rows=rows, grid_cols=cols))
        return subsample(pts, min(count, len(pts)), seed=seed)
    if pattern == "sonar_line":
        return sample_pattern(frame.gt, PatternSpec(kind="sonar_line", count=count, seed=seed))
    if pattern == "dvl4":
        return sample_pattern(frame.gt, PatternSpec(kind="dvl4"))
    if pattern == "laser2":
        K = default_intrinsics(h, w)
        return sample_pattern(frame.gt, PatternSpec(kind="laser2"), intrinsics=K)
    raise ConfigError(f"unknown sweep pattern {pattern!r}")


def _eval_cell(model, frames, pattern, count, cap, cfg):
    reports, skipped = [], 0
    laser = LaserRig(default_intrinsics(*cfg.input_hw)) if pattern == "laser2" else None
    for idx, frame in enumerate(frames):
        try:
            pts = _sweep_points(frame, pattern, count, cfg, idx)
            result = run_frame(model, frame.z_rel, frame.guide, pts, gt=frame.gt, laser=laser, cap_m=cap)
            reports.append(result.metrics)
        except (NumericError, SpadeError) as e:
            log.warning("sweep frame %s (%s, n=%d) skipped: %s", frame.name, pattern, count, e)
            skipped += 1
    agg = aggregate_metrics(reports).to_dict() if reports else None
    return agg, skipped


def sweep(model: SpadeModel, cfg: RunConfig, spec: SweepSpec) -> dict:
    """Grid of (pattern, point count, range cap) cells with a global-alignment
    baseline column computed from a neutral model over identical inputs."""
    frames = build_corpus(cfg, "eval", n_frames=spec.n_frames)
    # make sure enough feature points exist per frame for the largest count
    need = max(spec.point_counts)
    for i, frame in enumerate(frames):
        if len(frame.points) < need:
            frame.points = sample_pattern(
                frame.gt,
                PatternSpec(kind="feature_like", count=need, seed=(cfg.seed * 31 + i) & 0x7FFFFFFF),
                guide=frame.guide,
            )
    baseline = SpadeModel(cfg)  # neutral head: pure global alignment

    cells = []
    workers = spade_threads()
    tasks = []
    for pattern in spec.patterns:
        counts = [_FIXED_COUNT_PATTERNS[pattern]] if pattern in _FIXED_COUNT_PATTERNS else list(
            spec.point_counts
        )
        for count in counts:
            for cap in spec.range_caps:
                tasks.append((pattern, count, cap))

    def eval_task(task):
        pattern, count, cap = task
        refined, skipped = _eval_cell(model, frames, pattern, count, cap, cfg)
        ga, _ = _eval_cell(baseline, frames, pattern, count, cap, cfg)
        return {
            "pattern": pattern,
            "count": count,
            "cap_m": cap,
            "refined": refined,
            "ga_baseline": ga,
            "skipped_frames": skipped,
            "delta_mae_vs_ga": (refined["mae"] - ga["mae"]) if refined and ga else None,
        }

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            cells = list(pool.map(eval_task, tasks))
    else:
        cells = [eval_task(t) for t in tasks]
    return {
        "n_frames": spec.n_frames,
        "seed": cfg.seed,
        "point_counts": list(spec.point_counts),
        "patterns": list(spec.patterns),
        "range_caps": list(spec.range_caps),
        "cells": cells,
    }


# ---------------------------------------------------------------------------
# report rendering
# ---------------------------------------------------------------------------

_METRIC_KEYS = ("mae", "rmse", "absrel", "silog", "imae")


def write_pgm(path, values: np.ndarray, scale_max: float | None = None) -> None:
    """8-bit binary PGM with a colormap monotone in the input value."""
    v = np.asarray(values, dtype=np.float64)
    top = float(np.max(v)) if scale_max is None else scale_max
    img = np.zeros(v.shape, dtype=np.uint8) if top <= 0 else np.clip(
        np.round(255.0 * v / top), 0, 255
    ).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(f"P5\n{v.shape[1]} {v.shape[0]}\n255\n".encode("ascii"))
        f.write(img.tobytes())


def error_map(pred: DepthRaster, gt: DepthRaster) -> np.ndarray:
    mask = pred.valid & gt.valid
    return np.where(mask, np.abs(pred.values - gt.values), 0.0)


def sweep_table_csv(report: dict) -> str:
    lines = ["pattern,count,cap_m," + ",".join(_METRIC_KEYS) + ",ga_mae,delta_mae_vs_ga,skipped"]
    for cell in report["cells"]:
        ref = cell["refined"] or {}
        ga = cell["ga_baseline"] or {}
        row = [cell["pattern"], str(cell["count"]), str(cell["cap_m"])]
        row += [f"{ref.get(k, float('nan')):.6f}" for k in _METRIC_KEYS]
        row.append(f"{ga.get('mae', float('nan')):.6f}")
        delta = cell["delta_mae_vs_ga"]
        row.append("" if delta is None else f"{delta:.6f}")
        row.append(str(cell["skipped_frames"]))
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def sweep_table_markdown(report: dict) -> str:
    head = "| pattern | count | cap (m) | " + " | ".join(k.upper() for k in _METRIC_KEYS) + " | GA MAE |"
    sep = "|" + "---|" * (len(_METRIC_KEYS) + 4)
    lines = [head, sep]
    for cell in report["cells"]:
        ref = cell["refined"] or {}
        ga = cell["ga_baseline"] or {}
        cols = [cell["pattern"], str(cell["count"]), str(cell["cap_m"])]
        cols += [f"{ref.get(k, float('nan')):.4f}" for k in _METRIC_KEYS]
        cols.append(f"{ga.get('mae', float('nan')):.4f}")
        lines.append("| " + " | ".join(cols) + " |")
    return "\n".join(lines) + "\n"


def render_report(pairs: list, out_dir, table_rows: list | None = None) -> dict:
    """Emit per-frame error maps (PGM) and metric tables for (name, pred, gt)
    raster triples; returns the written paths."""
    os.makedirs(out_dir, exist_ok=True)
    written = {"error_maps": [], "tables": []}
    rows = []
    for name, pred, gt in pairs:
        emap = error_map(pred, gt)
        path = os.path.join(out_dir, f"error_{name}.pgm")
        write_pgm(path, emap)
        written["error_maps"].append(path)
        try:
            rep = compute_metrics(pred, gt, cap_m=float(np.inf))
            rows.append((name, rep))
        except EmptyEvaluationError:
            rows.append((name, None))
    if table_rows is not None:
        rows = table_rows
    csv_lines = ["frame," + ",".join(_METRIC_KEYS)]
    md_lines = ["| frame | " + " | ".join(k.upper() for k in _METRIC_KEYS) + " |", "|" + "---|" * 6]
    for name, rep in rows:
        if rep is None:
            csv_lines.append(f"{name},skipped,,,,")
            md_lines.append(f"| {name} | skipped | | | | |")
            continue
        vals = [f"{getattr(rep, k):.6f}" for k in _METRIC_KEYS]
        csv_lines.append(name + "," + ",".join(vals))
        md_lines.append("| " + " | ".join([name] + vals) + " |")
    csv_path = os.path.join(out_dir, "metrics.csv")
    md_path = os.path.join(out_dir, "metrics.md")
    with open(csv_path, "w", encoding="utf-8") as f:
        f.write("\n".join(csv_lines) + "\n")
    with open(md_path, "w", encoding="utf-8") as f:
        f.write("\n".join(md_lines) + "\n")
    written["tables"] = [csv_path, md_path]
    return written
