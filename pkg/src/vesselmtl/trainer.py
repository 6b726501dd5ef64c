"""Training, evaluation, prediction and the three-way comparison."""
import csv
import logging
import math
import os
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import combiner, ops
from .config import COMBINER_KEYS, MODES, MULTITASK_FIXED, PROPOSED, SINGLE, RunConfig
from .data import (
    GT_DIR,
    IMG_DIR,
    batches,
    load_dataset,
    load_splits,
    make_splits,
    read_gray_png,
    save_splits,
    to_uint8,
    write_gray_png,
)
from .errors import ContractError, DataError, DivergenceError, GeometryError, ReportError
from .metrics import binarize, evaluate_masks, format_table
from .model import build, forward, load_checkpoint, save_checkpoint
from .ops import sigmoid_array
from .optim import Adam
from .synth import synth_generate
from .tensor import Tape, Tensor, backward, no_tape, resolve_dtype
from .tensormap import save_tensor_map

log = logging.getLogger(__name__)

LOG_FIELDS = {
    PROPOSED: ["epoch", "batch", "l_bce", "l_mse", "alpha", "lr", "wall_ms"],
    MULTITASK_FIXED: ["epoch", "batch", "l_bce", "l_mse", "lr", "wall_ms"],
    SINGLE: ["epoch", "batch", "l_bce", "lr", "wall_ms"],
}


@dataclass
class TrainResult:
    out_dir: str
    best_path: str
    last_path: str
    log_path: str
    rows: list = field(default_factory=list)
    best_val_dice: float = float("nan")
    split_digest: str = ""


# --------------------------------------------------------------------------
# inference helpers
# --------------------------------------------------------------------------

def predict_arrays(params, images, batch_size=8):
    """Sigmoid probabilities and (when present) distance predictions for an N x 1 x H x W array."""
    dtype = resolve_dtype(params.config.precision)
    probs, dts = [], []
    with no_tape():
        for start in range(0, len(images), batch_size):
            x = Tensor(np.asarray(images[start : start + batch_size], dtype=dtype))
            out = forward(params, x)
            probs.append(sigmoid_array(out.seg_logits.data))
            if out.dt_pred is not None:
                dts.append(out.dt_pred.data)
    return np.concatenate(probs), (np.concatenate(dts) if dts else None)


def pad_to_multiple(image, multiple):
    """Reflect-pad bottom/right so both sides divide ``multiple``; returns (padded, (pad_h, pad_w))."""
    h, w = image.shape
    ph, pw = (-h) % multiple, (-w) % multiple
    if not (ph or pw):
        return image, (0, 0)
    mode = "reflect" if min(h, w) > 1 else "edge"
    return np.pad(image, ((0, ph), (0, pw)), mode=mode), (ph, pw)


def predict_image(params, image):
    """Probability (and distance) maps for one H x W image of any size."""
    padded, pad = pad_to_multiple(image, params.config.multiple)
    prob, dt = predict_arrays(params, padded[None, None])
    h, w = image.shape
    return prob[0, 0, :h, :w], (None if dt is None else dt[0, 0, :h, :w]), pad


def evaluate(params, samples, ids, threshold=0.5):
    by_id = {s.id: s for s in samples}
    if not ids:
        raise ReportError("nothing to evaluate: the split is empty")
    pairs = []
    for sid in ids:
        prob, _, _ = predict_image(params, by_id[sid].image)
        pairs.append((sid, binarize(prob, threshold), by_id[sid].mask))
    return evaluate_masks(pairs, threshold)


# --------------------------------------------------------------------------
# training
# --------------------------------------------------------------------------

def _fmt(v):
    return "" if v is None else repr(v)


def resolve_splits(cfg, samples):
    if cfg.split_file:
        split = load_splits(cfg.split_file)
        known = {s.id for s in samples}
        unknown = [i for i in split.train + split.val + split.test if i not in known]
        if unknown:
            raise DataError(f"split file {cfg.split_file} names unknown sample {unknown[0]!r}")
        return split
    return make_splits(samples, cfg.fractions, cfg.seed)


def _check_sizes(samples, multiple):
    for s in samples:
        h, w = s.image.shape
        if h % multiple or w % multiple:
            raise GeometryError(f"sample {s.id} is {h}x{w}; training needs sizes divisible by {multiple}")


def train(cfg, samples=None, progress=None):
    """Train one configuration; writes checkpoints, the log CSV and the split file under ``cfg.out``."""
    if samples is None:
        if not cfg.data:
            raise DataError("no dataset given (set data=PATH)")
        samples = load_dataset(cfg.data)
    if not samples:
        raise DataError("dataset is empty")
    mcfg = cfg.model_config()
    _check_sizes(samples, mcfg.multiple)
    split = resolve_splits(cfg, samples)
    if not split.train:
        raise DataError("training split is empty")

    os.makedirs(cfg.out, exist_ok=True)
    with open(os.path.join(cfg.out, "config.txt"), "w") as fh:
        fh.write(cfg.to_text())
    save_splits(split, os.path.join(cfg.out, "splits.txt"))
    digest = split.digest()
    log.info("mode=%s seed=%d split sha256=%s", cfg.mode, cfg.seed, digest)

    params = build(mcfg)
    dtype = resolve_dtype(cfg.precision)
    opt = Adam(params.tensors, lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.adam_eps)
    state = combiner.AdaptiveState(gamma=cfg.gamma, epsilon=cfg.combiner_eps)
    epoch_alpha = combiner.EpochAlpha(cfg.combiner_eps)
    pinned = float(cfg.alpha_pinned) if cfg.alpha_pinned else None

    result = TrainResult(
        cfg.out,
        os.path.join(cfg.out, "best.ckpt"),
        os.path.join(cfg.out, "last.ckpt"),
        os.path.join(cfg.out, "train_log.csv"),
        split_digest=digest,
    )
    fields_ = LOG_FIELDS[cfg.mode]
    best = -math.inf
    by_id = {s.id: s for s in samples}
    with open(result.log_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(fields_)
        for epoch in range(cfg.epochs):
            for bi, batch in enumerate(batches(by_id, split.train, cfg.batch_size, cfg.seed, epoch, shuffle=True, dtype=dtype)):
                t0 = time.perf_counter()
                row = {"epoch": epoch, "batch": bi, "lr": cfg.lr}
                with Tape() as tape:
                    out = forward(params, Tensor(batch.images))
                    l_bce = ops.bce_with_logits(out.seg_logits, Tensor(batch.masks))
                    row["l_bce"] = float(l_bce.data)
                    if cfg.mode == SINGLE:
                        loss = l_bce
                    else:
                        l_mse = ops.mse(out.dt_pred, Tensor(batch.dts))
                        row["l_mse"] = float(l_mse.data)
                        if cfg.mode == MULTITASK_FIXED:
                            loss = combiner.fixed_combiner(l_bce, l_mse, cfg.fixed_weight)
                        else:
                            if pinned is not None:
                                alpha = pinned
                            elif cfg.alpha_scope == "epoch":
                                alpha = epoch_alpha.alpha
                                _guarded(epoch_alpha.observe, row, result.rows)
                            else:
                                alpha = combiner.compute_alpha(state)
                                _guarded(lambda b, m: combiner.update(state, b, m), row, result.rows)
                            row["alpha"] = alpha
                            loss = combiner.total_loss(l_bce, l_mse, alpha)
                    if not math.isfinite(float(loss.data)):
                        raise DivergenceError(
                            f"loss became non-finite at epoch {epoch}, batch {bi}", result.rows[-10:] + [row]
                        )
                    backward(loss)
                    tape.clear()
                opt.step()
                opt.zero_grad()
                row["wall_ms"] = round((time.perf_counter() - t0) * 1000.0, 3)
                result.rows.append(row)
                writer.writerow([_fmt(row.get(k)) for k in fields_])
            fh.flush()
            if cfg.alpha_scope == "epoch":
                epoch_alpha.end_epoch()
            if split.val:
                score = evaluate(params, samples, split.val, cfg.threshold).mean_dice
                if score > best:
                    best = score
                    save_checkpoint(params, result.best_path)
            if progress:
                progress(epoch, result.rows)
    save_checkpoint(params, result.last_path)
    if not split.val or best == -math.inf:
        save_checkpoint(params, result.best_path)
    result.best_val_dice = best if best > -math.inf else float("nan")
    return result


def _guarded(fn, row, rows):
    try:
        fn(row["l_bce"], row["l_mse"])
    except DivergenceError as exc:
        raise DivergenceError(str(exc), rows[-10:] + [row]) from exc


def read_log(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# --------------------------------------------------------------------------
# eval / predict
# --------------------------------------------------------------------------

def run_eval(checkpoint, cfg, split_name="test", threshold=None, out_dir=None, samples=None):
    """Evaluate ``checkpoint`` on one split and write ``metrics_<split>.csv``."""
    params = load_checkpoint(checkpoint)
    if samples is None:
        if not cfg.data:
            raise DataError("no dataset given (set data=PATH)")
        samples = load_dataset(cfg.data)
    split = resolve_splits(cfg, samples)
    ids = split.get(split_name)
    thr = cfg.threshold if threshold is None else threshold
    report = evaluate(params, samples, ids, thr)
    out_dir = out_dir or cfg.out
    os.makedirs(out_dir, exist_ok=True)
    report.write_csv(os.path.join(out_dir, f"metrics_{split_name}.csv"))
    return report


def _list_inputs(path):
    if os.path.isdir(path):
        names = sorted(f for f in os.listdir(path) if f.lower().endswith(".png"))
        return [os.path.join(path, f) for f in names]
    if os.path.isfile(path):
        return [path]
    raise DataError(f"no such input {path}")


def run_predict(checkpoint, inputs, out_dir, threshold=0.5):
    """Write ``<stem>_prob.png``, ``<stem>_mask.png`` and, for two-head models, ``<stem>_dt.dtc`` / ``<stem>_dt.png``."""
    params = load_checkpoint(checkpoint)
    os.makedirs(out_dir, exist_ok=True)
    written = []
    for path in _list_inputs(inputs):
        stem = os.path.splitext(os.path.basename(path))[0]
        image = (read_gray_png(path).astype(np.float64) / 255.0)
        prob, dt, pad = predict_image(params, image)
        write_gray_png(os.path.join(out_dir, f"{stem}_prob.png"), to_uint8(prob))
        write_gray_png(os.path.join(out_dir, f"{stem}_mask.png"), binarize(prob, threshold).astype(np.uint8) * 255)
        if dt is not None:
            save_tensor_map(os.path.join(out_dir, f"{stem}_dt.dtc"), {"dt": dt.astype(np.float32)})
            peak = float(dt.max())
            write_gray_png(os.path.join(out_dir, f"{stem}_dt.png"), to_uint8(dt / peak if peak > 0 else dt))
        if any(pad):
            with open(os.path.join(out_dir, f"{stem}_pad.txt"), "w") as fh:
                fh.write(
                    f"input {image.shape[0]}x{image.shape[1]} reflect-padded by {pad[0]} rows and {pad[1]} columns "
                    f"to a multiple of {params.config.multiple}; outputs cropped back\n"
                )
        written.append(stem)
    return written


# --------------------------------------------------------------------------
# comparison of the three modes
# --------------------------------------------------------------------------

COMPARE_PRESET = {
    "epochs": "30",
    "base_channels": "8",
    "train_frac": "0.8",
    "val_frac": "0.0",
    "test_frac": "0.2",
}


def compare_base():
    return RunConfig().with_overrides(COMPARE_PRESET)


def _mode_config(cfg, mode, seed, out, split_file):
    reset = {k: RunConfig.__dataclass_fields__[k].default for k in COMBINER_KEYS} if mode == SINGLE else {}
    return replace(cfg, mode=mode, heads="auto", seed=seed, out=out, split_file=split_file, **reset)


def run_compare(cfg, seeds, progress=None):
    """Train every mode for every seed on one shared split and write the comparison files.

    Returns ``{mode: (median_dice, median_iou)}``.
    """
    if not seeds:
        raise ContractError("compare needs at least one seed")
    os.makedirs(cfg.out, exist_ok=True)
    data_root = cfg.data
    if not data_root:
        data_root = os.path.join(cfg.out, "data")
        if not os.path.isdir(os.path.join(data_root, IMG_DIR)):
            synth_generate(cfg.synth_n, cfg.synth_size, cfg.synth_seed, data_root)
    samples = load_dataset(data_root)
    split = make_splits(samples, cfg.fractions, cfg.seed) if not cfg.split_file else load_splits(cfg.split_file)
    split_path = os.path.join(cfg.out, "splits.txt")
    save_splits(split, split_path)
    digest = split.digest()

    runs = []
    for seed in seeds:
        for mode in MODES:
            run_cfg = _mode_config(cfg, mode, seed, os.path.join(cfg.out, mode, f"seed{seed}"), split_path)
            run_cfg = replace(run_cfg, data=data_root)
            t0 = time.perf_counter()
            res = train(run_cfg, samples)
            if res.split_digest != digest:
                raise DataError(f"{mode} seed {seed} trained on a different split")
            report = run_eval(res.best_path, run_cfg, "test", samples=samples)
            elapsed = time.perf_counter() - t0
            runs.append((mode, seed, report.mean_dice, report.mean_iou, res.split_digest, elapsed))
            if progress:
                progress(mode, seed, report, elapsed)

    with open(os.path.join(cfg.out, "runs.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["mode", "seed", "dice", "iou", "split_sha256", "train_eval_s"])
        for r in runs:
            w.writerow([r[0], r[1], repr(r[2]), repr(r[3]), r[4], f"{r[5]:.1f}"])

    summary = {}
    for mode in MODES:
        d = [r[2] for r in runs if r[0] == mode]
        j = [r[3] for r in runs if r[0] == mode]
        summary[mode] = (float(np.median(d)), float(np.median(j)))
    with open(os.path.join(cfg.out, "comparison.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "Dice", "IoU"])
        for mode in MODES:
            w.writerow([mode, f"{summary[mode][0]:.6f}", f"{summary[mode][1]:.6f}"])
    with open(os.path.join(cfg.out, "manifest.txt"), "w") as fh:
        fh.write("# comparison protocol\n")
        fh.write(f"dataset={data_root}\n")
        fh.write(f"split_sha256={digest}\n")
        fh.write(f"split_sizes=train:{len(split.train)} val:{len(split.val)} test:{len(split.test)}\n")
        fh.write(f"seeds={' '.join(str(s) for s in seeds)}\n")
        fh.write("aggregate=median over seeds of the per-run mean test Dice/IoU\n")
        fh.write("model_selection=best validation Dice; last epoch when the validation split is empty\n")
        fh.write("multitask-fixed=constant-weight sum L_bce + w * L_mse (stand-in baseline)\n")
        fh.write(cfg.to_text())
    with open(os.path.join(cfg.out, "comparison.txt"), "w") as fh:
        fh.write(format_table(summary) + "\n")
    return summary
