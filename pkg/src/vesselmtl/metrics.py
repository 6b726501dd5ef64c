"""Dice / IoU on binary masks and their per-image aggregation."""
import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DimensionError, ReportError


def binarize(prob, threshold=0.5):
    """``prob >= threshold`` as a boolean mask."""
    p = np.asarray(getattr(prob, "data", prob))
    if p.size and (np.isnan(p).any() or p.min() < 0 or p.max() > 1):
        raise ContractError("probabilities must lie in [0, 1]")
    return p >= threshold


def _counts(pred, gt):
    pred = np.asarray(pred, dtype=bool)
    gt = np.asarray(gt, dtype=bool)
    if pred.shape != gt.shape:
        raise DimensionError(f"mask shapes differ: {pred.shape} vs {gt.shape}")
    inter = int(np.count_nonzero(pred & gt))
    return inter, int(np.count_nonzero(pred)), int(np.count_nonzero(gt))


def dice(pred, gt):
    inter, p, g = _counts(pred, gt)
    if p + g == 0:
        return 1.0
    return 2.0 * inter / (p + g)


def iou(pred, gt):
    inter, p, g = _counts(pred, gt)
    union = p + g - inter
    if union == 0:
        return 1.0
    return inter / union


@dataclass
class MetricsReport:
    per_image: list = field(default_factory=list)  # (id, dice, iou)
    threshold: float = 0.5

    @property
    def mean_dice(self):
        return float(np.mean([d for _, d, _ in self.per_image]))

    @property
    def mean_iou(self):
        return float(np.mean([j for _, _, j in self.per_image]))

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["id", "dice", "iou"])
            for sid, d, j in self.per_image:
                w.writerow([sid, repr(d), repr(j)])
            w.writerow(["mean", repr(self.mean_dice), repr(self.mean_iou)])

    def table(self, label="model"):
        return format_table({label: (self.mean_dice, self.mean_iou)})


def evaluate_masks(pairs, threshold=0.5):
    """Build a report from ``(id, pred_mask, gt_mask)`` triples."""
    rows = [(sid, dice(p, g), iou(p, g)) for sid, p, g in pairs]
    if not rows:
        raise ReportError("nothing to evaluate: the split is empty")
    return MetricsReport(rows, threshold)


def format_table(columns):
    """Dice/IoU grid with one column per method, e.g. ``{"proposed": (0.8, 0.7)}``."""
    names = list(columns)
    width = max(10, *(len(n) + 2 for n in names))
    head = " " * 6 + "".join(n.rjust(width) for n in names)
    dice_row = "Dice".ljust(6) + "".join(f"{columns[n][0]:.4f}".rjust(width) for n in names)
    iou_row = "IoU".ljust(6) + "".join(f"{columns[n][1]:.4f}".rjust(width) for n in names)
    return "\n".join([head, dice_row, iou_row])
