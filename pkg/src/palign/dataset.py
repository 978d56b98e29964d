"""Per-pair photometric inconsistency statistics over a paired dataset.

Each pair is reduced to the spatial mean of every colour channel of the input
and of its target.  Per channel, target means are regressed on input means
across pairs by ordinary least squares; the residual standard deviation
quantifies how far pairs scatter from a single consistent mapping.
"""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import PalignError
from .tensor import ImageRGB, load_png

log = logging.getLogger(__name__)

CHANNELS = ("R", "G", "B")
DEFAULT_CAP = 1000


class Pairing(str, Enum):
    NAME = "name"
    SORTED = "sorted"


@dataclass(frozen=True, eq=False)
class PairPhotometricSummary:
    pair_id: str
    input_mean: np.ndarray
    gt_mean: np.ndarray


@dataclass(frozen=True)
class ChannelRegression:
    channel: str
    slope: float
    intercept: float
    r_squared: float
    residual_std: float
    pair_count: int

    def to_dict(self) -> dict:
        return {
            "channel": self.channel,
            "slope": self.slope,
            "intercept": self.intercept,
            "r_squared": self.r_squared,
            "residual_std": self.residual_std,
            "pair_count": self.pair_count,
        }


def summarize_pair(pair_id: str, inp: ImageRGB, gt: ImageRGB) -> PairPhotometricSummary:
    return PairPhotometricSummary(pair_id, inp.pixels().mean(axis=1), gt.pixels().mean(axis=1))


def fit_line(x: np.ndarray, y: np.ndarray):
    """OLS ``y = k x + b``; returns ``(k, b, r2, residual_std)``.

    ``residual_std`` is the population standard deviation of the residuals.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    mx, my = x.mean(), y.mean()
    sxx = float(np.sum((x - mx) ** 2))
    if sxx <= 1e-300:
        raise PalignError("input means do not vary across pairs; regression is undefined")
    k = float(np.sum((x - mx) * (y - my)) / sxx)
    b = float(my - k * mx)
    res = y - (k * x + b)
    ssr = float(np.sum(res * res))
    sst = float(np.sum((y - my) ** 2))
    r2 = 1.0 - ssr / sst if sst > 0 else 1.0
    return k, b, r2, float(np.sqrt(ssr / x.size))


def channel_regressions(summaries: list[PairPhotometricSummary]) -> list[ChannelRegression]:
    if len(summaries) < 2:
        raise PalignError(f"need at least 2 pairs for regression, got {len(summaries)}")
    x = np.array([s.input_mean for s in summaries])
    y = np.array([s.gt_mean for s in summaries])
    out = []
    for c, name in enumerate(CHANNELS):
        k, b, r2, sd = fit_line(x[:, c], y[:, c])
        out.append(ChannelRegression(name, k, b, r2, sd, len(summaries)))
    return out


def pair_files(input_dir, gt_dir, pairing: Pairing | str = Pairing.NAME) -> list[tuple[str, Path, Path]]:
    """Match PNG files of two directories, sorted by input filename."""
    input_dir, gt_dir = Path(input_dir), Path(gt_dir)
    for d in (input_dir, gt_dir):
        if not d.is_dir():
            raise FileNotFoundError(f"directory not found: {d}")
    inputs = sorted(p for p in input_dir.iterdir() if p.suffix.lower() == ".png")
    targets = sorted(p for p in gt_dir.iterdir() if p.suffix.lower() == ".png")
    pairing = Pairing(pairing)
    if pairing is Pairing.SORTED:
        if len(inputs) != len(targets):
            log.warning("positional pairing: %d inputs vs %d targets; extra files skipped",
                        len(inputs), len(targets))
        return [(a.stem, a, b) for a, b in zip(inputs, targets)]
    by_name = {p.name: p for p in targets}
    pairs = []
    for a in inputs:
        b = by_name.pop(a.name, None)
        if b is None:
            log.warning("no target for %s; skipped", a.name)
            continue
        pairs.append((a.stem, a, b))
    for name in sorted(by_name):
        log.warning("no input for target %s; skipped", name)
    return pairs


def _load_summary(item):
    pair_id, a, b = item
    inp, gt = load_png(a), load_png(b)
    if inp.shape != gt.shape:
        log.warning("pair %s has mismatched sizes %s vs %s; means are still compared",
                    pair_id, inp.shape, gt.shape)
    return PairPhotometricSummary(pair_id, inp.pixels().mean(axis=1), gt.pixels().mean(axis=1))


def analyze_dataset(input_dir, gt_dir, pairing: Pairing | str = Pairing.NAME,
                    cap: int = DEFAULT_CAP, threads: int = 1):
    """Summaries of the first ``cap`` pairs plus per-channel regressions."""
    pairs = pair_files(input_dir, gt_dir, pairing)[:cap]
    if len(pairs) < 2:
        raise PalignError(f"need at least 2 usable pairs, found {len(pairs)}")
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            summaries = list(pool.map(_load_summary, pairs))
    else:
        summaries = [_load_summary(p) for p in pairs]
    return summaries, channel_regressions(summaries)


def fmt(x: float) -> str:
    return f"{x:.9g}"


def round9(x: float) -> float:
    return float(fmt(x))


def export_scatter_csv(summaries: list[PairPhotometricSummary], path) -> None:
    """One row per pair per channel: ``pair_id,channel,input_mean,gt_mean``."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["pair_id", "channel", "input_mean", "gt_mean"])
        for s in summaries:
            for c, name in enumerate(CHANNELS):
                w.writerow([s.pair_id, name, fmt(s.input_mean[c]), fmt(s.gt_mean[c])])


def read_scatter_csv(path) -> list[PairPhotometricSummary]:
    rows: dict[str, tuple[list, list]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            inp, gt = rows.setdefault(row["pair_id"], ([0.0] * 3, [0.0] * 3))
            c = CHANNELS.index(row["channel"])
            inp[c] = float(row["input_mean"])
            gt[c] = float(row["gt_mean"])
    return [PairPhotometricSummary(k, np.array(a), np.array(b)) for k, (a, b) in rows.items()]


def regressions_json(regs: list[ChannelRegression]) -> str:
    data = [{k: (round9(v) if isinstance(v, float) else v) for k, v in r.to_dict().items()}
            for r in regs]
    return json.dumps(data, indent=2) + "\n"


def export_regressions_json(regs: list[ChannelRegression], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(regressions_json(regs))
