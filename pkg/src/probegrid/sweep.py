"""Pareto sweep harness: grids of fits reported as CSV rows.

The ``method`` column distinguishes probed configurations from the plain
spatial-hash baseline (n_p = 1) and leaves room for externally measured
codecs (e.g. JPEG rows merged in for plotting).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

from .errors import InvalidHyperparameter
from .model import HyperParams
from .trainer import TrainConfig, fit

CSV_COLUMNS = ["method", "n_f", "n_c", "n_p", "levels", "neurons", "seed",
               "size_bytes", "psnr_db", "ms_per_step"]

METHOD_PROBED = "probed"
METHOD_BASELINE = "baseline"


@dataclass(frozen=True)
class SweepPoint:
    method: str
    n_f: int
    n_c: int
    n_p: int
    levels: int
    neurons: int
    seed: int
    size_bytes: int
    psnr_db: float
    ms_per_step: float

    def csv_row(self) -> str:
        psnr = "inf" if self.psnr_db == float("inf") else f"{self.psnr_db:.4f}"
        return (f"{self.method},{self.n_f},{self.n_c},{self.n_p},"
                f"{self.levels},{self.neurons},{self.seed},{self.size_bytes},"
                f"{psnr},{self.ms_per_step:.3f}")


def expand_grid(base: HyperParams, n_f, n_c, n_p, levels=None,
                neurons=None) -> list[HyperParams]:
    """Cartesian product of the swept axes over a base configuration."""
    levels = levels or [base.n_levels]
    neurons = neurons or [base.n_neurons]
    if not (n_f and n_c and n_p):
        raise InvalidHyperparameter("empty sweep grid")
    grid = []
    for f, c, p, lv, nn in itertools.product(n_f, n_c, n_p, levels, neurons):
        grid.append(base.with_updates(n_f=f, n_c=c, n_p=p, n_levels=lv,
                                      n_neurons=nn).validate())
    return grid


def run_sweep(image, grid: list[HyperParams], seeds, cfg: TrainConfig,
              progress=None) -> list[SweepPoint]:
    """One fit per (configuration, seed); deterministic given seeds."""
    if not grid:
        raise InvalidHyperparameter("empty sweep grid")
    if not seeds:
        raise InvalidHyperparameter("no seeds given")
    points = []
    for hyper, seed in itertools.product(grid, seeds):
        run_cfg = TrainConfig(steps=cfg.steps, batch_size=cfg.batch_size,
                              lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2,
                              eps=cfg.eps, seed=seed, precision=cfg.precision)
        result = fit(image, hyper, run_cfg)
        point = SweepPoint(
            method=METHOD_PROBED if hyper.n_p > 1 else METHOD_BASELINE,
            n_f=hyper.n_f, n_c=hyper.n_c, n_p=hyper.n_p,
            levels=hyper.n_levels, neurons=hyper.n_neurons, seed=seed,
            size_bytes=result.size_report.total_bytes,
            psnr_db=result.final_psnr, ms_per_step=result.ms_per_step)
        points.append(point)
        if progress is not None:
            progress(point)
    return points


def write_csv(points, path) -> None:
    with open(path, "w") as f:
        f.write(",".join(CSV_COLUMNS) + "\n")
        for p in points:
            f.write(p.csv_row() + "\n")
