"""End-to-end optimization: batching, loss, Adam, per-step baking.

Gradient flow per step: sample pixels -> encode_forward -> mlp_forward ->
mean squared error -> mlp_backward -> encode_backward -> Adam -> re-bake.
Confidence tables get a lazy Adam update (only rows touched by the batch,
mirroring the usual sparse-embedding treatment) and an incremental re-bake,
which is equivalent to a full re-bake because untouched rows keep their
argmax.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import backends, model_io
from .encoding import encode_forward, level_upstream, probed_backward_compact
from .errors import InvalidHyperparameter, TargetTooSmall, TrainingDiverged
from .mlp import mlp_backward, mlp_forward
from .model import SEED_BATCH, HyperParams, Model, init_model, seeded_rng

# Recipe bounds: the feature table range and the index-table growth ceiling.
RECIPE_NF_MIN = 2**6
RECIPE_NF_MAX = 2**12
RECIPE_NC_MIN = 2**10
RECIPE_NC_MAX = 2**16
RECIPE_NP = 2**1


@dataclass
class TrainConfig:
    steps: int = 10_000
    batch_size: int = 8192
    lr: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.99
    eps: float = 1e-15
    seed: int = 0
    precision: str = "f32"      # "f32" | "f64"
    metrics_path: str | None = None
    debug_check_every: int = 0  # assert bake/infer equivalence every N steps

    def validate(self) -> "TrainConfig":
        if self.batch_size < 1:
            raise InvalidHyperparameter("batch size must be at least 1")
        if self.lr < 0:
            raise InvalidHyperparameter("learning rate must be non-negative")
        if self.steps < 0:
            raise InvalidHyperparameter("step count must be non-negative")
        if self.precision not in ("f32", "f64"):
            raise InvalidHyperparameter(f"unknown precision {self.precision!r}")
        return self

    @property
    def dtype(self):
        return np.float64 if self.precision == "f64" else np.float32


@dataclass
class AdamSlot:
    m: np.ndarray
    v: np.ndarray

    @classmethod
    def like(cls, arr) -> "AdamSlot":
        return cls(m=np.zeros_like(arr), v=np.zeros_like(arr))


def adam_update(param, grad, slot: AdamSlot, t: int, lr: float,
                betas=(0.9, 0.99), eps: float = 1e-15) -> None:
    """Standard Adam with bias correction, in place."""
    b1, b2 = betas
    dt = param.dtype.type
    slot.m *= dt(b1)
    slot.m += dt(1 - b1) * grad
    slot.v *= dt(b2)
    slot.v += dt(1 - b2) * (grad * grad)
    mhat = slot.m / dt(1 - b1**t)
    vhat = slot.v / dt(1 - b2**t)
    param -= dt(lr) * mhat / (np.sqrt(vhat) + dt(eps))


class TrainState:
    """Optimizer state bound to one model; drives individual steps."""

    def __init__(self, model: Model, image: np.ndarray, cfg: TrainConfig):
        cfg.validate()
        if image.ndim != 3 or image.shape[2] != model.hyper.out_dim:
            raise InvalidHyperparameter(
                f"image shape {image.shape} does not match output dim "
                f"{model.hyper.out_dim}")
        self.model = model
        self.cfg = cfg
        self.image = np.ascontiguousarray(image, dtype=model.dtype)
        self.flat = self.image.reshape(-1, image.shape[2])
        self.height, self.width = image.shape[:2]
        self.rng = seeded_rng(cfg.seed, SEED_BATCH)
        self.t = 0
        self.mlp_slots = [AdamSlot.like(w) for w in model.mlp.weights] + \
                         [AdamSlot.like(b) for b in model.mlp.biases]
        self.feat_slots = [AdamSlot.like(lv.features.values) for lv in model.levels]
        self.conf_slots = [AdamSlot.like(lv.conf.values) if lv.conf is not None
                           else None for lv in model.levels]

    def sample_batch(self):
        b = self.cfg.batch_size
        pix = self.rng.integers(0, self.width * self.height, size=b)
        rows, cols = pix // self.width, pix % self.width
        dt = self.model.dtype
        xs = np.stack([(cols + 0.5) / self.width, (rows + 0.5) / self.height],
                      axis=1).astype(dt)
        return xs, self.flat[pix]

    def step(self) -> float:
        model, cfg = self.model, self.cfg
        betas = (cfg.beta1, cfg.beta2)
        xs, targets = self.sample_batch()

        y, traces = encode_forward(model, xs)
        out, cache = mlp_forward(model.mlp, y)
        if model.hyper.out_sigmoid:
            pred = 1.0 / (1.0 + np.exp(-out))
        else:
            pred = out
        diff = pred - targets
        loss = float(np.mean(diff.astype(np.float64) ** 2))
        if not math.isfinite(loss):
            raise TrainingDiverged(f"non-finite loss at step {self.t}")

        dpred = diff * model.dtype.type(2.0 / diff.size)
        dout = dpred * (pred * (1.0 - pred)) if model.hyper.out_sigmoid else dpred
        dy = mlp_backward(model.mlp, cache, dout)

        # Scatter into the codebooks; probed levels keep their confidence
        # gradients compact (unique touched rows) for the fused update below.
        kern = backends.get()
        compacts = []
        for lv, tr in zip(model.levels, traces):
            up = level_upstream(model, lv.spec.level, dy)
            if tr.kind == "probed":
                compacts.append(probed_backward_compact(lv, tr, up))
            else:
                kern.indexed_bwd(up, tr.idx, tr.weights, lv.features.grads)
                compacts.append(None)

        self.t += 1
        for slot, (arr, grad) in zip(
                self.mlp_slots,
                [(w, g) for w, g in zip(model.mlp.weights, model.mlp.weight_grads)]
                + [(b, g) for b, g in zip(model.mlp.biases, model.mlp.bias_grads)]):
            adam_update(arr, grad, slot, self.t, cfg.lr, betas, cfg.eps)
            grad[:] = 0
        for lv, fslot, cslot, compact in zip(model.levels, self.feat_slots,
                                             self.conf_slots, compacts):
            adam_update(lv.features.values, lv.features.grads, fslot,
                        self.t, cfg.lr, betas, cfg.eps)
            lv.features.grads[:] = 0
            if compact is not None:
                rows_u, gconf_u = compact
                kern.adam_rebake_rows(lv.conf.values, cslot.m, cslot.v,
                                      lv.baked.entries, rows_u, gconf_u,
                                      self.t, cfg.lr, cfg.beta1, cfg.beta2,
                                      cfg.eps)

        if cfg.debug_check_every and self.t % cfg.debug_check_every == 0:
            self.check_bake_consistency()
        return loss

    def check_bake_consistency(self) -> None:
        from .codebooks import bake
        for lv in self.model.levels:
            if lv.conf is not None:
                full = bake(lv.conf).entries
                if not np.array_equal(full, lv.baked.entries):
                    raise TrainingDiverged(
                        f"incremental bake diverged on level {lv.spec.level}")


@dataclass
class FitResult:
    model: Model
    inference: "model_io.InferenceModel"
    final_psnr: float
    final_loss: float
    steps: int
    wall_time_s: float
    ms_per_step: float
    size_report: "model_io.SizeReport"
    losses: list = field(default_factory=list, repr=False)


def fit(image: np.ndarray, hyper: HyperParams, cfg: TrainConfig,
        force_probed: bool = False) -> FitResult:
    """Fit one image; returns the trained model plus quality/speed metrics.

    The reported PSNR is measured after the half-precision downcast so it
    describes the artifact that would be written to disk.
    """
    from .metrics import psnr

    model = init_model(hyper, cfg.seed, cfg.dtype, force_probed=force_probed)
    state = TrainState(model, image, cfg)
    sink = open(cfg.metrics_path, "w") if cfg.metrics_path else None
    losses = []
    step_ms = []
    t_start = time.perf_counter()
    try:
        for step in range(cfg.steps):
            t0 = time.perf_counter()
            loss = state.step()
            ms = (time.perf_counter() - t0) * 1e3
            losses.append(loss)
            step_ms.append(ms)
            if sink is not None:
                batch_psnr = -10.0 * math.log10(loss) if loss > 0 else float("inf")
                sink.write(json.dumps({"step": step, "loss": loss,
                                       "psnr": batch_psnr, "ms": ms}) + "\n")
    finally:
        if sink is not None:
            sink.close()
    wall = time.perf_counter() - t_start

    inference = model_io.to_inference(model, width=state.width,
                                      height=state.height)
    decoded = model_io.decode_image(inference)
    final_psnr = psnr(np.asarray(image, dtype=np.float64),
                      np.clip(decoded, 0.0, 1.0).astype(np.float64))
    return FitResult(
        model=model,
        inference=inference,
        final_psnr=final_psnr,
        final_loss=losses[-1] if losses else float("nan"),
        steps=cfg.steps,
        wall_time_s=wall,
        ms_per_step=float(np.median(step_ms)) if step_ms else 0.0,
        size_report=model_io.size_report(hyper),
        losses=losses,
    )


def select_hyperparams(target_size_bytes: int,
                       base: HyperParams | None = None) -> HyperParams:
    """Size-budgeted hyperparameters.

    Recipe: start from the smallest probing config, pick the feature table
    from the size lower bound (its no-index size stays under a third of the
    budget), grow the index table toward its ceiling, then grow the feature
    table with whatever budget remains.  The resulting byte split leans
    toward one third features, two thirds indices.
    """
    base = base or HyperParams()
    hyper = base.with_updates(n_f=RECIPE_NF_MIN, n_c=RECIPE_NC_MIN, n_p=RECIPE_NP)
    minimum = model_io.size_report(hyper).total_bytes
    if target_size_bytes < minimum:
        raise TargetTooSmall(
            f"target {target_size_bytes} B below the smallest model "
            f"({minimum} B)")

    def total(h: HyperParams) -> int:
        return model_io.size_report(h).total_bytes

    def star(n_f: int) -> int:
        # Size with no index blocks: the plain-hash lower bound.
        return model_io.size_report(hyper.with_updates(n_f=n_f, n_p=1)).total_bytes

    n_f = RECIPE_NF_MIN
    while n_f * 2 <= RECIPE_NF_MAX and star(n_f * 2) <= target_size_bytes // 3:
        n_f *= 2
    n_c = RECIPE_NC_MIN
    while n_c * 2 <= RECIPE_NC_MAX and \
            total(hyper.with_updates(n_f=n_f, n_c=n_c * 2)) <= target_size_bytes:
        n_c *= 2
    while n_f * 2 <= RECIPE_NF_MAX and \
            total(hyper.with_updates(n_f=n_f * 2, n_c=n_c)) <= target_size_bytes:
        n_f *= 2
    return hyper.with_updates(n_f=n_f, n_c=n_c).validate()
