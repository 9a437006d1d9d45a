"""Assembled model state: hyperparameters, per-level codebooks, decoder."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .codebooks import (
    BakedIndexCodebook,
    ConfidenceCodebook,
    FeatureCodebook,
    bake,
    init_confidence_codebook,
    init_feature_codebook,
)
from .errors import InvalidHyperparameter
from .indexing import LevelMode, LevelSpec, build_level_specs
from .mlp import MlpParams, mlp_init

# Seed-stream domains, so the presence of one parameter group never shifts
# the draws of another (e.g. a probing-disabled model still gets the same
# features and MLP as its probed twin).
SEED_FEATURES = 0
SEED_CONFIDENCE = 1
SEED_MLP = 2
SEED_BATCH = 3


def seeded_rng(seed: int, domain: int, index: int = 0) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence(entropy=seed, spawn_key=(domain, index)))


@dataclass(frozen=True)
class HyperParams:
    """Model shape knobs; defaults follow the recommended image settings."""

    n_f: int = 2**6
    n_c: int = 2**14
    n_p: int = 2**4
    n_levels: int = 16
    feature_dim: int = 2
    n_min: int = 16
    n_max: int = 512
    n_neurons: int = 64
    n_hidden_layers: int = 2
    d: int = 2
    out_dim: int = 3
    out_sigmoid: bool = False

    def validate(self) -> "HyperParams":
        def pow2(name, v):
            if v < 1 or (v & (v - 1)) != 0:
                raise InvalidHyperparameter(f"{name}={v} must be a power of two")
        pow2("n_f", self.n_f)
        pow2("n_c", self.n_c)
        pow2("n_p", self.n_p)
        if self.n_f % self.n_p != 0:
            raise InvalidHyperparameter(
                f"n_p={self.n_p} does not divide n_f={self.n_f}")
        if self.n_p > 256:
            raise InvalidHyperparameter("n_p beyond 8-bit baked storage")
        if self.n_levels < 1:
            raise InvalidHyperparameter("need at least one level")
        if not 1 <= self.n_min <= self.n_max:
            raise InvalidHyperparameter(
                f"need 1 <= n_min <= n_max, got {self.n_min}, {self.n_max}")
        if self.d not in (2, 3):
            raise InvalidHyperparameter(f"d={self.d} unsupported (need 2 or 3)")
        if self.feature_dim < 1 or self.n_neurons < 1 or self.n_hidden_layers < 1:
            raise InvalidHyperparameter("degenerate decoder shape")
        if self.out_dim < 1:
            raise InvalidHyperparameter("output dimension must be positive")
        return self

    @property
    def encoded_width(self) -> int:
        return self.n_levels * self.feature_dim

    def mlp_widths(self) -> list[int]:
        return ([self.encoded_width]
                + [self.n_neurons] * self.n_hidden_layers
                + [self.out_dim])

    def with_updates(self, **kw) -> "HyperParams":
        return replace(self, **kw)


@dataclass
class LevelState:
    """One multiresolution level: spec, tables, and baked probe offsets."""

    spec: LevelSpec
    features: FeatureCodebook
    conf: ConfidenceCodebook | None = None
    baked: BakedIndexCodebook | None = None

    @property
    def probing(self) -> bool:
        return self.conf is not None

    def rebake_all(self) -> None:
        if self.conf is not None:
            self.baked = bake(self.conf)


@dataclass
class Model:
    hyper: HyperParams
    levels: list[LevelState]
    mlp: MlpParams
    dtype: np.dtype
    seed: int
    probing_forced: bool = field(default=False)

    def zero_grads(self) -> None:
        for lv in self.levels:
            lv.features.grads[:] = 0
            if lv.conf is not None:
                lv.conf.grads[:] = 0
        self.mlp.zero_grads()

    def parameter_count(self) -> int:
        n = self.mlp.param_count()
        for lv in self.levels:
            n += lv.features.values.size
            if lv.conf is not None:
                n += lv.conf.values.size
        return n


def init_model(hyper: HyperParams, seed: int = 0, dtype=np.float32,
               force_probed: bool = False) -> Model:
    """Build a fresh model.

    ``force_probed`` keeps the probed code path (confidence tables, baked
    offsets) even at n_p = 1, where it is mathematically identical to the
    plain hash lookup; the degenerate-equivalence harness compares the two.
    """
    hyper.validate()
    dtype = np.dtype(dtype)
    specs = build_level_specs(hyper.n_min, hyper.n_max, hyper.n_levels,
                              hyper.n_f, hyper.d)
    levels = []
    for spec in specs:
        rng_f = seeded_rng(seed, SEED_FEATURES, spec.level)
        features = init_feature_codebook(hyper.n_f, hyper.feature_dim, rng_f, dtype)
        lv = LevelState(spec=spec, features=features)
        probing = spec.mode is LevelMode.HASHED and (hyper.n_p > 1 or force_probed)
        if probing:
            rng_c = seeded_rng(seed, SEED_CONFIDENCE, spec.level)
            lv.conf = init_confidence_codebook(hyper.n_c, hyper.n_p, rng_c, dtype)
            lv.rebake_all()
        levels.append(lv)
    mlp = mlp_init(seeded_rng(seed, SEED_MLP), hyper.mlp_widths(), dtype)
    return Model(hyper=hyper, levels=levels, mlp=mlp, dtype=dtype, seed=seed,
                 probing_forced=force_probed)
