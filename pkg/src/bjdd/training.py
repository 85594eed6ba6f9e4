"""Alternating adversarial training with Adam.

Each iteration samples a batch of clean patches, synthesizes their noisy CFA
inputs (per-example sigma drawn uniformly from the configured range, so the
reconstruction is blind to the noise level), then takes one discriminator
step followed by one generator step. Runs are deterministic for a fixed seed:
batch sampling, noise and dropout all derive from counter-based streams keyed
by (seed, step).

With both loss weights zero the loop degenerates to supervised regression and
the discriminator is never built or evaluated.
"""

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import tensor as T
from .cfa import (RGGB, STREAM_DROPOUT, STREAM_TRAIN, BayerPattern, make_rng,
                  augment8, mosaic, pack_raw)
from .losses import (DEFAULT_FEATURE_SEED, FeatureExtractor, LossWeights,
                     adversarial_loss, discriminator_loss, mse_loss,
                     perceptual_loss)
from .networks import (DiscriminatorSpec, GeneratorSpec, build_discriminator,
                       build_generator)
from .tensor import Tensor


class NumericalError(RuntimeError):
    """A loss became NaN/Inf; training aborts rather than continuing silently."""


@dataclass
class TrainConfig:
    steps: int = 1000
    batch_size: int = 8
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    lambda_p: float = 1.0
    lambda_a: float = 0.001
    d_steps_per_g: int = 1
    checkpoint_every: int = 0
    sigma_range: tuple = (0.0, 20.0)
    clip_noise: bool = True
    pattern: str = "rggb"
    augment: bool = False
    res_blocks: int = 16
    trunk_width: int = 64
    dropout_keep: float = 1.0
    feature_seed: int = DEFAULT_FEATURE_SEED
    init_seed: int | None = None
    bn_eps: float = 1e-5
    bn_momentum: float = 0.1

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("betas must lie in [0, 1)")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.steps < 0 or self.d_steps_per_g < 1 or self.checkpoint_every < 0:
            raise ValueError("bad schedule values")
        lo, hi = self.sigma_range
        if lo < 0 or hi < lo:
            raise ValueError("sigma_range must satisfy 0 <= lo <= hi")
        self.sigma_range = (float(lo), float(hi))

    @property
    def weights(self):
        return LossWeights(self.lambda_p, self.lambda_a)

    def generator_spec(self):
        return GeneratorSpec(res_blocks=self.res_blocks, trunk_width=self.trunk_width,
                             dropout_keep=self.dropout_keep)

    def discriminator_spec(self):
        return DiscriminatorSpec(bn_eps=self.bn_eps, bn_momentum=self.bn_momentum)


class AdamState:
    """First/second moment buffers for one parameter store plus the step count."""

    def __init__(self, store):
        self.m = {n: np.zeros_like(t.data) for n, t in store.trainable()}
        self.v = {n: np.zeros_like(t.data) for n, t in store.trainable()}
        self.t = 0


def adam_step(store, state, cfg):
    """One bias-corrected Adam update over every trainable tensor in the store."""
    state.t += 1
    b1, b2 = cfg.beta1, cfg.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for name, p in store.trainable():
        g = p.grad
        if g is None:
            raise ValueError(f"adam_step: parameter {name!r} has no gradient")
        m, v = state.m[name], state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p.data -= cfg.lr * (m / c1) / (np.sqrt(v / c2) + cfg.eps)


def _check_finite(value, what, step):
    if not np.isfinite(value):
        raise NumericalError(f"{what} became {value} at step {step}; aborting")


def train_step_discriminator(real, packed, gen, disc, dstate, cfg, rng, step=0):
    """One discriminator update on a real/fake pair; the generator is untouched."""
    with T.no_grad():
        fake = gen.forward(packed, mode="train", rng=rng)
    real_scores = disc.forward(real, mode="train")
    fake_scores = disc.forward(fake, mode="train")
    loss = discriminator_loss(real_scores, fake_scores)
    d_loss = loss.item()
    _check_finite(d_loss, "discriminator loss", step)
    disc.params.zero_grad()
    loss.backward()
    adam_step(disc.params, dstate, cfg)
    return d_loss


def train_step_generator(real, packed, gen, disc, fx, gstate, cfg, rng, step=0):
    """One generator update against the composite loss; returns all four terms.

    The discriminator, when used for the adversarial term, runs with its
    running statistics frozen so its store stays bitwise unchanged.
    """
    w = cfg.weights
    out = gen.forward(packed, mode="train", rng=rng)
    loss = mse_loss(out, real)
    g_mse = loss.item()
    g_perc = 0.0
    g_adv = 0.0
    if w.lambda_p != 0.0:
        perc = perceptual_loss(out, real, fx)
        g_perc = perc.item()
        loss = T.add(loss, T.mul(perc, w.lambda_p))
    if w.lambda_a != 0.0:
        scores = disc.forward(out, mode="train", update_running=False)
        adv = adversarial_loss(scores)
        g_adv = adv.item()
        loss = T.add(loss, T.mul(adv, w.lambda_a))
    g_total = loss.item()
    _check_finite(g_total, "generator loss", step)
    gen.params.zero_grad()
    loss.backward()
    adam_step(gen.params, gstate, cfg)
    return g_total, g_mse, g_perc, g_adv


LOG_HEADER = ("step", "d_loss", "g_total", "g_mse", "g_perc", "g_adv")


@dataclass
class TrainResult:
    generator: object
    discriminator: object
    rows: list = field(default_factory=list)
    log_path: object = None
    checkpoint_paths: list = field(default_factory=list)


def make_batch(dataset, cfg, pattern, step):
    """Sample and degrade one training batch; deterministic in (seed, step)."""
    rng = make_rng(cfg.seed, step, STREAM_TRAIN)
    idx = rng.integers(0, len(dataset), size=cfg.batch_size)
    lo, hi = cfg.sigma_range
    sigmas = rng.uniform(lo, hi, size=cfg.batch_size)
    reals, packs = [], []
    for i, sigma in zip(idx, sigmas):
        img = dataset[i]
        m = mosaic(img, pattern)
        if sigma > 0:
            noisy = m + rng.normal(0.0, sigma / 255.0, size=m.shape)
            if cfg.clip_noise:
                np.clip(noisy, 0.0, 1.0, out=noisy)
            m = noisy.astype(m.dtype)
        reals.append(img)
        packs.append(pack_raw(m, pattern))
    dt = T.get_default_dtype()
    return Tensor(np.stack(reals), dtype=dt), Tensor(np.stack(packs), dtype=dt)


def _validate_dataset(dataset, cfg):
    if not dataset:
        raise ValueError("training dataset is empty")
    shape = dataset[0].shape
    for img in dataset:
        if img.ndim != 3 or img.shape[0] != 3:
            raise ValueError(f"expected (3, H, W) patches, got {img.shape}")
        if img.shape != shape:
            raise ValueError("all training patches must share one size")
    if shape[1] % 2 or shape[2] % 2:
        raise ValueError("patch dimensions must be even")
    if cfg.augment and shape[1] != shape[2]:
        raise ValueError("augmentation needs square patches")


def checkpoint_metadata(cfg, gen, disc, step):
    meta = {
        "generator_spec": asdict(gen.spec),
        "discriminator_spec": asdict(disc.spec) if disc is not None else None,
        "pattern": cfg.pattern,
        "packing": "r,g0,g1,b",
        "feature_seed": cfg.feature_seed if cfg.lambda_p != 0.0 else None,
        "lambda_p": cfg.lambda_p,
        "lambda_a": cfg.lambda_a,
        "sigma_range": list(cfg.sigma_range),
        "seed": cfg.seed,
        "train_step": step,
    }
    if meta["discriminator_spec"] is not None:
        meta["discriminator_spec"]["strides"] = list(meta["discriminator_spec"]["strides"])
    return meta


def train_loop(dataset, cfg, out_dir=None):
    """Run cfg.steps alternating iterations; write log + checkpoints when out_dir is set."""
    from . import fileio  # deferred: fileio has no reason to be a hard import for step APIs

    _validate_dataset(dataset, cfg)
    if out_dir is not None:
        out_dir = Path(out_dir)
    if cfg.augment:
        dataset = [t for img in dataset for t in augment8(img)]
    pattern = BayerPattern.from_string(cfg.pattern)
    init_seed = cfg.seed if cfg.init_seed is None else cfg.init_seed

    gen = build_generator(cfg.generator_spec(), init_seed)
    adversarial = cfg.lambda_a != 0.0
    disc = build_discriminator(cfg.discriminator_spec(), init_seed + 1) if adversarial else None
    fx = FeatureExtractor(cfg.feature_seed) if cfg.lambda_p != 0.0 else None
    gstate = AdamState(gen.params)
    dstate = AdamState(disc.params) if adversarial else None

    result = TrainResult(generator=gen, discriminator=disc)
    log_file = None
    writer = None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        result.log_path = out_dir / "log.csv"
        log_file = open(result.log_path, "w", newline="")
        writer = csv.writer(log_file)
        writer.writerow(LOG_HEADER)

    def save(tag, step):
        path = out_dir / f"ckpt_{tag}.bjdd"
        stores = {"generator": gen.params}
        if disc is not None:
            stores["discriminator"] = disc.params
        fileio.save_checkpoint(path, stores, checkpoint_metadata(cfg, gen, disc, step))
        result.checkpoint_paths.append(path)

    try:
        if out_dir is not None:
            save("000000", 0)
        for step in range(cfg.steps):
            real, packed = make_batch(dataset, cfg, pattern, step)
            drop_rng = make_rng(cfg.seed, step, STREAM_DROPOUT)
            d_loss = 0.0
            if adversarial:
                for _ in range(cfg.d_steps_per_g):
                    d_loss = train_step_discriminator(real, packed, gen, disc,
                                                      dstate, cfg, drop_rng, step)
            g_total, g_mse, g_perc, g_adv = train_step_generator(
                real, packed, gen, disc, fx, gstate, cfg, drop_rng, step)
            row = (step, d_loss, g_total, g_mse, g_perc, g_adv)
            result.rows.append(row)
            if writer is not None:
                writer.writerow([step] + [repr(v) for v in row[1:]])
            done = step + 1
            if out_dir is not None and cfg.checkpoint_every and done % cfg.checkpoint_every == 0:
                save(f"{done:06d}", done)
        if out_dir is not None and cfg.steps > 0:
            save("final", cfg.steps)
    finally:
        if log_file is not None:
            log_file.close()
    return result


# keys accepted in a run-config JSON document
_CONFIG_KEYS = set(TrainConfig.__dataclass_fields__)


class ConfigError(ValueError):
    """Malformed run configuration (unknown keys, bad values)."""


def load_run_config(path):
    """Read a JSON run-config file into a TrainConfig."""
    try:
        with open(path) as f:
            doc = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: not valid JSON: {e}") from e
    return parse_run_config(doc)


def parse_run_config(doc):
    """Build a TrainConfig from a JSON-style dict; unknown keys are rejected."""
    if not isinstance(doc, dict):
        raise ConfigError("run config must be a JSON object")
    unknown = sorted(set(doc) - _CONFIG_KEYS)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    kwargs = dict(doc)
    if "sigma_range" in kwargs:
        sr = kwargs["sigma_range"]
        if not (isinstance(sr, (list, tuple)) and len(sr) == 2):
            raise ConfigError("sigma_range must be a [lo, hi] pair")
        kwargs["sigma_range"] = (float(sr[0]), float(sr[1]))
    try:
        return TrainConfig(**kwargs)
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from e
