# -*- coding: utf-8 -*-
"""Convolutional beta-VAE over range scans

Two encoder stacks are available. The shallow one is a single strided
circular convolution, the deep one adds two channel-reducing layers::

    kind      channels   kernels      strides      paddings
    shallow   (1)        (45)         (15)         (15)
    deep      (3, 2, 1)  (45, 3, 3)   (15, 1, 1)   (15, 1, 1)

Both reduce a 180-ray scan to 12 features. A linear head maps them to
the latent mean and log-variance. The decoder mirrors the encoder with
circularly padded transposed convolutions and ends with a sigmoid. When
the latent size equals the feature width its head is circulant, so that
rolling z by one position rolls the reconstruction by one encoder stride.
"""

import os
import logging
from dataclasses import dataclass, asdict

import numpy as np
import pandas as pd

from asvlab.core import AsvLabError, AsvLabValidationError, TrainingDiverged
from asvlab.config import RunConfig
from asvlab.neural import (
    PADDING_MODES,
    Conv1d,
    ConvTranspose1d,
    CircularLinear,
    Linear,
    ParamStore,
    Tensor,
    adam_step,
    backward,
    clip,
    conv_output_length,
    conv_transpose_output_length,
    exp,
    log,
    no_grad,
    read_checkpoint,
    relu,
    reshape,
    sigmoid,
    square,
)
from asvlab.report import confidence_interval
from asvlab.utils.filesystem import write_to_csv
from asvlab.utils.process import parallel_map

logger = logging.getLogger("asvlab.vae")

SCAN_LENGTH = 180
BCE_EPS = 1e-7
# mean KL per dimension below which a latent dimension is inactive
COLLAPSE_THRESHOLD = 0.01
EVAL_BATCH = 512


@dataclass(frozen=True)
class LayerSpec:
    in_channels: int
    out_channels: int
    kernel: int
    stride: int
    padding: int

    def output_length(self, length):
        return conv_output_length(length, self.kernel, self.stride, self.padding)


ARCHITECTURES = {
    "shallow": (LayerSpec(1, 1, 45, 15, 15),),
    "deep": (
        LayerSpec(1, 3, 45, 15, 15),
        LayerSpec(3, 2, 3, 1, 1),
        LayerSpec(2, 1, 3, 1, 1),
    ),
}


@dataclass(frozen=True)
class VaeTrainConfig:
    kind: str = "shallow"
    latent_dim: int = 12
    beta: float = 1.0
    decoder_padding: str = "circular"
    lr: float = 1e-3
    batch_size: int = 64
    epochs: int = 25
    seeds: int = 10

    def __post_init__(self):
        if self.kind not in ARCHITECTURES:
            raise AsvLabValidationError("vae_unknown_kind", kind=self.kind)
        if self.decoder_padding not in PADDING_MODES:
            raise AsvLabValidationError("conv_bad_padding_mode", mode=self.decoder_padding)
        for key in ("latent_dim", "batch_size", "epochs", "seeds"):
            if getattr(self, key) < 1:
                raise AsvLabValidationError("invalid_config_value", key=key, value=getattr(self, key))
        if not self.lr > 0:
            raise AsvLabValidationError("invalid_config_value", key="lr", value=self.lr)
        if self.beta < 0:
            raise AsvLabValidationError("invalid_config_value", key="beta", value=self.beta)


@dataclass
class LatentDist:
    mu: Tensor
    log_var: Tensor

    @property
    def sigma(self):
        return np.exp(0.5 * self.log_var.data)


class VaeModel:
    """Encoder and decoder parameters of a convolutional beta-VAE

    Keyword arguments:
        - kind -- "shallow" or "deep"
        - latent_dim -- Size of the latent space
        - beta -- Weight of the KL term of the loss
        - decoder_padding -- "circular", or "zeros" for the ablated decoder
        - seed -- Seed of the parameter initialization
        - dtype -- Parameter precision

    """

    def __init__(self, kind="shallow", latent_dim=12, beta=1.0, decoder_padding="circular", seed=0, dtype=np.float32):
        if kind not in ARCHITECTURES:
            raise AsvLabValidationError("vae_unknown_kind", kind=kind)
        self.kind = kind
        self.layers = ARCHITECTURES[kind]
        self.latent_dim = int(latent_dim)
        self.beta = float(beta)
        self.decoder_padding = decoder_padding
        self.seed = seed
        self.store = ParamStore(dtype)

        rng = np.random.default_rng([int(seed), 0xE1B0])
        lengths = [SCAN_LENGTH]
        for spec in self.layers:
            lengths.append(spec.output_length(lengths[-1]))
        self.feature_length = lengths[-1]
        self.feature_channels = self.layers[-1].out_channels
        features = self.feature_channels * self.feature_length

        self.encoder = [
            Conv1d(
                self.store,
                "encoder.conv%d" % i,
                spec.in_channels,
                spec.out_channels,
                spec.kernel,
                spec.stride,
                spec.padding,
                "circular",
                rng,
            )
            for i, spec in enumerate(self.layers)
        ]
        self.encoder_head = Linear(self.store, "encoder.head", features, 2 * self.latent_dim, rng)
        if self.latent_dim == features:
            self.decoder_head = CircularLinear(self.store, "decoder.head", features, rng)
        else:
            self.decoder_head = Linear(self.store, "decoder.head", self.latent_dim, features, rng)

        self.decoder = []
        for i, spec in reversed(list(enumerate(self.layers))):
            length_out = conv_transpose_output_length(lengths[i + 1], spec.kernel, spec.stride, spec.padding)
            self.decoder.append(
                ConvTranspose1d(
                    self.store,
                    "decoder.deconv%d" % i,
                    spec.out_channels,
                    spec.in_channels,
                    spec.kernel,
                    spec.stride,
                    spec.padding,
                    output_padding=lengths[i] - length_out,
                    padding_mode=decoder_padding,
                    rng=rng,
                )
            )

    @property
    def features(self):
        return self.feature_channels * self.feature_length

    def describe(self):
        return {
            "kind": self.kind,
            "latent_dim": self.latent_dim,
            "beta": self.beta,
            "decoder_padding": self.decoder_padding,
            "seed": self.seed,
            "layers": [asdict(spec) for spec in self.layers],
        }

    def save(self, file_path, meta=None):
        self.store.save(file_path, meta=dict(self.describe(), **(meta or {})))

    @classmethod
    def load(cls, file_path, dtype=np.float32):
        state, meta = read_checkpoint(file_path)
        try:
            model = cls(
                meta["kind"],
                meta["latent_dim"],
                meta.get("beta", 1.0),
                meta.get("decoder_padding", "circular"),
                meta.get("seed", 0),
                dtype,
            )
        except KeyError as e:
            raise AsvLabError("checkpoint_missing_meta", path=file_path, key=str(e))
        model.store.load_state(state)
        return model

    # Forward ---------------------------------------------------------

    def features_of(self, x):
        """Flattened output of the convolutional stack"""
        x = self._as_input(x)
        h = reshape(x, (x.shape[0], 1, SCAN_LENGTH))
        for i, layer in enumerate(self.encoder):
            h = layer(h)
            if i < len(self.encoder) - 1:
                h = relu(h)
        return reshape(h, (x.shape[0], self.features))

    def encode(self, x) -> LatentDist:
        out = self.encoder_head(self.features_of(x))
        return LatentDist(out[:, : self.latent_dim], out[:, self.latent_dim :])

    def decode(self, z) -> Tensor:
        z = z if isinstance(z, Tensor) else Tensor(np.asarray(z, dtype=self.store.dtype))
        if z.ndim != 2 or z.shape[1] != self.latent_dim:
            raise AsvLabValidationError(
                "vae_input_shape", shape=z.shape, expected="(batch, %d)" % self.latent_dim
            )
        h = reshape(self.decoder_head(z), (z.shape[0], self.feature_channels, self.feature_length))
        for i, layer in enumerate(self.decoder):
            h = layer(h)
            if i < len(self.decoder) - 1:
                h = relu(h)
        return sigmoid(reshape(h, (z.shape[0], SCAN_LENGTH)))

    def _as_input(self, x):
        x = x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=self.store.dtype))
        if x.ndim != 2 or x.shape[1] != SCAN_LENGTH:
            raise AsvLabValidationError(
                "vae_input_shape", shape=x.shape, expected="(batch, %d)" % SCAN_LENGTH
            )
        return x

    def mean_latent(self, x):
        """Deterministic latent features, as numpy"""
        with no_grad():
            return self.encode(x).mu.data


def reparameterize(dist: LatentDist, rng) -> Tensor:
    eps = rng.standard_normal(dist.mu.shape).astype(dist.mu.dtype)
    return dist.mu + exp(dist.log_var * 0.5) * eps


def kl_per_dim(dist: LatentDist):
    """KL divergence to the unit Gaussian, per sample and dimension"""
    return (square(dist.mu) + exp(dist.log_var) - 1.0 - dist.log_var) * 0.5


def elbo_loss(x, x_hat: Tensor, dist: LatentDist, beta):
    """Negative ELBO terms, summed over dimensions and averaged over the batch

    Returns:
        A dict of scalar tensors: bce, kl and total = bce + beta * kl

    """
    x = x.data if isinstance(x, Tensor) else np.asarray(x, dtype=x_hat.dtype)
    batch = x.shape[0]
    p = clip(x_hat, BCE_EPS, 1.0 - BCE_EPS)
    bce = -(x * log(p) + (1.0 - x) * log(1.0 - p)).sum() * (1.0 / batch)

    if beta == 0:
        with no_grad():
            kl = kl_per_dim(dist).sum() * (1.0 / batch)
        return {"bce": bce, "kl": kl, "total": bce}

    kl = kl_per_dim(dist).sum() * (1.0 / batch)
    return {"bce": bce, "kl": kl, "total": bce + kl * beta}


def reconstruct(model: VaeModel, x):
    """Decode the latent means of x"""
    with no_grad():
        return model.decode(model.encode(x).mu).data


def evaluate_loss(model: VaeModel, x, batch_size=EVAL_BATCH):
    """Mean loss terms over a set of scans, decoding the latent means"""
    totals = {"bce": 0.0, "kl": 0.0, "total": 0.0}
    with no_grad():
        for start in range(0, len(x), batch_size):
            batch = x[start : start + batch_size]
            dist = model.encode(batch)
            terms = elbo_loss(batch, model.decode(dist.mu), dist, model.beta)
            for key in totals:
                totals[key] += terms[key].item() * len(batch)
    return {key: value / max(len(x), 1) for key, value in totals.items()}


# Training -------------------------------------------------------------


@dataclass
class TrainedVae:
    model: VaeModel
    history: pd.DataFrame
    best_epoch: int


def train_vae(train_x, val_x, cfg: VaeTrainConfig, seed=0, dtype=np.float32) -> TrainedVae:
    """Train one model with Adam and keep the best validation parameters

    Keyword arguments:
        - train_x, val_x -- (n, 180) scan arrays
        - cfg -- The training configuration
        - seed -- Seed of initialization, shuffling and sampling

    """
    model = VaeModel(cfg.kind, cfg.latent_dim, cfg.beta, cfg.decoder_padding, seed, dtype)
    shuffle_rng = np.random.default_rng([int(seed), 0x5F])
    sample_rng = np.random.default_rng([int(seed), 0x2A])
    train_x = np.asarray(train_x, dtype=dtype)
    val_x = np.asarray(val_x, dtype=dtype)

    initial = evaluate_loss(model, train_x)
    rows = [
        {
            "epoch": 0,
            "train_loss": initial["total"],
            "train_bce": initial["bce"],
            "train_kl": initial["kl"],
            "val_loss": evaluate_loss(model, val_x)["total"] if len(val_x) else np.nan,
        }
    ]
    best_loss, best_epoch, best_state = np.inf, 0, model.store.state()

    for epoch in range(1, cfg.epochs + 1):
        order = shuffle_rng.permutation(len(train_x))
        sums = {"bce": 0.0, "kl": 0.0, "total": 0.0}
        for start in range(0, len(order), cfg.batch_size):
            batch = train_x[order[start : start + cfg.batch_size]]
            model.store.zero_grad()
            dist = model.encode(batch)
            terms = elbo_loss(batch, model.decode(reparameterize(dist, sample_rng)), dist, cfg.beta)
            total = terms["total"].item()
            if not np.isfinite(total):
                raise TrainingDiverged("vae_training_diverged", epoch=epoch, batch=start // cfg.batch_size, loss=total)
            backward(terms["total"])
            adam_step(model.store, cfg.lr)
            for key in sums:
                sums[key] += terms[key].item() * len(batch)

        val_loss = evaluate_loss(model, val_x)["total"] if len(val_x) else sums["total"] / len(train_x)
        rows.append(
            {
                "epoch": epoch,
                "train_loss": sums["total"] / len(train_x),
                "train_bce": sums["bce"] / len(train_x),
                "train_kl": sums["kl"] / len(train_x),
                "val_loss": val_loss,
            }
        )
        logger.info(
            "seed %d epoch %d/%d: train loss %.4f, validation loss %.4f",
            seed,
            epoch,
            cfg.epochs,
            rows[-1]["train_loss"],
            val_loss,
        )
        if val_loss < best_loss:
            best_loss, best_epoch, best_state = val_loss, epoch, model.store.state()

    model.store.load_state(best_state)
    logger.debug("seed %d: keeping parameters of epoch %d", seed, best_epoch)
    return TrainedVae(model, pd.DataFrame(rows), best_epoch)


def evaluate_vae(models, test_x):
    """Test loss per model and its spread over the seeds

    Returns:
        A dict with the per-seed losses, mean, sample std and 95% interval

    """
    losses = np.array([evaluate_loss(m, np.asarray(test_x, dtype=m.store.dtype))["total"] for m in models])
    mean, low, high = confidence_interval(losses)
    return {
        "losses": losses.tolist(),
        "mean": mean,
        "std": float(losses.std(ddof=1)),
        "ci_low": low,
        "ci_high": high,
        "n": int(losses.size),
    }


def latent_diagnostics(model: VaeModel, x, threshold=COLLAPSE_THRESHOLD):
    """Per-dimension KL and mean variance, to detect posterior collapse"""
    with no_grad():
        dist = model.encode(np.asarray(x, dtype=model.store.dtype))
        per_dim_kl = kl_per_dim(dist).data.astype(np.float64).mean(axis=0)
    mu_variance = dist.mu.data.astype(np.float64).var(axis=0)
    return {
        "per_dim_kl": per_dim_kl.tolist(),
        "mu_variance": mu_variance.tolist(),
        "active_dims": int(np.sum(per_dim_kl > threshold)),
    }


def latent_columns(latent_dim):
    return ["mu_%d" % j for j in range(latent_dim)] + ["log_var_%d" % j for j in range(latent_dim)]


def export_latents(model: VaeModel, inputs, out_path, reconstructions_path=None):
    """Write the latent mean and log-variance of every input row

    Keyword arguments:
        - reconstructions_path -- Also write ray-wise input and
            reconstruction pairs to this file

    """
    inputs = np.asarray(inputs, dtype=model.store.dtype)
    with no_grad():
        dist = model.encode(inputs)
    table = np.concatenate([dist.mu.data, dist.log_var.data], axis=1)
    write_to_csv(out_path, table, columns=latent_columns(model.latent_dim))

    if reconstructions_path:
        x_hat = reconstruct(model, inputs)
        rays = np.arange(SCAN_LENGTH)
        frame = pd.DataFrame(
            {
                "sample": np.repeat(np.arange(len(inputs)), SCAN_LENGTH),
                "ray": np.tile(rays, len(inputs)),
                "angle": np.tile(rays * 2.0 * np.pi / SCAN_LENGTH, len(inputs)),
                "input": inputs.reshape(-1),
                "reconstruction": x_hat.reshape(-1),
            }
        )
        write_to_csv(reconstructions_path, frame)
    return len(inputs)


# Actions --------------------------------------------------------------


def _checkpoint_name(kind, beta, seed):
    return "vae_%s_beta%g_seed%d.ckpt" % (kind, beta, seed)


def _train_job(job):
    train_x, val_x, cfg, seed = job
    trained = train_vae(train_x, val_x, cfg, seed)
    return trained.model.store.state(), trained.history, trained.best_epoch


def _load_split(data, split):
    from asvlab.dataset import ScanDataset

    return ScanDataset.load(data).subset(split)


def vae_train(data, arch=None, beta=None, seeds=None, latent_dim=None, epochs=None, decoder_padding=None, config=None, seed=None, out=None):
    """Train one model per seed on a dataset and checkpoint each of them

    Keyword arguments:
        - data -- Dataset file written by 'dataset generate'
        - arch -- "shallow" or "deep"
        - beta -- Weight of the KL term
        - seeds -- Number of seeds, counted from the master seed
        - decoder_padding -- "circular" or "zeros"

    """
    run = RunConfig.load(config, seed, out)
    cfg = run.section(
        "vae",
        VaeTrainConfig,
        kind=arch,
        beta=beta,
        seeds=seeds,
        latent_dim=latent_dim,
        epochs=epochs,
        decoder_padding=decoder_padding,
    )
    train_x, val_x = _load_split(data, "train"), _load_split(data, "val")
    logger.info(
        "training %d %s model(s) on %d scans, beta=%g",
        cfg.seeds,
        cfg.kind,
        len(train_x),
        cfg.beta,
    )

    seed_list = [run.seed + i for i in range(cfg.seeds)]
    results = parallel_map(_train_job, [(train_x, val_x, cfg, s) for s in seed_list])

    written, checkpoints = [], []
    for s, (state, history, best_epoch) in zip(seed_list, results):
        model = VaeModel(cfg.kind, cfg.latent_dim, cfg.beta, cfg.decoder_padding, s)
        model.store.load_state(state)
        ckpt = run.path(_checkpoint_name(cfg.kind, cfg.beta, s))
        model.save(ckpt, meta={"best_epoch": best_epoch})
        curves = run.path(os.path.basename(ckpt)[: -len(".ckpt")] + "_curves.csv")
        write_to_csv(curves, history)
        written += [ckpt, ckpt + ".json", curves]
        checkpoints.append(ckpt)
        logger.success("checkpoint written to %s", ckpt)

    run.write_manifest("vae train", written)
    return {"checkpoints": checkpoints}


def _load_models(ckpt):
    return [VaeModel.load(path) for path in ckpt]


def vae_evaluate(ckpt, data, config=None, seed=None, out=None):
    """Test loss of models trained over several seeds"""
    run = RunConfig.load(config, seed, out)
    run.record("evaluate", {"checkpoints": sorted(ckpt), "data": data})
    models = _load_models(ckpt)
    result = evaluate_vae(models, _load_split(data, "test"))

    per_seed = run.path("vae_test_losses.csv")
    write_to_csv(
        per_seed,
        pd.DataFrame({"checkpoint": [os.path.basename(p) for p in ckpt], "loss": result["losses"]}),
    )
    report = run.path("vae_report.csv")
    write_to_csv(
        report,
        pd.DataFrame(
            [
                {
                    "metric": "test_loss",
                    "mean": result["mean"],
                    "ci_low": result["ci_low"],
                    "ci_high": result["ci_high"],
                    "std": result["std"],
                    "n": result["n"],
                }
            ]
        ),
    )
    run.write_manifest("vae evaluate", [per_seed, report])
    logger.success("report written to %s", report)
    return {k: result[k] for k in ("mean", "std", "ci_low", "ci_high", "n")}


def vae_diagnose(ckpt, data, threshold=COLLAPSE_THRESHOLD, config=None, seed=None, out=None):
    """Look for posterior collapse in each model"""
    run = RunConfig.load(config, seed, out)
    run.record("diagnose", {"checkpoints": sorted(ckpt), "data": data, "threshold": threshold})
    test_x = _load_split(data, "test")

    rows, result = [], {}
    for path in ckpt:
        model = VaeModel.load(path)
        diagnostics = latent_diagnostics(model, test_x, threshold)
        name = os.path.basename(path)
        result[name] = {"active_dims": diagnostics["active_dims"]}
        if diagnostics["active_dims"] == 0:
            logger.warning("%s: every latent dimension is inactive, the posterior collapsed", name)
        for j in range(model.latent_dim):
            rows.append(
                {
                    "checkpoint": name,
                    "dim": j,
                    "kl": diagnostics["per_dim_kl"][j],
                    "mu_variance": diagnostics["mu_variance"][j],
                }
            )

    table = run.path("latent_diagnostics.csv")
    write_to_csv(table, pd.DataFrame(rows))
    run.write_manifest("vae diagnose", [table])
    return result


def vae_export_latents(ckpt, data, split="test", limit=None, reconstructions=False, config=None, seed=None, out=None):
    """Export latent distributions, and optionally reconstructions, of a split"""
    run = RunConfig.load(config, seed, out)
    run.record("export", {"checkpoint": ckpt, "data": data, "split": split, "limit": limit})
    model = VaeModel.load(ckpt)
    inputs = _load_split(data, split)
    if limit is not None:
        inputs = inputs[: int(limit)]

    stem = os.path.basename(ckpt)[: -len(".ckpt")] if ckpt.endswith(".ckpt") else os.path.basename(ckpt)
    latents = run.path(stem + "_latents.csv")
    recon = run.path(stem + "_reconstructions.csv") if reconstructions else None
    count = export_latents(model, inputs, latents, recon)

    run.write_manifest("vae export-latents", [p for p in (latents, recon) if p])
    logger.success("%d latent rows written to %s", count, latents)
    return {"rows": count, "latents": latents, "reconstructions": recon}


