# -*- coding: utf-8 -*-
"""Feature extractor and actor-critic networks of the agent"""

import math
import logging

import numpy as np

from asvlab.core import AsvLabError, AsvLabValidationError
from asvlab.neural import (
    Linear,
    ParamStore,
    Tensor,
    concat,
    exp,
    no_grad,
    read_checkpoint,
    square,
    tanh,
)
from asvlab.vae import VaeModel
from asvlab.agent.env import NAV_DIM

logger = logging.getLogger("asvlab.agent.policy")

FEATURE_MODES = (
    "shallow_locked",
    "shallow_unlocked",
    "deep_locked",
    "deep_unlocked",
    "baseline",
)

LOG_2PI = math.log(2.0 * math.pi)


class FeatureExtractor:
    """Encoder turning scans into latent means

    Keyword arguments:
        - vae -- The model whose encoder is used
        - locked -- Keep the encoder parameters out of the optimization

    """

    def __init__(self, vae: VaeModel, locked: bool, mode=None):
        self.vae = vae
        self.locked = locked
        self.mode = mode
        # the decoder never takes part in the agent
        vae.store.freeze("decoder.")
        if locked:
            vae.store.freeze("encoder.")

    @classmethod
    def from_mode(cls, mode, ckpt=None, seed=0, dtype=np.float32):
        if mode not in FEATURE_MODES:
            raise AsvLabValidationError("agent_unknown_mode", mode=mode, modes=", ".join(FEATURE_MODES))
        if mode == "baseline":
            if ckpt:
                raise AsvLabValidationError("agent_baseline_checkpoint")
            return cls(VaeModel("shallow", seed=seed, dtype=dtype), locked=False, mode=mode)

        if not ckpt:
            raise AsvLabError("agent_missing_checkpoint", mode=mode)
        kind, lock = mode.split("_")
        vae = VaeModel.load(ckpt, dtype=dtype)
        if vae.kind != kind:
            raise AsvLabValidationError("agent_checkpoint_kind", path=ckpt, found=vae.kind, expected=kind)
        return cls(vae, locked=lock == "locked", mode=mode)

    @property
    def store(self):
        return self.vae.store

    @property
    def latent_dim(self):
        return self.vae.latent_dim

    def __call__(self, scans):
        return self.vae.encode(scans).mu

    def digest(self):
        return self.store.digest("encoder.")


def make_observation(nav, scans, extractor: FeatureExtractor):
    """Stack normalized navigation features and latent scan features

    The navigation half comes from `VesselEnv`, which owns the path tracker
    and the normalization bounds: it builds it from the state and the path
    with `nav_features` and `normalize_nav`. The extractor mode is carried
    by the extractor itself.

    Keyword arguments:
        - nav -- (batch, 6) normalized navigation features
        - scans -- (batch, n_rays) perception vectors

    Returns:
        A (batch, 6 + latent_dim) tensor, with a graph through the
        extractor when it is unlocked

    """
    nav = Tensor(np.asarray(nav, dtype=extractor.store.dtype).reshape(-1, NAV_DIM))
    latent = extractor(np.asarray(scans, dtype=extractor.store.dtype).reshape(len(nav.data), -1))
    return concat([nav, latent], axis=1)


class ActorCritic:
    """Separate policy and value MLPs with a state independent log std"""

    def __init__(self, obs_dim, act_dim=2, hidden=64, seed=0, dtype=np.float32, log_std_init=0.0):
        self.obs_dim = obs_dim
        self.act_dim = act_dim
        self.hidden = hidden
        self.store = ParamStore(dtype)
        rng = np.random.default_rng([int(seed), 0xAC])

        self.pi = [
            Linear(self.store, "pi.fc0", obs_dim, hidden, rng),
            Linear(self.store, "pi.fc1", hidden, hidden, rng),
            Linear(self.store, "pi.out", hidden, act_dim, rng),
        ]
        self.vf = [
            Linear(self.store, "vf.fc0", obs_dim, hidden, rng),
            Linear(self.store, "vf.fc1", hidden, hidden, rng),
            Linear(self.store, "vf.out", hidden, 1, rng),
        ]
        # small initial actions
        self.store["pi.out.weight"].data *= 0.01
        self.log_std = self.store.add("pi.log_std", np.full(act_dim, log_std_init))

    @staticmethod
    def _mlp(layers, x):
        for layer in layers[:-1]:
            x = tanh(layer(x))
        return layers[-1](x)

    def actor(self, obs):
        return self._mlp(self.pi, obs)

    def critic(self, obs):
        out = self._mlp(self.vf, obs)
        return out.reshape(out.shape[0])


def gaussian_log_prob(actions, mean, log_std):
    """Log density of a diagonal Gaussian, summed over action dimensions"""
    z = (actions - mean) / exp(log_std)
    return ((square(z) + log_std * 2.0 + LOG_2PI) * -0.5).sum(axis=1)


def gaussian_entropy(log_std):
    return (log_std + 0.5 * (LOG_2PI + 1.0)).sum()


class Policy:
    """Feature extractor plus actor-critic"""

    def __init__(self, extractor: FeatureExtractor, ac: ActorCritic):
        self.extractor = extractor
        self.ac = ac

    @classmethod
    def create(cls, mode, ckpt=None, seed=0, hidden=64, log_std_init=0.0, dtype=np.float32):
        extractor = FeatureExtractor.from_mode(mode, ckpt, seed, dtype)
        ac = ActorCritic(
            NAV_DIM + extractor.latent_dim,
            hidden=hidden,
            seed=seed,
            dtype=dtype,
            log_std_init=log_std_init,
        )
        return cls(extractor, ac)

    @property
    def stores(self):
        """Stores holding trainable parameters"""
        stores = [self.ac.store]
        if not self.extractor.locked:
            stores.append(self.extractor.store)
        return stores

    def observe(self, nav, scans):
        return make_observation(nav, scans, self.extractor)

    def act(self, obs, rng=None, deterministic=False):
        """Return (action, log_prob, value) for one dict observation"""
        with no_grad():
            x = self.observe(obs["nav"], obs["scan"])
            mean = self.ac.actor(x).data[0].astype(np.float64)
            value = float(self.ac.critic(x).data[0])
        std = np.exp(self.ac.log_std.data.astype(np.float64))
        if deterministic:
            action = mean
        else:
            action = mean + std * rng.standard_normal(mean.shape)
        log_prob = float(-0.5 * np.sum(((action - mean) / std) ** 2 + 2.0 * np.log(std) + LOG_2PI))
        return action, log_prob, value

    def value(self, obs):
        with no_grad():
            return float(self.ac.critic(self.observe(obs["nav"], obs["scan"])).data[0])

    # Checkpoints -----------------------------------------------------

    def save(self, file_path, meta=None):
        """Write the actor-critic and encoder parameters in one checkpoint"""
        merged = ParamStore(np.float64)
        for name, tensor in self.ac.store.params.items():
            merged.add("policy." + name, tensor.data)
        for name in self.extractor.store.names("encoder."):
            merged.add("extractor." + name, self.extractor.store[name].data)
        merged.save(
            file_path,
            meta=dict(
                meta or {},
                mode=self.extractor.mode,
                hidden=self.ac.hidden,
                extractor=self.extractor.vae.describe(),
                encoder_sha256=self.extractor.digest(),
            ),
        )

    @classmethod
    def load(cls, file_path, dtype=np.float32):
        state, meta = read_checkpoint(file_path)
        try:
            described = meta["extractor"]
            vae = VaeModel(
                described["kind"],
                described["latent_dim"],
                described.get("beta", 1.0),
                described.get("decoder_padding", "circular"),
                described.get("seed", 0),
                dtype,
            )
            mode = meta["mode"]
        except KeyError as e:
            raise AsvLabError("checkpoint_missing_meta", path=file_path, key=str(e))

        prefix = "extractor."
        vae.store.load_state(
            {k[len(prefix) :]: v for k, v in state.items() if k.startswith(prefix)},
            prefix="encoder.",
        )
        extractor = FeatureExtractor(vae, locked=True, mode=mode)
        ac = ActorCritic(NAV_DIM + vae.latent_dim, hidden=meta.get("hidden", 64), dtype=dtype)
        prefix = "policy."
        ac.store.load_state({k[len(prefix) :]: v for k, v in state.items() if k.startswith(prefix)})
        return cls(extractor, ac)
