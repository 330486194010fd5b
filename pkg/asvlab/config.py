# -*- coding: utf-8 -*-
"""Run configuration shared by every action

A run is described by an optional parameter document (JSON, YAML or
TOML), a master seed and an output directory. The document holds one
mapping per configuration section, e.g.::

    seed: 7
    dataset:
      n_pilot: 2000
    vae:
      epochs: 5

Each section is merged over the defaults of its dataclass. The resolved
values and the digests of the written artifacts are saved next to the
outputs so that a run can be replayed from its manifest.
"""

import os
import logging
from dataclasses import asdict, fields, is_dataclass

from asvlab.core import AsvLabValidationError
from asvlab.utils.filesystem import (
    mkdir,
    read_document,
    sha256_document,
    sha256_file,
    write_to_json,
)

logger = logging.getLogger("asvlab.config")

RESOLVED_CONFIG = "resolved_config.json"
MANIFEST = "manifest.json"

MAX_SEED = 2**64 - 1


def _plain(value):
    if isinstance(value, tuple):
        return [_plain(v) for v in value]
    return value


def _frozen(value):
    if isinstance(value, list):
        return tuple(_frozen(v) for v in value)
    return value


class RunConfig:
    """Parameters, seed and output directory of one action

    Keyword arguments:
        - document -- The parameter mapping
        - seed -- The master seed
        - out -- The output directory
        - source -- Path of the parameter document, if any

    """

    def __init__(self, document=None, seed=0, out=".", source=None):
        self.document = document or {}
        self.seed = seed
        self.out = out
        self.source = source
        self.resolved = {}

    @classmethod
    def load(cls, config=None, seed=None, out=None, default_out="."):
        """Build the run configuration of an action

        Command line values win over the document ones.
        """
        document = read_document(config) if config else {}
        if not isinstance(document, dict):
            raise AsvLabValidationError("config_not_mapping", path=config)

        if seed is None:
            seed = document.get("seed", 0)
        try:
            seed = int(seed)
        except (TypeError, ValueError):
            raise AsvLabValidationError("invalid_config_value", key="seed", value=seed)
        if not 0 <= seed <= MAX_SEED:
            raise AsvLabValidationError("invalid_config_value", key="seed", value=seed)

        out = out or document.get("out") or default_out
        mkdir(out, parents=True, force=True)

        logger.debug("run configuration loaded from %s, seed=%d, out=%s", config, seed, out)
        return cls(document, seed, out, config)

    def section(self, name, cls, **overrides):
        """Instantiate the dataclass cls from a section of the document

        Keyword arguments:
            - name -- The section name
            - cls -- The configuration dataclass
            - **overrides -- Values taking precedence, None values are ignored

        """
        values = self.document.get(name) or {}
        if not isinstance(values, dict):
            raise AsvLabValidationError("config_not_mapping", path="%s:%s" % (self.source, name))

        known = {f.name for f in fields(cls)}
        for key in values:
            if key not in known:
                raise AsvLabValidationError("config_unknown_key", section=name, key=key)

        values = {k: _frozen(v) for k, v in values.items()}
        values.update({k: _frozen(v) for k, v in overrides.items() if v is not None})
        instance = cls(**values)
        self.resolved[name] = {k: _plain(v) for k, v in asdict(instance).items()}
        return instance

    def record(self, name, value):
        """Add a non-dataclass value to the resolved configuration"""
        self.resolved[name] = asdict(value) if is_dataclass(value) else value

    def path(self, *parts):
        return os.path.join(self.out, *parts)

    def resolved_document(self):
        return dict(self.resolved, seed=self.seed)

    def write_resolved(self):
        file_path = self.path(RESOLVED_CONFIG)
        write_to_json(file_path, self.resolved_document(), sort_keys=True, indent=2)
        return file_path

    def write_manifest(self, command, artifacts):
        """Write the resolved configuration and the run manifest

        Keyword arguments:
            - command -- The action name, e.g. "vae train"
            - artifacts -- Paths of the files written by the action

        """
        self.write_resolved()
        manifest = {
            "command": command,
            "seed": self.seed,
            "config_sha256": sha256_document(self.resolved_document()),
            "artifacts": {
                os.path.relpath(p, self.out): sha256_file(p) for p in sorted(artifacts)
            },
        }
        file_path = self.path(MANIFEST)
        write_to_json(file_path, manifest, sort_keys=True, indent=2)
        return file_path
