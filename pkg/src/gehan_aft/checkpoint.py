"""Self-describing JSON checkpoints.

A checkpoint bundles everything prediction and evaluation need: network
config, feature schema (with its fingerprint), parameters, batch-norm
running statistics, the training standardization, and optionally the
residual baseline hazard and the training censoring distribution. Floats
are written with round-trip precision, and keys in a fixed order, so equal
models serialize to identical bytes.
"""

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .dataset import FeatureSchema, StandardizationParams
from .network import NetworkConfig, NetworkModel
from .nonparam import StepFunction
from .survpredict import BaselineHazard

FORMAT = "gehan-aft-checkpoint"
VERSION = 1


def _pack(arrays):
    return {k: {"shape": list(v.shape), "data": [float(x) for x in v.ravel()]} for k, v in arrays.items()}


def _unpack(packed):
    return {k: np.asarray(v["data"], dtype=np.float64).reshape(v["shape"]) for k, v in packed.items()}


@dataclass
class Checkpoint:
    model: NetworkModel
    standardization: StandardizationParams
    baseline: Optional[BaselineHazard] = None
    censoring: Optional[StepFunction] = None
    train_config: Optional[dict] = None

    def to_dict(self):
        schema = self.model.schema
        state = self.model.state_dict()
        return {
            "format": FORMAT,
            "version": VERSION,
            "network_config": self.model.config.to_dict(),
            "schema": schema.to_dict(),
            "schema_fingerprint": schema.fingerprint(),
            "standardization": self.standardization.to_dict(),
            "params": _pack(state["params"]),
            "buffers": _pack(state["buffers"]),
            "baseline": None if self.baseline is None else self.baseline.cumhaz.to_dict(),
            "censoring": None if self.censoring is None else self.censoring.to_dict(),
            "train_config": self.train_config,
        }

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")

    @classmethod
    def from_dict(cls, d):
        if d.get("format") != FORMAT:
            raise ValueError("not a gehan-aft checkpoint")
        if d.get("version") != VERSION:
            raise ValueError(f"unsupported checkpoint version {d.get('version')}")
        schema = FeatureSchema.from_dict(d["schema"])
        if schema.fingerprint() != d["schema_fingerprint"]:
            raise ValueError("checkpoint schema fingerprint mismatch")
        model = NetworkModel(NetworkConfig.from_dict(d["network_config"]), schema)
        model.load_state_dict({"params": _unpack(d["params"]), "buffers": _unpack(d["buffers"])})
        model.eval()
        std = StandardizationParams.from_dict(d["standardization"])
        model.standardization = std
        baseline = None
        if d.get("baseline") is not None:
            baseline = BaselineHazard(StepFunction.from_dict(d["baseline"]), std)
        censoring = None
        if d.get("censoring") is not None:
            censoring = StepFunction.from_dict(d["censoring"])
        return cls(model, std, baseline, censoring, d.get("train_config"))

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))
