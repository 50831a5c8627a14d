"""The lightweight grader: a single linear layer from pair features to two logits."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from relgrade.corpus import Corpus, PairRecord
from relgrade.errors import FormatError, UsageError
from relgrade.vectormath import pair_features_batch

CHECKPOINT_FORMAT = "relgrade-head"
CHECKPOINT_VERSION = 1


@dataclass
class ClassifierHead:
    """Logits are ``features @ weights.T + bias``; class 1 means relevant."""

    weights: np.ndarray  # (2, F)
    bias: np.ndarray  # (2,)

    def __post_init__(self) -> None:
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weights.ndim != 2 or self.weights.shape[0] != 2 or self.bias.shape != (2,):
            raise UsageError(
                f"head needs weights (2, F) and bias (2,), got {self.weights.shape} and {self.bias.shape}"
            )
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.bias))):
            raise UsageError("head parameters must be finite")

    @classmethod
    def initialize(cls, n_features: int, seed: int) -> "ClassifierHead":
        """Fan-in uniform init in ``(-1/sqrt(F), 1/sqrt(F))`` with zero bias."""
        rng = np.random.default_rng(seed)
        bound = 1.0 / np.sqrt(n_features)
        return cls(rng.uniform(-bound, bound, size=(2, n_features)), np.zeros(2))

    @classmethod
    def zeros(cls, n_features: int) -> "ClassifierHead":
        return cls(np.zeros((2, n_features)), np.zeros(2))

    @property
    def n_features(self) -> int:
        return self.weights.shape[1]

    @property
    def n_parameters(self) -> int:
        return self.weights.size + self.bias.size

    def copy(self) -> "ClassifierHead":
        return ClassifierHead(self.weights.copy(), self.bias.copy())

    def logits(self, features: np.ndarray) -> np.ndarray:
        features = np.asarray(features, dtype=np.float64)
        if features.shape[-1] != self.n_features:
            raise UsageError(f"head expects {self.n_features} features, got {features.shape[-1]}")
        return features @ self.weights.T + self.bias

    @staticmethod
    def decide(logits: np.ndarray) -> np.ndarray:
        # argmax of softmax(logits) is argmax of logits; equal logits -> not relevant
        logits = np.asarray(logits)
        return logits[..., 1] > logits[..., 0]

    def predict(self, features: np.ndarray) -> np.ndarray:
        return self.decide(self.logits(features))

    def to_json(self, config: dict | None = None, seed: int | None = None) -> dict:
        return {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "n_features": self.n_features,
            "weights": self.weights.ravel().tolist(),
            "bias": self.bias.tolist(),
            "config": config or {},
            "seed": seed,
        }

    def save(self, path, config: dict | None = None, seed: int | None = None) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(config, seed), fh, indent=None, separators=(",", ":"))
            fh.write("\n")

    @classmethod
    def from_json(cls, obj: dict) -> "ClassifierHead":
        if obj.get("format") != CHECKPOINT_FORMAT:
            raise FormatError("not a classifier head checkpoint")
        if obj.get("version") != CHECKPOINT_VERSION:
            raise FormatError(f"unsupported checkpoint version {obj.get('version')}")
        try:
            n = int(obj["n_features"])
            weights = np.array(obj["weights"], dtype=np.float64).reshape(2, n)
            bias = np.array(obj["bias"], dtype=np.float64)
            return cls(weights, bias)
        except (KeyError, ValueError, TypeError) as exc:
            raise FormatError(f"corrupt checkpoint: {exc}") from None

    @classmethod
    def load(cls, path) -> "ClassifierHead":
        try:
            obj = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise FormatError(f"checkpoint is not valid JSON: {exc}", path) from None
        return cls.from_json(obj)


def features_for_pairs(pairs: Sequence[PairRecord], corpus: Corpus) -> np.ndarray:
    """Stack ``pair_features(query, doc)`` for every pair into an ``(n, 4*dim)`` matrix."""
    try:
        q = np.stack([corpus.query_vector(p.query_id) for p in pairs])
        d = np.stack([corpus.doc_vector(p.doc_id) for p in pairs])
    except KeyError as exc:
        raise UsageError(f"no embedding for {exc.args[0]!r}") from None
    return pair_features_batch(q, d)
