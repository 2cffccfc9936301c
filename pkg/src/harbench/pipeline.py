"""Fitted scaler + PCA basis + network, saved together as one JSON document.

File layout (keys in this order):

    format        "harbench-pipeline"
    version       1
    field_order   list of the remaining top-level keys, in order
    layout        feature names, length D
    classes       number of classes K
    label_map     source activity id (string) -> class index
    scaler        {"mean": [D], "std": [D]}
    pca           {"basis": D x d rows, "eigenvalues": [d],
                   "retained_variance": float, "total_variance": float}
    mlp           {"alpha": float, "seed": int,
                   "weights": [fan_in x fan_out ...], "biases": [[fan_out] ...]}

Floats are written with shortest round-trip repr, so load(save(m)) is exact.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from harbench.model import MlpParams, forward
from harbench.preprocess import PcaModel, Scaler, apply_pca, apply_scaler

FORMAT = "harbench-pipeline"
VERSION = 1
FIELD_ORDER = ("layout", "classes", "label_map", "scaler", "pca", "mlp")


@dataclass
class PipelineModel:
    scaler: Scaler
    pca: PcaModel
    mlp: MlpParams
    layout: tuple[str, ...] = ()
    label_map: Mapping[int, int] = field(default_factory=dict)

    def transform(self, features: np.ndarray) -> np.ndarray:
        return apply_pca(self.pca, apply_scaler(self.scaler, features))

    def predict_proba(self, features: np.ndarray) -> np.ndarray:
        return forward(self.mlp, self.transform(features))

    def predict(self, features: np.ndarray) -> np.ndarray:
        return np.argmax(self.predict_proba(features), axis=1)

    def to_dict(self) -> dict[str, Any]:
        return {
            "format": FORMAT,
            "version": VERSION,
            "field_order": list(FIELD_ORDER),
            "layout": list(self.layout),
            "classes": self.mlp.n_classes,
            "label_map": {str(k): int(v) for k, v in self.label_map.items()},
            "scaler": {"mean": self.scaler.mean.tolist(), "std": self.scaler.std.tolist()},
            "pca": {
                "basis": self.pca.basis.tolist(),
                "eigenvalues": self.pca.eigenvalues.tolist(),
                "retained_variance": self.pca.retained_variance,
                "total_variance": self.pca.total_variance,
            },
            "mlp": {
                "alpha": self.mlp.alpha,
                "seed": self.mlp.seed,
                "weights": [w.tolist() for w in self.mlp.weights],
                "biases": [b.tolist() for b in self.mlp.biases],
            },
        }

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any]) -> "PipelineModel":
        if raw.get("format") != FORMAT:
            raise ValueError(f"not a {FORMAT} file")
        if raw.get("version") != VERSION:
            raise ValueError(f"unsupported pipeline version {raw.get('version')!r}")
        pca = raw["pca"]
        mlp = raw["mlp"]
        return cls(
            scaler=Scaler(
                mean=np.asarray(raw["scaler"]["mean"], dtype=np.float64),
                std=np.asarray(raw["scaler"]["std"], dtype=np.float64),
            ),
            pca=PcaModel(
                basis=np.asarray(pca["basis"], dtype=np.float64).reshape(len(pca["basis"]), -1),
                eigenvalues=np.asarray(pca["eigenvalues"], dtype=np.float64),
                retained_variance=float(pca["retained_variance"]),
                total_variance=float(pca["total_variance"]),
            ),
            mlp=MlpParams(
                weights=[np.asarray(w, dtype=np.float64) for w in mlp["weights"]],
                biases=[np.asarray(b, dtype=np.float64) for b in mlp["biases"]],
                alpha=float(mlp["alpha"]),
                seed=int(mlp["seed"]),
            ),
            layout=tuple(raw.get("layout", ())),
            label_map={int(k): int(v) for k, v in raw.get("label_map", {}).items()},
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "PipelineModel":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
