"""Serialized container for every trained parameter of one experiment run.

Bundles round-trip byte-identically: saving the same trained state twice
produces identical files, and loading then saving reproduces the original
bytes. The KDEs serialize as their raw samples and bandwidths, so a bundle
is self-contained.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from domm.core import DataError, canonical_json
from domm.omsvm import OmsvmModel
from domm.ranksvm import RankModel
from domm.transitions import TransitionModel

__all__ = ["FORMAT_VERSION", "ModelBundle", "load_model_bundle", "save_model_bundle"]

FORMAT_VERSION = 1


@dataclass(frozen=True)
class ModelBundle:
    mean: np.ndarray
    std: np.ndarray
    omsvm: OmsvmModel
    ranker: RankModel | None
    transitions: TransitionModel | None
    class_counts: np.ndarray
    config_hash: str
    seed: int
    format_version: int = FORMAT_VERSION

    def to_dict(self) -> dict:
        return {
            "format_version": self.format_version,
            "standardization": {"mean": self.mean.tolist(), "std": self.std.tolist()},
            "omsvm": self.omsvm.to_dict(),
            "ranksvm": self.ranker.to_dict() if self.ranker is not None else None,
            "transitions": self.transitions.to_dict() if self.transitions is not None else None,
            "class_counts": self.class_counts.tolist(),
            "provenance": {"config_hash": self.config_hash, "seed": self.seed},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelBundle":
        version = int(d.get("format_version", -1))
        if version != FORMAT_VERSION:
            raise DataError(
                f"unsupported bundle format_version {version}, expected {FORMAT_VERSION}"
            )
        return cls(
            mean=np.asarray(d["standardization"]["mean"], dtype=float),
            std=np.asarray(d["standardization"]["std"], dtype=float),
            omsvm=OmsvmModel.from_dict(d["omsvm"]),
            ranker=RankModel.from_dict(d["ranksvm"]) if d["ranksvm"] is not None else None,
            transitions=(
                TransitionModel.from_dict(d["transitions"])
                if d["transitions"] is not None
                else None
            ),
            class_counts=np.asarray(d["class_counts"], dtype=int),
            config_hash=str(d["provenance"]["config_hash"]),
            seed=int(d["provenance"]["seed"]),
            format_version=version,
        )


def save_model_bundle(bundle: ModelBundle, path) -> None:
    Path(path).write_text(canonical_json(bundle.to_dict()) + "\n", encoding="ascii")


def load_model_bundle(path) -> ModelBundle:
    try:
        raw = json.loads(Path(path).read_text(encoding="ascii"))
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot load model bundle {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise DataError(f"{path}: bundle must be a JSON object")
    return ModelBundle.from_dict(raw)
