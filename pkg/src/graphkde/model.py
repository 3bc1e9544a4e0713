"""Bundled encoder + distance family + density estimator with checkpointing."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DataFormatError
from .gnn import GnnParams, init_params
from .kde import DEFAULT_KDE_BANDWIDTHS, KdeParams, init_kde_params
from .mmd import KernelFamily
from .tensor import Node, parameter

CHECKPOINT_VERSION = 1


@dataclass
class DensityModel:
    """Everything needed to score graphs: weights, kernel family, mixture."""

    gnn: GnnParams
    kde: KdeParams
    family: KernelFamily

    def trainable_parameters(self) -> list[Node]:
        """Tape leaves in a fixed order: layer weights, then mixture logits."""
        return [*self.gnn.weights, self.kde.logits]

    def state_dict(self) -> dict:
        return {
            "format_version": CHECKPOINT_VERSION,
            "dimension_chain": list(self.gnn.dimension_chain),
            "weights": [w.value.tolist() for w in self.gnn.weights],
            "batch_norm": self.gnn.batch_norm,
            "dropout": self.gnn.dropout,
            "final_activation": self.gnn.final_activation,
            "running_mean": [m.tolist() for m in self.gnn.running_mean],
            "running_var": [v.tolist() for v in self.gnn.running_var],
            "gammas": list(self.family.gammas),
            "bandwidths": list(self.kde.bandwidths),
            "mixture_logits": self.kde.logits.value[0].tolist(),
        }

    def load_state_dict(self, state: dict) -> None:
        """Copy values from ``state`` into the existing tape leaves."""
        for w, saved in zip(self.gnn.weights, state["weights"]):
            w.value[...] = np.asarray(saved)
        self.gnn.running_mean = [np.asarray(m) for m in state["running_mean"]]
        self.gnn.running_var = [np.asarray(v) for v in state["running_var"]]
        self.kde.logits.value[...] = np.asarray(state["mixture_logits"])[None, :]

    def save(self, path) -> None:
        with open(path, "w") as handle:
            json.dump(self.state_dict(), handle, sort_keys=True, indent=1)
            handle.write("\n")

    @classmethod
    def from_state(cls, state: dict) -> "DensityModel":
        if state.get("format_version") != CHECKPOINT_VERSION:
            raise DataFormatError(
                f"unsupported checkpoint version {state.get('format_version')!r}"
            )
        weights = [parameter(np.asarray(w)) for w in state["weights"]]
        gnn = GnnParams(
            weights,
            batch_norm=bool(state["batch_norm"]),
            dropout=float(state["dropout"]),
            final_activation=bool(state["final_activation"]),
            running_mean=[np.asarray(m) for m in state["running_mean"]],
            running_var=[np.asarray(v) for v in state["running_var"]],
        )
        kde = KdeParams(
            tuple(state["bandwidths"]),
            parameter(np.asarray(state["mixture_logits"])[None, :]),
        )
        return cls(gnn, kde, KernelFamily(tuple(state["gammas"])))

    @classmethod
    def load(cls, path) -> "DensityModel":
        try:
            with open(path) as handle:
                state = json.load(handle)
        except json.JSONDecodeError as err:
            raise DataFormatError(f"unreadable checkpoint {path}: {err}") from None
        if not isinstance(state, dict):
            raise DataFormatError(f"checkpoint {path} is not a JSON object")
        try:
            return cls.from_state(state)
        except KeyError as err:
            raise DataFormatError(f"checkpoint {path} missing field {err}") from None


def default_model(
    feature_dim: int,
    hidden_dim: int = 64,
    output_dim: int = 32,
    seed: int = 0,
    bandwidths=DEFAULT_KDE_BANDWIDTHS,
    batch_norm: bool = False,
    dropout: float = 0.0,
    final_activation: bool = False,
) -> DensityModel:
    """Fresh model with Glorot weights and a uniform mixture."""
    gnn = init_params(
        [feature_dim, hidden_dim, output_dim],
        seed=seed,
        batch_norm=batch_norm,
        dropout=dropout,
        final_activation=final_activation,
    )
    return DensityModel(
        gnn, init_kde_params(bandwidths), KernelFamily.from_bandwidths(bandwidths)
    )
