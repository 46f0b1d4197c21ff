"""Versioned JSON serialization for fitted models (audit and golden tests)."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .garch import GarchFit, GjrGarchParams
from .regress import GbtEnsemble, GbtParams, GossParams, LinearModel, RegressionTree

FORMAT_VERSION = 1


def model_to_dict(model) -> dict:
    if isinstance(model, LinearModel):
        body = {
            "kind": "linear",
            "coefficients": model.coefficients.tolist(),
            "recipe": model.recipe,
            "n_features": model.n_features,
            "ridge_fallback": model.ridge_fallback,
            "ridge_penalty": model.ridge_penalty,
            "condition_number": model.condition_number,
        }
    elif isinstance(model, GbtEnsemble):
        p = model.params
        body = {
            "kind": "gbt",
            "base_score": model.base_score,
            "n_features": model.n_features,
            "train_losses": list(model.train_losses),
            "params": {
                "rounds": p.rounds,
                "learning_rate": p.learning_rate,
                "max_depth": p.max_depth,
                "reg_lambda": p.reg_lambda,
                "min_child_weight": p.min_child_weight,
                "goss": None
                if p.goss is None
                else {"top_fraction": p.goss.top_fraction, "rest_fraction": p.goss.rest_fraction},
                "seed": p.seed,
            },
            "trees": [
                {
                    "feature": t.feature.tolist(),
                    "threshold": t.threshold.tolist(),
                    "left": t.left.tolist(),
                    "right": t.right.tolist(),
                    "value": t.value.tolist(),
                }
                for t in model.trees
            ],
        }
    elif isinstance(model, GarchFit):
        body = {
            "kind": "gjr_garch",
            "params": {
                "omega": model.params.omega,
                "alpha": model.params.alpha,
                "gamma": model.params.gamma,
                "beta": model.params.beta,
            },
            "loglik": model.loglik,
            "sigma2_path": model.sigma2_path.tolist(),
            "converged": model.converged,
            "iterations": model.iterations,
            "mean": model.mean,
            "last_eps": model.last_eps,
            "n_obs": model.n_obs,
        }
    else:
        raise TypeError(f"cannot serialize {type(model).__name__}")
    return {"format_version": FORMAT_VERSION, **body}


def model_from_dict(doc: dict):
    if doc.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {doc.get('format_version')}")
    kind = doc["kind"]
    if kind == "linear":
        return LinearModel(
            coefficients=np.array(doc["coefficients"], dtype=float),
            recipe=doc["recipe"],
            n_features=doc["n_features"],
            ridge_fallback=doc["ridge_fallback"],
            ridge_penalty=doc["ridge_penalty"],
            condition_number=doc["condition_number"],
        )
    if kind == "gbt":
        p = doc["params"]
        goss = p["goss"]
        params = GbtParams(
            rounds=p["rounds"],
            learning_rate=p["learning_rate"],
            max_depth=p["max_depth"],
            reg_lambda=p["reg_lambda"],
            min_child_weight=p["min_child_weight"],
            goss=None if goss is None else GossParams(goss["top_fraction"], goss["rest_fraction"]),
            seed=p["seed"],
        )
        trees = tuple(
            RegressionTree(
                feature=np.array(t["feature"], dtype=np.int64),
                threshold=np.array(t["threshold"], dtype=float),
                left=np.array(t["left"], dtype=np.int64),
                right=np.array(t["right"], dtype=np.int64),
                value=np.array(t["value"], dtype=float),
            )
            for t in doc["trees"]
        )
        return GbtEnsemble(
            trees=trees,
            base_score=doc["base_score"],
            params=params,
            train_losses=tuple(doc["train_losses"]),
            n_features=doc["n_features"],
        )
    if kind == "gjr_garch":
        p = doc["params"]
        return GarchFit(
            params=GjrGarchParams(p["omega"], p["alpha"], p["gamma"], p["beta"]),
            loglik=doc["loglik"],
            sigma2_path=np.array(doc["sigma2_path"], dtype=float),
            converged=doc["converged"],
            iterations=doc["iterations"],
            mean=doc["mean"],
            last_eps=doc["last_eps"],
            n_obs=doc["n_obs"],
        )
    raise ValueError(f"unknown model kind {kind!r}")


def save_model(model, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), sort_keys=True))


def load_model(path: str | Path):
    return model_from_dict(json.loads(Path(path).read_text()))
