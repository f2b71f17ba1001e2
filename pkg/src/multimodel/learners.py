"""Trainable base-model roster: six learner families behind one predict surface.

Every learner consumes min-max-scaled features and emits a real prediction
rho in [0, 1]. Training is fully seeded: the same spec and data always
reproduce the same parameters.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .dataset import FeatureScaler, PatientRecord
from .errors import (
    DegenerateFitWarning,
    DimensionMismatchError,
    DuplicateModelIdError,
    EmptyDatasetError,
    InvalidHyperparameterError,
    InvalidParamsError,
)

FAMILIES = ("bagging", "knn", "least-squares", "logistic", "random-subspace", "tree")

RIDGE_LAMBDA = 1e-6

_VARIANT_LETTERS = "ABCDEFGHIJKLMNOPQRSTUVWXYZ"

_DEFAULT_HYPERPARAMETERS: dict[str, dict] = {
    "logistic": {"learning_rate": 0.1, "epochs": 200},
    "tree": {"max_depth": 4, "min_leaf": 5},
    "bagging": {"bags": 10, "max_depth": 4, "min_leaf": 5, "bootstrap": True},
    "random-subspace": {"members": 10, "fraction": 0.5, "max_depth": 4, "min_leaf": 5},
    "least-squares": {},
    "knn": {"k": 5},
}


def validate_hyperparameters(family: str, hp: Mapping) -> None:
    if family not in FAMILIES:
        raise InvalidHyperparameterError(f"unknown model family {family!r}")
    allowed = set(_DEFAULT_HYPERPARAMETERS[family])
    unknown = set(hp) - allowed
    if unknown:
        raise InvalidHyperparameterError(
            f"{family}: unknown hyperparameter(s) {', '.join(sorted(unknown))}"
        )

    def require(name, ok, explain):
        if name in hp and not ok(hp[name]):
            raise InvalidHyperparameterError(f"{family}: {name} must be {explain}, got {hp[name]!r}")

    require("epochs", lambda v: int(v) >= 1, ">= 1")
    require("learning_rate", lambda v: float(v) > 0, "> 0")
    require("max_depth", lambda v: int(v) >= 1, ">= 1")
    require("min_leaf", lambda v: int(v) >= 1, ">= 1")
    require("bags", lambda v: int(v) >= 1, ">= 1")
    require("members", lambda v: int(v) >= 1, ">= 1")
    require("fraction", lambda v: 0 < float(v) <= 1, "in (0, 1]")
    require("k", lambda v: int(v) >= 1, ">= 1")
    require("bootstrap", lambda v: isinstance(v, bool), "a boolean")


@dataclass(frozen=True)
class ModelSpec:
    """One roster entry: unique id, family, hyperparameters, training seed."""

    model_id: str
    family: str
    hyperparameters: Mapping
    seed: int

    def __post_init__(self):
        validate_hyperparameters(self.family, self.hyperparameters)

    def hp(self, name):
        if name in self.hyperparameters:
            return self.hyperparameters[name]
        return _DEFAULT_HYPERPARAMETERS[self.family][name]


def default_roster_config() -> dict:
    """Roster of 25 models: 9 bagging, 10 random-subspace, 6 singles."""
    return {
        "families": [
            {
                "family": "bagging",
                "variants": 9,
                "seed": 100,
                "hyperparameters": {"max_depth": 4, "min_leaf": 5},
                "sweep": {"bags": [5, 7, 9, 11, 13, 15, 17, 19, 21]},
            },
            {
                "family": "random-subspace",
                "variants": 10,
                "seed": 200,
                "hyperparameters": {"members": 10, "max_depth": 4, "min_leaf": 5},
                "sweep": {"fraction": [0.3, 0.35, 0.4, 0.45, 0.5, 0.55, 0.6, 0.65, 0.7, 0.75]},
            },
            {
                "family": "logistic",
                "variants": 1,
                "seed": 300,
                "hyperparameters": {"learning_rate": 0.1, "epochs": 200},
            },
            {
                "family": "tree",
                "variants": 2,
                "seed": 400,
                "hyperparameters": {"min_leaf": 5},
                "sweep": {"max_depth": [3, 5]},
            },
            {"family": "least-squares", "variants": 1, "seed": 500},
            {
                "family": "knn",
                "variants": 2,
                "seed": 600,
                "hyperparameters": {},
                "sweep": {"k": [5, 15]},
            },
        ]
    }


def build_roster(roster_config: Mapping) -> list[ModelSpec]:
    """Expand a roster config into validated ModelSpecs, sorted by id.

    Families with ``variants`` > 1 get letter-suffixed ids (``bagging-A`` ...)
    and per-variant seeds ``seed + index``; a ``sweep`` maps hyperparameter
    names to per-variant value lists.
    """
    if "families" not in roster_config:
        raise InvalidParamsError("roster config must contain a 'families' list")
    specs: list[ModelSpec] = []
    for entry in roster_config["families"]:
        family = entry.get("family")
        if family not in FAMILIES:
            raise InvalidHyperparameterError(f"unknown model family {family!r}")
        variants = int(entry.get("variants", 1))
        if not 1 <= variants <= len(_VARIANT_LETTERS):
            raise InvalidParamsError(f"{family}: variants must be in [1, 26], got {variants}")
        base = dict(_DEFAULT_HYPERPARAMETERS[family])
        base.update(entry.get("hyperparameters", {}))
        sweep = entry.get("sweep", {})
        for param, values in sweep.items():
            if len(values) != variants:
                raise InvalidParamsError(
                    f"{family}: sweep for {param!r} lists {len(values)} values for {variants} variants"
                )
        seed = int(entry.get("seed", 0))
        for i in range(variants):
            hp = dict(base)
            for param, values in sweep.items():
                hp[param] = values[i]
            model_id = family if variants == 1 else f"{family}-{_VARIANT_LETTERS[i]}"
            specs.append(ModelSpec(model_id=model_id, family=family, hyperparameters=hp, seed=seed + i))
    seen = set()
    for spec in specs:
        if spec.model_id in seen:
            raise DuplicateModelIdError(f"duplicate model id {spec.model_id!r}")
        seen.add(spec.model_id)
    return sorted(specs, key=lambda s: s.model_id)


# --- regression tree ---------------------------------------------------------

def _best_split(X: np.ndarray, y: np.ndarray, min_leaf: int):
    """Lowest-SSE axis split with both children >= min_leaf, or None.

    Ties keep the first feature and first candidate, so the search order is
    part of the determinism contract.
    """
    n = len(y)
    best = None
    best_sse = np.inf
    positions = np.arange(min_leaf - 1, n - min_leaf)
    if len(positions) == 0:
        return None
    for j in range(X.shape[1]):
        column = X[:, j]
        order = np.argsort(column, kind="stable")
        xs = column[order]
        ys = y[order]
        valid = xs[positions] < xs[positions + 1]
        if not valid.any():
            continue
        csum = np.cumsum(ys)
        csum2 = np.cumsum(ys * ys)
        total = csum[-1]
        total2 = csum2[-1]
        n_left = positions + 1.0
        n_right = n - n_left
        s_left = csum[positions]
        s_right = total - s_left
        sse = (csum2[positions] - s_left * s_left / n_left) + (
            (total2 - csum2[positions]) - s_right * s_right / n_right
        )
        sse = np.where(valid, sse, np.inf)
        k = int(np.argmin(sse))
        if sse[k] < best_sse:
            best_sse = float(sse[k])
            threshold = (xs[positions[k]] + xs[positions[k] + 1]) / 2.0
            best = (j, float(threshold))
    return best


def _fit_tree(X: np.ndarray, y: np.ndarray, max_depth: int, min_leaf: int) -> dict:
    """Depth-limited regression tree on 0/1 labels; nodes are plain dicts."""

    def build(idx: np.ndarray, depth: int) -> dict:
        ys = y[idx]
        mean = float(ys.mean())
        if depth >= max_depth or len(idx) < 2 * min_leaf or np.all(ys == ys[0]):
            return {"value": mean}
        found = _best_split(X[idx], ys, min_leaf)
        if found is None:
            return {"value": mean}
        feature, threshold = found
        mask = X[idx, feature] <= threshold
        return {
            "feature": int(feature),
            "threshold": threshold,
            "left": build(idx[mask], depth + 1),
            "right": build(idx[~mask], depth + 1),
        }

    return build(np.arange(len(y)), 0)


def _tree_predict(tree: dict, X: np.ndarray) -> np.ndarray:
    out = np.empty(len(X), dtype=float)
    stack = [(tree, np.arange(len(X)))]
    while stack:
        node, idx = stack.pop()
        if len(idx) == 0:
            continue
        if "value" in node:
            out[idx] = node["value"]
        else:
            mask = X[idx, node["feature"]] <= node["threshold"]
            stack.append((node["left"], idx[mask]))
            stack.append((node["right"], idx[~mask]))
    return out


# --- family predictors -------------------------------------------------------

class LogisticPredictor:
    def __init__(self, weights: np.ndarray, bias: float):
        self.weights = np.asarray(weights, dtype=float)
        self.bias = float(bias)

    def predict_many(self, X: np.ndarray) -> np.ndarray:
        z = np.clip(X @ self.weights + self.bias, -35.0, 35.0)
        return 1.0 / (1.0 + np.exp(-z))

    def to_params(self) -> dict:
        return {"weights": [float(w) for w in self.weights], "bias": self.bias}

    @classmethod
    def from_params(cls, params: Mapping) -> "LogisticPredictor":
        return cls(np.array(params["weights"], dtype=float), params["bias"])


class TreePredictor:
    def __init__(self, tree: dict):
        self.tree = tree

    def predict_many(self, X: np.ndarray) -> np.ndarray:
        return _tree_predict(self.tree, X)

    def to_params(self) -> dict:
        return {"tree": self.tree}

    @classmethod
    def from_params(cls, params: Mapping) -> "TreePredictor":
        return cls(params["tree"])


class BaggingPredictor:
    def __init__(self, trees: Sequence[dict]):
        self.trees = list(trees)

    def member_predictions(self, X: np.ndarray) -> list[np.ndarray]:
        return [_tree_predict(tree, X) for tree in self.trees]

    def predict_many(self, X: np.ndarray) -> np.ndarray:
        members = self.member_predictions(X)
        return np.mean(members, axis=0)

    def to_params(self) -> dict:
        return {"trees": self.trees}

    @classmethod
    def from_params(cls, params: Mapping) -> "BaggingPredictor":
        return cls(params["trees"])


class SubspacePredictor:
    def __init__(self, members: Sequence[tuple[tuple[int, ...], dict]]):
        self.members = [(tuple(features), tree) for features, tree in members]

    def member_predictions(self, X: np.ndarray) -> list[np.ndarray]:
        return [_tree_predict(tree, X[:, list(features)]) for features, tree in self.members]

    def predict_many(self, X: np.ndarray) -> np.ndarray:
        return np.mean(self.member_predictions(X), axis=0)

    def to_params(self) -> dict:
        return {"members": [{"features": list(f), "tree": t} for f, t in self.members]}

    @classmethod
    def from_params(cls, params: Mapping) -> "SubspacePredictor":
        return cls([(tuple(m["features"]), m["tree"]) for m in params["members"]])


class LeastSquaresPredictor:
    def __init__(self, weights: np.ndarray, bias: float, ridge_fallback: bool = False):
        self.weights = np.asarray(weights, dtype=float)
        self.bias = float(bias)
        self.ridge_fallback = bool(ridge_fallback)

    def predict_many(self, X: np.ndarray) -> np.ndarray:
        return X @ self.weights + self.bias

    def to_params(self) -> dict:
        return {
            "weights": [float(w) for w in self.weights],
            "bias": self.bias,
            "ridge_fallback": self.ridge_fallback,
        }

    @classmethod
    def from_params(cls, params: Mapping) -> "LeastSquaresPredictor":
        return cls(np.array(params["weights"], dtype=float), params["bias"], params.get("ridge_fallback", False))


class KnnPredictor:
    def __init__(self, points: np.ndarray, labels: np.ndarray, k: int):
        self.points = np.asarray(points, dtype=float)
        self.labels = np.asarray(labels, dtype=float)
        self.k = int(k)

    def predict_many(self, X: np.ndarray) -> np.ndarray:
        k = min(self.k, len(self.points))
        # squared distances; ties broken by training index via stable sort
        d2 = ((X[:, None, :] - self.points[None, :, :]) ** 2).sum(axis=2)
        nearest = np.argsort(d2, axis=1, kind="stable")[:, :k]
        return self.labels[nearest].mean(axis=1)

    def to_params(self) -> dict:
        return {
            "points": [[float(v) for v in row] for row in self.points],
            "labels": [float(v) for v in self.labels],
            "k": self.k,
        }

    @classmethod
    def from_params(cls, params: Mapping) -> "KnnPredictor":
        return cls(np.array(params["points"], dtype=float), np.array(params["labels"], dtype=float), params["k"])


_PREDICTOR_CLASSES = {
    "logistic": LogisticPredictor,
    "tree": TreePredictor,
    "bagging": BaggingPredictor,
    "random-subspace": SubspacePredictor,
    "least-squares": LeastSquaresPredictor,
    "knn": KnnPredictor,
}


@dataclass(frozen=True)
class TrainedModel:
    """A fitted roster entry; predictions are clamped into [0, 1]."""

    spec: ModelSpec
    dimension: int
    predictor: object

    def predict_many(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.dimension:
            raise DimensionMismatchError(
                f"model {self.spec.model_id!r} expects (n, {self.dimension}) input, got shape {X.shape}"
            )
        raw = self.predictor.predict_many(X)
        if not np.isfinite(raw).all():
            raise InvalidParamsError(f"model {self.spec.model_id!r} produced a non-finite prediction")
        return np.clip(raw, 0.0, 1.0)

    def predict(self, scaled_features: Sequence[float]) -> float:
        features = np.asarray(scaled_features, dtype=float)
        if features.ndim != 1 or len(features) != self.dimension:
            raise DimensionMismatchError(
                f"model {self.spec.model_id!r} expects {self.dimension} features, got shape {features.shape}"
            )
        return float(self.predict_many(features[None, :])[0])


def _fit_logistic(X, y, spec):
    lr = float(spec.hp("learning_rate"))
    epochs = int(spec.hp("epochs"))
    n = len(y)
    weights = np.zeros(X.shape[1])
    bias = 0.0
    for _ in range(epochs):
        z = np.clip(X @ weights + bias, -35.0, 35.0)
        p = 1.0 / (1.0 + np.exp(-z))
        residual = p - y
        weights -= lr * (X.T @ residual) / n
        bias -= lr * residual.sum() / n
    return LogisticPredictor(weights, bias)


def _fit_bagging(X, y, spec):
    rng = np.random.default_rng(spec.seed)
    n = len(y)
    trees = []
    for _ in range(int(spec.hp("bags"))):
        if spec.hp("bootstrap"):
            idx = rng.integers(0, n, size=n)
        else:
            idx = np.arange(n)
        trees.append(_fit_tree(X[idx], y[idx], int(spec.hp("max_depth")), int(spec.hp("min_leaf"))))
    return BaggingPredictor(trees)


def _fit_subspace(X, y, spec):
    rng = np.random.default_rng(spec.seed)
    d = X.shape[1]
    size = max(1, min(d, int(float(spec.hp("fraction")) * d + 0.5)))
    members = []
    for _ in range(int(spec.hp("members"))):
        features = tuple(sorted(int(j) for j in rng.choice(d, size=size, replace=False)))
        tree = _fit_tree(X[:, list(features)], y, int(spec.hp("max_depth")), int(spec.hp("min_leaf")))
        members.append((features, tree))
    return SubspacePredictor(members)


def _fit_least_squares(X, y, spec):
    design = np.hstack([X, np.ones((len(y), 1))])
    gram = design.T @ design
    moment = design.T @ y
    ridge_fallback = False
    try:
        beta = np.linalg.solve(gram, moment)
    except np.linalg.LinAlgError:
        warnings.warn(
            f"{spec.model_id}: singular normal equations, falling back to ridge (lambda={RIDGE_LAMBDA})",
            DegenerateFitWarning,
            stacklevel=2,
        )
        beta = np.linalg.solve(gram + RIDGE_LAMBDA * np.eye(gram.shape[0]), moment)
        ridge_fallback = True
    return LeastSquaresPredictor(beta[:-1], float(beta[-1]), ridge_fallback)


def train_model(spec: ModelSpec, train: Sequence[PatientRecord], scaler: FeatureScaler) -> TrainedModel:
    """Fit one roster entry on scaled features."""
    if not train:
        raise EmptyDatasetError("cannot train on an empty dataset")
    if any(r.label is None for r in train):
        raise InvalidParamsError("training records must carry labels")
    X = scaler.transform_records(train)
    y = np.array([r.label for r in train], dtype=float)
    if spec.family == "logistic":
        predictor = _fit_logistic(X, y, spec)
    elif spec.family == "tree":
        predictor = TreePredictor(_fit_tree(X, y, int(spec.hp("max_depth")), int(spec.hp("min_leaf"))))
    elif spec.family == "bagging":
        predictor = _fit_bagging(X, y, spec)
    elif spec.family == "random-subspace":
        predictor = _fit_subspace(X, y, spec)
    elif spec.family == "least-squares":
        predictor = _fit_least_squares(X, y, spec)
    elif spec.family == "knn":
        predictor = KnnPredictor(X, y, int(spec.hp("k")))
    else:  # pragma: no cover - guarded by ModelSpec validation
        raise InvalidHyperparameterError(f"unknown model family {spec.family!r}")
    return TrainedModel(spec=spec, dimension=X.shape[1], predictor=predictor)


def model_to_dict(model: TrainedModel) -> dict:
    return {
        "model_id": model.spec.model_id,
        "family": model.spec.family,
        "hyperparameters": dict(model.spec.hyperparameters),
        "seed": model.spec.seed,
        "dimension": model.dimension,
        "params": model.predictor.to_params(),
    }


def model_from_dict(doc: Mapping) -> TrainedModel:
    spec = ModelSpec(
        model_id=doc["model_id"],
        family=doc["family"],
        hyperparameters=doc["hyperparameters"],
        seed=int(doc["seed"]),
    )
    predictor = _PREDICTOR_CLASSES[spec.family].from_params(doc["params"])
    return TrainedModel(spec=spec, dimension=int(doc["dimension"]), predictor=predictor)
