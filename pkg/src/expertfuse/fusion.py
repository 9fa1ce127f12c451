"""Fusers and baselines that map expert outputs to a final prediction.

The trained fuser is a three-layer MLP (two hidden layers) over the
concatenated outputs of a chosen expert subset, trained with mini-batch
AdamW (decoupled weight decay), cosine-annealed learning rate, ReLU
activations, and dropout before the final layer. The training-free fuser
is a majority vote over nearest validation neighbors. Baselines: output
averaging, most-confident-expert selection, and the true-domain oracle.

Every argmax/argmin in this module breaks ties toward the lowest index.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .dataio import Dataset, ExpertOutputRecord, TargetKind, quantize
from .errors import (
    EmptyDataset,
    InsufficientNeighbors,
    InvalidConfig,
    IoFailure,
    MalformedRecord,
    NonFiniteLoss,
    NotProbabilityOutputs,
    SchemaMismatch,
)
from .rng import Xoshiro256StarStar, mix_seed

TIE_RULE = "lowest-index"


@dataclass(frozen=True)
class SubsetMask:
    """Bitmask over the K experts identifying a subset."""

    mask: int
    num_experts: int

    def __post_init__(self):
        if self.num_experts < 1:
            raise InvalidConfig("num_experts must be >= 1")
        if not (0 <= self.mask < (1 << self.num_experts)):
            raise InvalidConfig("mask out of range for num_experts")

    @classmethod
    def full(cls, num_experts: int) -> "SubsetMask":
        return cls((1 << num_experts) - 1, num_experts)

    @classmethod
    def singleton(cls, expert: int, num_experts: int) -> "SubsetMask":
        return cls(1 << expert, num_experts)

    @classmethod
    def from_indices(cls, indices: Iterable[int], num_experts: int) -> "SubsetMask":
        mask = 0
        for i in indices:
            if not (0 <= i < num_experts):
                raise InvalidConfig(f"expert index {i} out of range")
            mask |= 1 << i
        return cls(mask, num_experts)

    @property
    def cardinality(self) -> int:
        return bin(self.mask).count("1")

    @property
    def is_empty(self) -> bool:
        return self.mask == 0

    @property
    def is_full(self) -> bool:
        return self.mask == (1 << self.num_experts) - 1

    def indices(self) -> tuple[int, ...]:
        return tuple(i for i in range(self.num_experts) if self.mask >> i & 1)

    def contains(self, expert: int) -> bool:
        return bool(self.mask >> expert & 1)

    def add(self, expert: int) -> "SubsetMask":
        return SubsetMask(self.mask | (1 << expert), self.num_experts)

    def issubset(self, other: "SubsetMask") -> bool:
        return self.mask & ~other.mask == 0


@dataclass(frozen=True)
class Prediction:
    """Score vector with its lowest-index argmax."""

    scores: np.ndarray
    argmax_index: int
    tie_rule: str = TIE_RULE


def _prediction_from_scores(scores: np.ndarray) -> Prediction:
    return Prediction(scores=scores, argmax_index=int(np.argmax(scores)))


def softmax(logits: np.ndarray) -> np.ndarray:
    """Exponential normalization along the last axis, max-stabilized."""
    shifted = logits - logits.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=-1, keepdims=True)


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of the MLP fuser trainer."""

    hidden_dims: tuple[int, int] = (256, 256)
    epochs: int = 50
    batch_size: int = 64
    learning_rate: float = 1e-3
    weight_decay: float = 1e-4
    dropout: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if len(self.hidden_dims) != 2 or any(h < 1 for h in self.hidden_dims):
            raise InvalidConfig("hidden_dims must be two positive widths")
        if self.epochs < 1:
            raise InvalidConfig("epochs must be >= 1")
        if self.batch_size < 1:
            raise InvalidConfig("batch_size must be >= 1")
        if self.learning_rate <= 0 or not math.isfinite(self.learning_rate):
            raise InvalidConfig("learning_rate must be positive and finite")
        if self.weight_decay < 0 or not math.isfinite(self.weight_decay):
            raise InvalidConfig("weight_decay must be >= 0")
        if not (0.0 <= self.dropout < 1.0):
            raise InvalidConfig("dropout must lie in [0, 1)")


@dataclass(frozen=True)
class TrainReport:
    final_loss: float
    epochs_run: int
    seed: int
    zero_input_variance: bool = False


@dataclass
class MlpFuser:
    """Feed-forward fuser over a fixed expert subset.

    Inputs are standardized by the training-set feature mean and scale
    (zero-variance features keep scale 1). ``weights[i]`` has shape
    (fan_in, fan_out); the forward pass is
    relu(relu(x W0 + b0) W1 + b1) W2 + b2 with dropout (training only)
    applied to the second hidden activation.
    """

    subset: SubsetMask
    layer_dims: tuple[int, int, int, int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    target_kind: TargetKind
    train_report: TrainReport
    feature_mean: np.ndarray | None = None
    feature_scale: np.ndarray | None = None

    def standardize(self, x: np.ndarray) -> np.ndarray:
        if self.feature_mean is None:
            return x
        return (x - self.feature_mean) / self.feature_scale

    def forward(self, x: np.ndarray, dropout_mask: np.ndarray | None = None) -> np.ndarray:
        """Logits for an already-standardized feature matrix."""
        h1 = np.maximum(x @ self.weights[0] + self.biases[0], 0.0)
        h2 = np.maximum(h1 @ self.weights[1] + self.biases[1], 0.0)
        if dropout_mask is not None:
            h2 = h2 * dropout_mask
        return h2 @ self.weights[2] + self.biases[2]

    def predict_batch(self, x: np.ndarray) -> np.ndarray:
        """Probability scores for a raw feature matrix, shape (n, out)."""
        return softmax(self.forward(self.standardize(x)))

    @property
    def input_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def output_dim(self) -> int:
        return self.layer_dims[-1]


def _check_record_schema(fuser: MlpFuser, record: ExpertOutputRecord) -> None:
    k = fuser.subset.num_experts
    if record.outputs.shape[0] != k:
        raise SchemaMismatch(
            f"record has {record.outputs.shape[0]} expert outputs, fuser expects {k}"
        )
    expected = fuser.subset.cardinality * record.outputs.shape[1]
    if expected != fuser.input_dim:
        raise SchemaMismatch(
            f"record features have length {expected}, fuser expects {fuser.input_dim}"
        )


def mlp_predict(fuser: MlpFuser, record: ExpertOutputRecord) -> Prediction:
    """Deterministic forward pass on one record; dropout inactive."""
    _check_record_schema(fuser, record)
    x = record.outputs[list(fuser.subset.indices())].reshape(1, -1)
    scores = fuser.predict_batch(x)[0]
    return _prediction_from_scores(scores)


def _init_params(dims: Sequence[int], seed: int):
    """Uniform fan-in initialization from the package PRNG; zero biases."""
    rng = Xoshiro256StarStar(mix_seed(seed, 0x1A17))
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = 1.0 / math.sqrt(fan_in)
        w = np.empty((fan_in, fan_out))
        flat = w.reshape(-1)
        for i in range(flat.shape[0]):
            flat[i] = (rng.random() * 2.0 - 1.0) * bound
        weights.append(w)
        biases.append(np.zeros(fan_out))
    return weights, biases


def _loss_and_grads(
    fuser: MlpFuser,
    x: np.ndarray,
    y: np.ndarray,
    dropout_mask: np.ndarray | None = None,
):
    """Mean cross-entropy and analytic parameter gradients for one batch."""
    w0, w1, w2 = fuser.weights
    b0, b1, b2 = fuser.biases
    z1 = x @ w0 + b0
    h1 = np.maximum(z1, 0.0)
    z2 = h1 @ w1 + b1
    h2 = np.maximum(z2, 0.0)
    h2d = h2 * dropout_mask if dropout_mask is not None else h2
    logits = h2d @ w2 + b2
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    n = x.shape[0]
    loss = float(np.mean(log_norm - shifted[np.arange(n), y]))
    probs = softmax(logits)
    dlogits = probs
    dlogits[np.arange(n), y] -= 1.0
    dlogits /= n
    dw2 = h2d.T @ dlogits
    db2 = dlogits.sum(axis=0)
    dh2 = dlogits @ w2.T
    if dropout_mask is not None:
        dh2 = dh2 * dropout_mask
    dz2 = dh2 * (z2 > 0)
    dw1 = h1.T @ dz2
    db1 = dz2.sum(axis=0)
    dz1 = (dz2 @ w1.T) * (z1 > 0)
    dw0 = x.T @ dz1
    db0 = dz1.sum(axis=0)
    return loss, [dw0, dw1, dw2], [db0, db1, db2]


def train_mlp_fuser(
    train: Dataset,
    subset: SubsetMask,
    hyper: TrainConfig,
    target_kind: TargetKind | None = None,
) -> MlpFuser:
    """Empirical-risk-minimize an MLP fuser on concatenated subset outputs.

    Targets are record labels for class fusers and record domains for
    expert-index fusers. Training is deterministic given ``hyper.seed``:
    initialization comes from the package PRNG, while batch shuffling and
    dropout masks come from a numpy PCG64 stream derived from the seed.
    Raises NonFiniteLoss as soon as the loss or a parameter stops being
    finite (divergence detection).
    """
    if len(train) == 0:
        raise EmptyDataset("cannot train a fuser on an empty dataset")
    if subset.is_empty:
        raise InvalidConfig("fuser subset must be nonempty")
    if subset.num_experts != train.schema.num_experts:
        raise SchemaMismatch(
            f"subset is over {subset.num_experts} experts, dataset has "
            f"{train.schema.num_experts}"
        )
    kind = target_kind or train.schema.target_kind
    out_dim = train.schema.num_classes if kind is TargetKind.CLASS_LABEL else train.schema.num_experts
    raw = train.features(subset.indices())
    y = train.targets(kind)
    mean = raw.mean(axis=0)
    scale = raw.std(axis=0)
    scale[scale == 0.0] = 1.0
    x = (raw - mean) / scale
    dims = (x.shape[1], hyper.hidden_dims[0], hyper.hidden_dims[1], out_dim)
    weights, biases = _init_params(dims, hyper.seed)
    zero_var = bool(np.all(raw == raw[0]))
    fuser = MlpFuser(
        subset=subset,
        layer_dims=dims,
        weights=weights,
        biases=biases,
        target_kind=kind,
        train_report=TrainReport(0.0, 0, hyper.seed, zero_var),
        feature_mean=mean,
        feature_scale=scale,
    )
    np_rng = np.random.Generator(np.random.PCG64(mix_seed(hyper.seed, 0x5B0F)))
    m_w = [np.zeros_like(w) for w in weights]
    v_w = [np.zeros_like(w) for w in weights]
    m_b = [np.zeros_like(b) for b in biases]
    v_b = [np.zeros_like(b) for b in biases]
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    step = 0
    n = x.shape[0]
    keep = 1.0 - hyper.dropout
    epoch_loss = 0.0
    for epoch in range(hyper.epochs):
        lr = hyper.learning_rate * 0.5 * (1.0 + math.cos(math.pi * epoch / hyper.epochs))
        order = np_rng.permutation(n)
        total, batches = 0.0, 0
        for lo in range(0, n, hyper.batch_size):
            idx = order[lo : lo + hyper.batch_size]
            xb, yb = x[idx], y[idx]
            if hyper.dropout > 0.0:
                mask = (np_rng.random((xb.shape[0], dims[2])) < keep) / keep
            else:
                mask = None
            with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
                loss, gw, gb = _loss_and_grads(fuser, xb, yb, mask)
                if not math.isfinite(loss):
                    raise NonFiniteLoss(f"loss became non-finite at epoch {epoch}")
                step += 1
                bc1 = 1.0 - beta1**step
                bc2 = 1.0 - beta2**step
                for params, grads, ms, vs in (
                    (weights, gw, m_w, v_w),
                    (biases, gb, m_b, v_b),
                ):
                    for p, g, m, v in zip(params, grads, ms, vs):
                        m *= beta1
                        m += (1.0 - beta1) * g
                        v *= beta2
                        v += (1.0 - beta2) * g * g
                        p -= lr * (m / bc1 / (np.sqrt(v / bc2) + eps) + hyper.weight_decay * p)
            if not all(np.isfinite(p).all() for p in weights + biases):
                raise NonFiniteLoss(f"parameters became non-finite at epoch {epoch}")
            total += loss
            batches += 1
        epoch_loss = total / batches
    fuser.train_report = TrainReport(
        final_loss=epoch_loss,
        epochs_run=hyper.epochs,
        seed=hyper.seed,
        zero_input_variance=zero_var,
    )
    return fuser


def save_fuser(fuser: MlpFuser, path) -> None:
    """Serialize a fuser to JSON (row-major weight arrays)."""
    payload = {
        "subset_mask": fuser.subset.mask,
        "num_experts": fuser.subset.num_experts,
        "layer_dims": list(fuser.layer_dims),
        "target_kind": fuser.target_kind.value,
        "feature_mean": None if fuser.feature_mean is None else fuser.feature_mean.tolist(),
        "feature_scale": None if fuser.feature_scale is None else fuser.feature_scale.tolist(),
        "weights": [w.reshape(-1).tolist() for w in fuser.weights],
        "biases": [b.tolist() for b in fuser.biases],
        "train_report": {
            "final_loss": fuser.train_report.final_loss,
            "epochs_run": fuser.train_report.epochs_run,
            "seed": fuser.train_report.seed,
            "zero_input_variance": fuser.train_report.zero_input_variance,
        },
    }
    try:
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(payload, handle)
            handle.write("\n")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def load_fuser(path) -> MlpFuser:
    try:
        with open(path, "r", encoding="utf-8") as handle:
            payload = json.load(handle)
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise MalformedRecord(f"fuser file is not valid JSON ({exc.msg})") from exc
    dims = tuple(payload["layer_dims"])
    weights = []
    for flat, (fan_in, fan_out) in zip(payload["weights"], zip(dims[:-1], dims[1:])):
        weights.append(np.asarray(flat, dtype=np.float64).reshape(fan_in, fan_out))
    biases = [np.asarray(b, dtype=np.float64) for b in payload["biases"]]
    report = payload["train_report"]
    mean = payload.get("feature_mean")
    scale = payload.get("feature_scale")
    return MlpFuser(
        subset=SubsetMask(payload["subset_mask"], payload["num_experts"]),
        layer_dims=dims,
        weights=weights,
        biases=biases,
        target_kind=TargetKind(payload["target_kind"]),
        train_report=TrainReport(
            final_loss=report["final_loss"],
            epochs_run=report["epochs_run"],
            seed=report["seed"],
            zero_input_variance=report["zero_input_variance"],
        ),
        feature_mean=None if mean is None else np.asarray(mean, dtype=np.float64),
        feature_scale=None if scale is None else np.asarray(scale, dtype=np.float64),
    )


def _sorted_neighbor_rows(
    ids: np.ndarray,
    features: np.ndarray,
    query_vec: np.ndarray,
    exclude_row: int | None,
) -> tuple[np.ndarray, np.ndarray]:
    """Validation rows sorted by (Euclidean distance, record id).

    The squared distance is the plain per-row sum of squared differences;
    keep it that way so results are reproducible against a row-by-row
    linear scan using the same expression.
    """
    sq = ((features - query_vec) ** 2).sum(axis=1)
    keep = np.arange(features.shape[0])
    if exclude_row is not None:
        keep = keep[keep != exclude_row]
    order = keep[np.lexsort((ids[keep], sq[keep]))]
    return order, np.sqrt(sq[order])


def _knn_majority(
    ids: np.ndarray,
    labels: np.ndarray,
    cardinality: int,
    features: np.ndarray,
    query_vec: np.ndarray,
    kappa: int,
    exclude_row: int | None,
) -> Prediction:
    order, _ = _sorted_neighbor_rows(ids, features, query_vec, exclude_row)
    chosen = order[:kappa]
    hist = np.bincount(labels[chosen], minlength=cardinality).astype(np.float64)
    return _prediction_from_scores(hist / kappa)


def knn_fuse(
    query,
    subset: SubsetMask,
    validation: Dataset,
    kappa: int,
    exclude_self: bool = False,
) -> Prediction:
    """Majority label of the kappa nearest validation records to the query.

    ``query`` may be an ExpertOutputRecord, a validation record id, or a raw
    (K, d) output array. Distances use the concatenated outputs of the
    subset's experts; ties break by ascending record id, and majority ties
    by lowest label. Scores are the normalized neighbor-label histogram.
    """
    if kappa < 1:
        raise InvalidConfig("kappa must be >= 1")
    if subset.is_empty:
        raise InvalidConfig("subset must be nonempty")
    query_id: int | None = None
    if isinstance(query, ExpertOutputRecord):
        outputs = query.outputs
        query_id = query.id
    elif isinstance(query, (int, np.integer)):
        row = validation.row_of_id(int(query))
        if row is None:
            raise InvalidConfig(f"query id {query} not present in validation set")
        outputs = validation.outputs[row]
        query_id = int(query)
    else:
        outputs = np.asarray(query, dtype=np.float64)
        if exclude_self:
            raise InvalidConfig("exclude_self requires a query with an id")
    idx = list(subset.indices())
    features = validation.features(idx)
    query_vec = outputs[idx].reshape(-1)
    exclude_row = (
        validation.row_of_id(query_id) if exclude_self and query_id is not None else None
    )
    available = len(validation) - (1 if exclude_row is not None else 0)
    if available < kappa:
        raise InsufficientNeighbors(
            f"need {kappa} neighbors, validation offers {available}"
        )
    return _knn_majority(
        validation.ids,
        validation.labels,
        validation.schema.label_cardinality,
        features,
        query_vec,
        kappa,
        exclude_row,
    )


def _require_prob_outputs(dataset_schema, record: ExpertOutputRecord) -> None:
    if not dataset_schema.prob_outputs:
        raise NotProbabilityOutputs("operation requires probability outputs")
    if record.outputs.shape[1] != dataset_schema.num_classes:
        raise NotProbabilityOutputs(
            "probability outputs must have one entry per class"
        )


def ensemble_average(record: ExpertOutputRecord, schema) -> Prediction:
    """Plain average of the K probability vectors."""
    _require_prob_outputs(schema, record)
    scores = record.outputs.mean(axis=0)
    return _prediction_from_scores(scores)


def confidence_select(record: ExpertOutputRecord, schema) -> tuple[int, Prediction]:
    """Pick the expert with the largest single class probability."""
    _require_prob_outputs(schema, record)
    confidences = record.outputs.max(axis=1)
    chosen = int(np.argmax(confidences))
    return chosen, _prediction_from_scores(record.outputs[chosen])


def oracle_select(record: ExpertOutputRecord) -> tuple[int, Prediction]:
    """Select the expert matching the record's true domain."""
    chosen = record.domain
    return chosen, _prediction_from_scores(record.outputs[chosen])


@dataclass(frozen=True)
class MetricsReport:
    """Evaluation summary mirroring final / expert-selection accuracy."""

    strategy: str
    record_count: int
    final_accuracy: float
    expert_selection_accuracy: float | None
    per_domain_accuracy: dict[int, float]
    config: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "record_count": self.record_count,
            "final_accuracy": quantize(self.final_accuracy),
            "expert_selection_accuracy": (
                None
                if self.expert_selection_accuracy is None
                else quantize(self.expert_selection_accuracy)
            ),
            "per_domain_accuracy": {
                str(k): quantize(v) for k, v in sorted(self.per_domain_accuracy.items())
            },
            "config": self.config,
        }


class Strategy:
    """Interface of an evaluable fusion strategy."""

    name = "strategy"

    def predict_dataset(self, dataset: Dataset) -> tuple[np.ndarray, np.ndarray | None]:
        """Return (predicted labels, selected experts or None)."""
        raise NotImplementedError

    def config_dict(self) -> dict:
        return {}


def _labels_from_selection(dataset: Dataset, selected: np.ndarray) -> np.ndarray:
    """Final class labels obtained by trusting each record's chosen expert."""
    if not dataset.schema.prob_outputs:
        raise NotProbabilityOutputs(
            "deriving class predictions from a selected expert requires "
            "probability outputs"
        )
    rows = np.arange(len(dataset))
    return dataset.outputs[rows, selected, :].argmax(axis=1)


class OracleStrategy(Strategy):
    name = "oracle"

    def predict_dataset(self, dataset):
        selected = dataset.domains.copy()
        return _labels_from_selection(dataset, selected), selected


class EnsembleStrategy(Strategy):
    name = "ensemble"

    def predict_dataset(self, dataset):
        if not dataset.schema.prob_outputs:
            raise NotProbabilityOutputs("ensemble averaging requires probability outputs")
        means = dataset.outputs.mean(axis=1)
        return means.argmax(axis=1), None


class ConfidenceStrategy(Strategy):
    name = "confidence"

    def predict_dataset(self, dataset):
        if not dataset.schema.prob_outputs:
            raise NotProbabilityOutputs("confidence selection requires probability outputs")
        selected = dataset.outputs.max(axis=2).argmax(axis=1)
        return _labels_from_selection(dataset, selected), selected


class MlpStrategy(Strategy):
    """Trained fuser; expert-index fusers route to the chosen expert."""

    name = "mlp"

    def __init__(self, fuser: MlpFuser):
        self.fuser = fuser

    def predict_dataset(self, dataset):
        if dataset.schema.num_experts != self.fuser.subset.num_experts:
            raise SchemaMismatch("dataset expert count does not match fuser")
        x = dataset.features(self.fuser.subset.indices())
        if x.shape[1] != self.fuser.input_dim:
            raise SchemaMismatch("dataset feature width does not match fuser")
        scores = self.fuser.predict_batch(x)
        argmax = scores.argmax(axis=1)
        if self.fuser.target_kind is TargetKind.EXPERT_INDEX:
            return _labels_from_selection(dataset, argmax), argmax
        return argmax, None

    def config_dict(self):
        return {
            "subset": list(self.fuser.subset.indices()),
            "target": self.fuser.target_kind.value,
            "layer_dims": list(self.fuser.layer_dims),
            "seed": self.fuser.train_report.seed,
        }


class KnnStrategy(Strategy):
    """Training-free nearest-neighbor fuser over a validation store."""

    name = "knn"

    def __init__(self, validation: Dataset, kappa: int, subset: SubsetMask | None = None):
        self.validation = validation
        self.kappa = kappa
        self.subset = subset or SubsetMask.full(validation.schema.num_experts)

    def predict_dataset(self, dataset):
        if dataset.schema.num_experts != self.validation.schema.num_experts:
            raise SchemaMismatch("dataset expert count does not match validation store")
        if len(self.validation) < self.kappa + 1:
            raise InsufficientNeighbors(
                f"need {self.kappa} leave-one-out neighbors, validation has "
                f"{len(self.validation)} records"
            )
        idx = list(self.subset.indices())
        val_features = self.validation.features(idx)
        query_features = dataset.features(idx)
        ids = self.validation.ids
        labels = self.validation.labels
        cardinality = self.validation.schema.label_cardinality
        preds = np.zeros(len(dataset), dtype=np.int64)
        for row in range(len(dataset)):
            exclude_row = self.validation.row_of_id(int(dataset.ids[row]))
            pred = _knn_majority(
                ids, labels, cardinality, val_features, query_features[row],
                self.kappa, exclude_row,
            )
            preds[row] = pred.argmax_index
        if self.validation.schema.target_kind is TargetKind.EXPERT_INDEX:
            return _labels_from_selection(dataset, preds), preds
        return preds, None

    def config_dict(self):
        return {"kappa": self.kappa, "subset": list(self.subset.indices())}


def evaluate(strategy: Strategy, test: Dataset, config_echo: dict | None = None) -> MetricsReport:
    """Accuracy metrics of a strategy on a test dataset.

    Final accuracy compares predicted labels to record labels;
    expert-selection accuracy (when the strategy selects experts) compares
    the selected expert to the record's domain.
    """
    if len(test) == 0:
        raise EmptyDataset("cannot evaluate on an empty dataset")
    predicted, selected = strategy.predict_dataset(test)
    truth = test.labels
    correct = predicted == truth
    per_domain: dict[int, float] = {}
    for domain in range(test.schema.num_experts):
        rows = test.domains == domain
        if rows.any():
            per_domain[domain] = float(correct[rows].mean())
    selection_accuracy = None
    if selected is not None:
        selection_accuracy = float((selected == test.domains).mean())
    config = dict(strategy.config_dict())
    if config_echo:
        config.update(config_echo)
    return MetricsReport(
        strategy=strategy.name,
        record_count=len(test),
        final_accuracy=float(correct.mean()),
        expert_selection_accuracy=selection_accuracy,
        per_domain_accuracy=per_domain,
        config=config,
    )
