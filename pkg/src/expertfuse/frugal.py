"""Budgeted sequential expert selection with kNN conditional-loss estimates.

For a fixed input, experts are queried one at a time. After each query the
expected 0-1 loss of stopping now is estimated from the nearest validation
records (measured in the space of the outputs observed so far), and each
not-yet-queried expert is scored by the same estimator as if it had been
added. The search stops when the best candidate no longer improves on the
current estimate, when a query cap is hit, or when every expert has been
queried. An exhaustive enumeration over the subset lattice provides the
matching shortest-path optimum for small expert counts.

Two fuser backends drive the loss estimates: a training-free nearest-
neighbor fuser whose per-record losses are precomputed over the validation
set, and a bank of trained MLP fusers, one per expert subset.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .dataio import CostModel, Dataset, ExpertOutputRecord, TargetKind, quantize
from .errors import (
    EmptyDataset,
    InsufficientNeighbors,
    InvalidConfig,
    MissingFuser,
    SchemaMismatch,
    TooManyExperts,
)
from .fusion import (
    MlpFuser,
    Prediction,
    SubsetMask,
    TrainConfig,
    _knn_majority,
    _prediction_from_scores,
    _sorted_neighbor_rows,
    train_mlp_fuser,
)

EXHAUSTIVE_MAX_EXPERTS = 15


class FuserKind(str, enum.Enum):
    KNN = "knn"
    MLP_BANK = "mlp-bank"


class StopReason(str, enum.Enum):
    NO_IMPROVEMENT = "NoImprovement"
    MAX_QUERIES = "MaxQueries"
    ALL_QUERIED = "AllQueried"


@dataclass(frozen=True)
class FrugalConfig:
    """Knobs of the sequential search.

    ``m_neighbors`` sizes the loss-estimating neighborhood, ``kappa`` the
    inner nearest-neighbor fuser. ``max_queries`` of None means no cap.
    With the default strict stopping rule a zero-improvement candidate is
    still queried; ``stop_on_zero`` flips that. ``subset_restricted_losses``
    recomputes the per-record fuser losses inside each candidate subset's
    own output space instead of reusing the single full-expert-space table;
    the restricted variant is what makes candidate scores reflect the value
    of the added expert, and is what the shipped frontier experiments use.
    """

    m_neighbors: int
    kappa: int
    cost_model: CostModel
    fuser_kind: FuserKind = FuserKind.KNN
    max_queries: int | None = None
    stop_on_zero: bool = False
    subset_restricted_losses: bool = False

    def __post_init__(self):
        if self.m_neighbors < 1:
            raise InvalidConfig("m_neighbors must be >= 1")
        if self.kappa < 1:
            raise InvalidConfig("kappa must be >= 1")
        if not isinstance(self.fuser_kind, FuserKind):
            object.__setattr__(self, "fuser_kind", FuserKind(self.fuser_kind))
        if self.max_queries is not None and self.max_queries < 1:
            raise InvalidConfig("max_queries must be >= 1 when set")
        if self.fuser_kind is FuserKind.MLP_BANK:
            if self.max_queries is None or self.max_queries > 5:
                raise InvalidConfig(
                    "mlp-bank fusers require max_queries <= 5 so the bank "
                    "stays trainable"
                )

    def query_cap(self, num_experts: int) -> int:
        if self.max_queries is None:
            return num_experts
        return min(self.max_queries, num_experts)


@dataclass(frozen=True)
class StepLog:
    """One loop iteration: the estimates seen and the decision taken."""

    queried: tuple[int, ...]
    current_estimate: float
    candidates: tuple[tuple[int, float], ...]
    decision: str


@dataclass(frozen=True)
class FrugalTrace:
    """Full account of one query's sequential search."""

    record_id: int
    query_sequence: tuple[int, ...]
    step_estimates: tuple[float, ...]
    step_log: tuple[StepLog, ...]
    stop_reason: StopReason
    final_prediction: Prediction
    experts_queried: int
    total_cost: float
    realized_objective: float
    correct_vs_label: bool
    domain_in_queried: bool


class MlpFuserBank:
    """Trained MLP fusers keyed by expert-subset bitmask."""

    def __init__(self, fusers: Mapping[int, MlpFuser], num_experts: int):
        self.num_experts = num_experts
        self._fusers = dict(fusers)

    def get(self, subset: SubsetMask) -> MlpFuser:
        fuser = self._fusers.get(subset.mask)
        if fuser is None:
            raise MissingFuser(
                f"no fuser trained for expert subset {sorted(subset.indices())}"
            )
        return fuser

    def masks(self) -> tuple[int, ...]:
        return tuple(sorted(self._fusers))


def train_fuser_bank(
    train: Dataset,
    max_subset_size: int,
    hyper: TrainConfig,
    target_kind: TargetKind | None = None,
) -> MlpFuserBank:
    """Train one MLP fuser per expert subset of size <= max_subset_size."""
    k = train.schema.num_experts
    fusers: dict[int, MlpFuser] = {}
    for mask in range(1, 1 << k):
        subset = SubsetMask(mask, k)
        if subset.cardinality > max_subset_size:
            continue
        fusers[mask] = train_mlp_fuser(train, subset, hyper, target_kind)
    return MlpFuserBank(fusers, k)


class FrugalIndex:
    """Immutable per-(validation, config) structures shared by all queries.

    Holds the validation outputs, the precomputed per-record fuser losses
    (one table in full-expert space, or one per subset when restricted or
    bank-backed), and the input-independent starting expert.
    """

    def __init__(
        self,
        validation: Dataset,
        config: FrugalConfig,
        bank: MlpFuserBank | None = None,
    ):
        if len(validation) == 0:
            raise EmptyDataset("frugal search needs a nonempty validation set")
        n = len(validation)
        if config.m_neighbors > n:
            raise InsufficientNeighbors(
                f"m_neighbors={config.m_neighbors} exceeds validation size {n}"
            )
        if config.kappa > n - 1:
            raise InsufficientNeighbors(
                f"kappa={config.kappa} exceeds validation size - 1 = {n - 1}"
            )
        if len(config.cost_model.costs) != validation.schema.num_experts:
            raise InvalidConfig("cost model must price every expert")
        if config.fuser_kind is FuserKind.MLP_BANK and bank is None:
            raise InvalidConfig("mlp-bank mode needs a trained fuser bank")
        self.validation = validation
        self.config = config
        self.bank = bank
        self.num_experts = validation.schema.num_experts
        self.targets = validation.targets(validation.schema.target_kind)
        self._loss_tables: dict[int, np.ndarray] = {}
        self._full_table: np.ndarray | None = None
        self._starting_expert: int | None = None

    # -- loss tables --------------------------------------------------

    def _loo_knn_losses(self, subset: SubsetMask) -> np.ndarray:
        """Leave-one-out 0-1 losses of the kNN fuser in subset output space."""
        validation = self.validation
        features = validation.features(subset.indices())
        ids = validation.ids
        labels = validation.labels
        cardinality = validation.schema.label_cardinality
        kappa = self.config.kappa
        n = len(validation)
        losses = np.zeros(n)
        for row in range(n):
            pred = _knn_majority(
                ids, labels, cardinality, features, features[row], kappa, row
            )
            losses[row] = 0.0 if pred.argmax_index == self.targets[row] else 1.0
        return losses

    def _bank_losses(self, subset: SubsetMask) -> np.ndarray:
        fuser = self.bank.get(subset)
        x = self.validation.features(subset.indices())
        predicted = fuser.predict_batch(x).argmax(axis=1)
        return (predicted != self.targets).astype(np.float64)

    def record_losses(self, subset: SubsetMask) -> np.ndarray:
        """Per-validation-record 0-1 fuser losses used inside the estimator."""
        if self.config.fuser_kind is FuserKind.MLP_BANK:
            key = subset.mask
            if key not in self._loss_tables:
                self._loss_tables[key] = self._bank_losses(subset)
            return self._loss_tables[key]
        if self.config.subset_restricted_losses:
            key = subset.mask
            if key not in self._loss_tables:
                self._loss_tables[key] = self._loo_knn_losses(subset)
            return self._loss_tables[key]
        if self._full_table is None:
            self._full_table = self._loo_knn_losses(SubsetMask.full(self.num_experts))
        return self._full_table

    def singleton_validation_loss(self, expert: int) -> float:
        """Mean validation loss of the one-expert fuser (LOO for kNN)."""
        subset = SubsetMask.singleton(expert, self.num_experts)
        if self.config.fuser_kind is FuserKind.MLP_BANK:
            return float(self._bank_losses(subset).mean())
        key = subset.mask
        if key not in self._loss_tables:
            self._loss_tables[key] = self._loo_knn_losses(subset)
        return float(self._loss_tables[key].mean())

    @property
    def starting_expert(self) -> int:
        if self._starting_expert is None:
            losses = [
                self.singleton_validation_loss(j) for j in range(self.num_experts)
            ]
            self._starting_expert = int(np.argmin(losses))
        return self._starting_expert

    # -- neighborhoods ------------------------------------------------

    def _query_parts(self, query):
        return _parse_query(query, self.validation)

    def neighborhood(self, query, queried: SubsetMask, m: int) -> np.ndarray:
        """Rows of the m nearest validation records in queried-output space."""
        if queried.is_empty:
            raise InvalidConfig("queried subset must be nonempty")
        outputs, query_id = self._query_parts(query)
        idx = list(queried.indices())
        features = self.validation.features(idx)
        query_vec = outputs[idx].reshape(-1)
        exclude_row = (
            self.validation.row_of_id(query_id) if query_id is not None else None
        )
        available = len(self.validation) - (1 if exclude_row is not None else 0)
        if m > available:
            raise InsufficientNeighbors(
                f"need {m} neighbors, validation offers {available}"
            )
        order, _ = _sorted_neighbor_rows(
            self.validation.ids, features, query_vec, exclude_row
        )
        return order[:m]

    def estimate(self, query, candidate: SubsetMask, queried: SubsetMask) -> float:
        """Estimated loss-plus-cost of fusing with ``candidate``'s experts."""
        if not queried.issubset(candidate):
            raise InvalidConfig("queried experts must be a subset of the candidate set")
        rows = self.neighborhood(query, queried, self.config.m_neighbors)
        losses = self.record_losses(candidate)
        return float(losses[rows].mean()) + self.config.cost_model.subset_cost(
            candidate.indices()
        )

    def fuse(self, query, queried: SubsetMask) -> Prediction:
        """Final prediction from the experts queried so far."""
        outputs, query_id = self._query_parts(query)
        if self.config.fuser_kind is FuserKind.MLP_BANK:
            fuser = self.bank.get(queried)
            x = outputs[list(queried.indices())].reshape(1, -1)
            return _prediction_from_scores(fuser.predict_batch(x)[0])
        idx = list(queried.indices())
        features = self.validation.features(idx)
        query_vec = outputs[idx].reshape(-1)
        exclude_row = (
            self.validation.row_of_id(query_id) if query_id is not None else None
        )
        return _knn_majority(
            self.validation.ids,
            self.validation.labels,
            self.validation.schema.label_cardinality,
            features,
            query_vec,
            self.config.kappa,
            exclude_row,
        )


def select_starting_expert(
    validation: Dataset, config: FrugalConfig, bank: MlpFuserBank | None = None
) -> int:
    """Expert with the best average singleton-fuser validation performance.

    Input-independent: the same expert starts the search for every query.
    """
    return FrugalIndex(validation, config, bank).starting_expert


def _parse_query(query, validation: Dataset):
    """Normalize a query (record, validation id, or raw outputs) to arrays."""
    if isinstance(query, ExpertOutputRecord):
        return query.outputs, query.id
    if isinstance(query, (int, np.integer)):
        row = validation.row_of_id(int(query))
        if row is None:
            raise InvalidConfig(f"query id {query} not present in validation set")
        return validation.outputs[row], int(query)
    outputs = np.asarray(query, dtype=np.float64)
    expected = (validation.schema.num_experts, validation.schema.output_dim)
    if outputs.shape != expected:
        raise SchemaMismatch(f"query outputs must have shape {expected}")
    return outputs, None


def neighbor_set(
    query,
    queried: SubsetMask,
    validation: Dataset,
    m: int,
) -> list[tuple[ExpertOutputRecord, float]]:
    """The m nearest validation records in queried-output space.

    Sorted ascending by (Euclidean distance, record id); a validation record
    sharing the query's id is excluded.
    """
    if queried.is_empty:
        raise InvalidConfig("queried subset must be nonempty")
    outputs, query_id = _parse_query(query, validation)
    idx = list(queried.indices())
    features = validation.features(idx)
    query_vec = outputs[idx].reshape(-1)
    exclude_row = validation.row_of_id(query_id) if query_id is not None else None
    available = len(validation) - (1 if exclude_row is not None else 0)
    if m > available:
        raise InsufficientNeighbors(f"need {m} neighbors, validation offers {available}")
    order, dists = _sorted_neighbor_rows(validation.ids, features, query_vec, exclude_row)
    return [(validation.record(int(row)), float(d)) for row, d in zip(order[:m], dists[:m])]


def estimate_loss(
    query,
    candidate: SubsetMask,
    queried: SubsetMask,
    validation: Dataset,
    config: FrugalConfig,
    index: FrugalIndex | None = None,
    bank: MlpFuserBank | None = None,
) -> float:
    """Neighborhood-average fuser loss plus scaled query costs (see module doc)."""
    if index is None:
        index = FrugalIndex(validation, config, bank)
    return index.estimate(query, candidate, queried)


def frugal_run(
    query,
    validation: Dataset,
    config: FrugalConfig,
    index: FrugalIndex | None = None,
    bank: MlpFuserBank | None = None,
) -> FrugalTrace:
    """Run the sequential search for one query and trace every step."""
    if index is None:
        index = FrugalIndex(validation, config, bank)
    k = index.num_experts
    cap = config.query_cap(k)
    queried = SubsetMask.singleton(index.starting_expert, k)
    sequence = [index.starting_expert]
    estimates: list[float] = []
    log: list[StepLog] = []
    while True:
        current = index.estimate(query, queried, queried)
        estimates.append(current)
        if queried.is_full:
            reason = StopReason.ALL_QUERIED
            log.append(StepLog(queried.indices(), current, (), reason.value))
            break
        if queried.cardinality >= cap:
            reason = StopReason.MAX_QUERIES
            log.append(StepLog(queried.indices(), current, (), reason.value))
            break
        candidates = []
        for expert in range(k):
            if queried.contains(expert):
                continue
            candidates.append((expert, index.estimate(query, queried.add(expert), queried)))
        best_expert, best_estimate = min(candidates, key=lambda item: (item[1], item[0]))
        improvement = best_estimate - current
        should_stop = improvement >= 0.0 if config.stop_on_zero else improvement > 0.0
        if should_stop:
            reason = StopReason.NO_IMPROVEMENT
            log.append(StepLog(queried.indices(), current, tuple(candidates), reason.value))
            break
        log.append(
            StepLog(queried.indices(), current, tuple(candidates), f"query expert {best_expert}")
        )
        queried = queried.add(best_expert)
        sequence.append(best_expert)
    prediction = index.fuse(query, queried)
    _, query_id = index._query_parts(query)
    record = query if isinstance(query, ExpertOutputRecord) else None
    correct = record is not None and prediction.argmax_index == record.label
    domain_hit = record is not None and queried.contains(record.domain)
    return FrugalTrace(
        record_id=query_id if query_id is not None else -1,
        query_sequence=tuple(sequence),
        step_estimates=tuple(estimates),
        step_log=tuple(log),
        stop_reason=reason,
        final_prediction=prediction,
        experts_queried=len(sequence),
        total_cost=config.cost_model.subset_cost(queried.indices()),
        realized_objective=estimates[-1],
        correct_vs_label=correct,
        domain_in_queried=domain_hit,
    )


def exhaustive_shortest_path(
    query,
    validation: Dataset,
    config: FrugalConfig,
    index: FrugalIndex | None = None,
    bank: MlpFuserBank | None = None,
) -> tuple[SubsetMask, float]:
    """Optimal expert subset by enumerating the whole subset lattice.

    Each nonempty subset's path length is its scaled query cost plus the
    neighborhood-average fuser loss with the neighborhood measured in that
    same subset's output space. Ties prefer smaller subsets, then the
    smaller bitmask.
    """
    k = validation.schema.num_experts
    if k > EXHAUSTIVE_MAX_EXPERTS:
        raise TooManyExperts(
            f"exhaustive search is guarded at {EXHAUSTIVE_MAX_EXPERTS} experts, got {k}"
        )
    if index is None:
        index = FrugalIndex(validation, config, bank)
    best: tuple[float, int, int] | None = None
    best_mask: SubsetMask | None = None
    for mask in range(1, 1 << k):
        subset = SubsetMask(mask, k)
        length = index.estimate(query, subset, subset)
        key = (length, subset.cardinality, mask)
        if best is None or key < best:
            best = key
            best_mask = subset
    return best_mask, best[0]


@dataclass(frozen=True)
class FrugalReport:
    """Aggregate results of running the sequential search over a test set."""

    record_count: int
    final_accuracy: float
    expert_selection_accuracy: float
    mean_queried: float
    median_queried: float
    query_histogram: dict[int, int]
    mean_cost: float
    config: dict = field(default_factory=dict)
    traces: tuple[FrugalTrace, ...] | None = None

    @property
    def frontier_point(self) -> tuple[float, float]:
        return (self.mean_queried, self.final_accuracy)

    def to_json_dict(self) -> dict:
        return {
            "record_count": self.record_count,
            "final_accuracy": quantize(self.final_accuracy),
            "expert_selection_accuracy": quantize(self.expert_selection_accuracy),
            "mean_queried": quantize(self.mean_queried),
            "median_queried": quantize(self.median_queried),
            "query_histogram": {str(k): v for k, v in sorted(self.query_histogram.items())},
            "mean_cost": quantize(self.mean_cost),
            "config": self.config,
        }


def frugal_evaluate(
    test: Dataset,
    validation: Dataset,
    config: FrugalConfig,
    bank: MlpFuserBank | None = None,
    collect_traces: bool = False,
) -> FrugalReport:
    """Run the sequential search on every test record and aggregate.

    Expert-selection accuracy here is the fraction of records whose true
    domain expert ended up queried (query coverage of the right expert).
    """
    if len(test) == 0:
        raise EmptyDataset("cannot evaluate on an empty dataset")
    if test.schema.num_experts != validation.schema.num_experts:
        raise SchemaMismatch("test and validation expert counts differ")
    index = FrugalIndex(validation, config, bank)
    traces = [frugal_run(test.record(row), validation, config, index) for row in range(len(test))]
    correct = sum(t.correct_vs_label for t in traces)
    domain_hits = sum(t.domain_in_queried for t in traces)
    counts = np.array([t.experts_queried for t in traces])
    histogram: dict[int, int] = {}
    for c in counts.tolist():
        histogram[c] = histogram.get(c, 0) + 1
    return FrugalReport(
        record_count=len(test),
        final_accuracy=correct / len(test),
        expert_selection_accuracy=domain_hits / len(test),
        mean_queried=float(counts.mean()),
        median_queried=float(np.median(counts)),
        query_histogram=histogram,
        mean_cost=float(np.mean([t.total_cost for t in traces])),
        config={
            "m_neighbors": config.m_neighbors,
            "kappa": config.kappa,
            "lambda": config.cost_model.lam,
            "costs": list(config.cost_model.costs),
            "fuser_kind": config.fuser_kind.value,
            "max_queries": config.max_queries,
            "stop_on_zero": config.stop_on_zero,
            "subset_restricted_losses": config.subset_restricted_losses,
        },
        traces=tuple(traces) if collect_traces else None,
    )
