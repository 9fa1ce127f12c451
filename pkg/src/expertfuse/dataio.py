"""Dataset schema, JSONL persistence, and the synthetic mixture generator.

A dataset is an ordered collection of records, one per sample. Each record
holds the sample's true domain, its target label, and one output vector per
expert; the experts themselves never appear here, only their outputs.

File format (UTF-8 JSON Lines):

* line 1 header: ``{"k": K, "d": d, "c": C, "target": "class"|"expert",
  "prob_outputs": bool}``
* each following line: ``{"id": int, "domain": int, "label": int,
  "outputs": [[... d floats ...] x K]}``

Floats are written with 9 significant digits (round-half-even). Generated
datasets quantize their outputs to the same precision, so save -> load is
the exact identity on them.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import (
    DuplicateId,
    InvalidConfig,
    IoFailure,
    MalformedRecord,
    SchemaMismatch,
)
from .rng import Xoshiro256StarStar, mix_seed

PROB_SUM_TOL = 1e-6
_MIN_TEMPERATURE = 1e-6


class TargetKind(str, enum.Enum):
    """What a record's label refers to: a class or the index of an expert."""

    CLASS_LABEL = "class"
    EXPERT_INDEX = "expert"


def format_float(x: float) -> str:
    """Canonical 9-significant-digit decimal form used in all output files."""
    return f"{x:.9g}"


def quantize(x: float) -> float:
    """Value of ``x`` after a 9-significant-digit round trip."""
    return float(format_float(x))


@dataclass(frozen=True)
class DatasetSchema:
    """Shape contract shared by every record of a dataset.

    ``num_classes`` records the label cardinality even when the outputs are
    embeddings rather than class probabilities.
    """

    num_experts: int
    output_dim: int
    num_classes: int
    target_kind: TargetKind = TargetKind.CLASS_LABEL
    prob_outputs: bool = False

    def __post_init__(self):
        if self.num_experts < 1:
            raise InvalidConfig("num_experts must be >= 1")
        if self.output_dim < 1:
            raise InvalidConfig("output_dim must be >= 1")
        if self.num_classes < 2:
            raise InvalidConfig("num_classes must be >= 2")
        if not isinstance(self.target_kind, TargetKind):
            object.__setattr__(self, "target_kind", TargetKind(self.target_kind))

    @property
    def label_cardinality(self) -> int:
        """Number of valid label values under the target kind."""
        if self.target_kind is TargetKind.EXPERT_INDEX:
            return self.num_experts
        return self.num_classes


@dataclass(frozen=True)
class ExpertOutputRecord:
    """One sample: id, true domain, target label, and K output vectors."""

    id: int
    domain: int
    label: int
    outputs: np.ndarray  # shape (K, d), read-only

    def output_of(self, expert: int) -> np.ndarray:
        return self.outputs[expert]


@dataclass(frozen=True)
class CostModel:
    """Per-expert query costs and the cost-error trade-off weight.

    With equal costs ``c``, ``lam * c`` reads as the minimal error-rate
    reduction demanded before one more expert query is worth making.
    """

    costs: tuple[float, ...]
    lam: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "costs", tuple(float(c) for c in self.costs))
        if any(c < 0 or not math.isfinite(c) for c in self.costs):
            raise InvalidConfig("expert costs must be finite and >= 0")
        if self.lam < 0 or not math.isfinite(self.lam):
            raise InvalidConfig("lam must be finite and >= 0")

    @classmethod
    def uniform(cls, num_experts: int, cost: float = 0.01, lam: float = 0.0) -> "CostModel":
        return cls(costs=(cost,) * num_experts, lam=lam)

    def subset_cost(self, indices: Iterable[int]) -> float:
        return self.lam * sum(self.costs[i] for i in indices)


def _validate_record_arrays(schema: DatasetSchema, ids, domains, labels, outputs) -> None:
    """Validate packed record arrays against the schema; raise on violation."""
    n = ids.shape[0]
    if outputs.shape != (n, schema.num_experts, schema.output_dim):
        raise SchemaMismatch(
            f"expected outputs of shape (n, {schema.num_experts}, {schema.output_dim}), "
            f"found {outputs.shape}"
        )
    if n == 0:
        return
    if ids.min() < 0:
        raise MalformedRecord("record ids must be non-negative", field="id")
    unique, counts = np.unique(ids, return_counts=True)
    if unique.shape[0] != n:
        dup = int(unique[counts > 1][0])
        raise DuplicateId(f"record id {dup} appears more than once")
    if domains.min() < 0 or domains.max() >= schema.num_experts:
        raise MalformedRecord(
            f"domain values must lie in [0, {schema.num_experts})", field="domain"
        )
    cardinality = schema.label_cardinality
    if labels.min() < 0 or labels.max() >= cardinality:
        raise MalformedRecord(
            f"label values must lie in [0, {cardinality})", field="label"
        )
    if not np.isfinite(outputs).all():
        raise MalformedRecord("output vectors must be finite", field="outputs")
    if schema.prob_outputs:
        if outputs.min() < 0:
            raise MalformedRecord(
                "probability outputs must be entrywise >= 0", field="outputs"
            )
        sums = outputs.sum(axis=2)
        if np.abs(sums - 1.0).max() > PROB_SUM_TOL:
            raise MalformedRecord(
                f"probability outputs must sum to 1 within {PROB_SUM_TOL}",
                field="outputs",
            )


class Dataset:
    """Immutable ordered record collection with schema validation.

    Safe for concurrent reads; all arrays are exposed as non-writable views.
    """

    def __init__(self, schema: DatasetSchema, ids, domains, labels, outputs):
        self.schema = schema
        self._ids = np.ascontiguousarray(ids, dtype=np.int64)
        self._domains = np.ascontiguousarray(domains, dtype=np.int64)
        self._labels = np.ascontiguousarray(labels, dtype=np.int64)
        self._outputs = np.ascontiguousarray(outputs, dtype=np.float64)
        _validate_record_arrays(schema, self._ids, self._domains, self._labels, self._outputs)
        for arr in (self._ids, self._domains, self._labels, self._outputs):
            arr.flags.writeable = False
        self._id_to_row = {int(i): row for row, i in enumerate(self._ids)}

    @classmethod
    def from_records(cls, schema: DatasetSchema, records: Iterable[ExpertOutputRecord]) -> "Dataset":
        records = list(records)
        n = len(records)
        ids = np.fromiter((r.id for r in records), dtype=np.int64, count=n)
        domains = np.fromiter((r.domain for r in records), dtype=np.int64, count=n)
        labels = np.fromiter((r.label for r in records), dtype=np.int64, count=n)
        outputs = np.zeros((n, schema.num_experts, schema.output_dim))
        for row, r in enumerate(records):
            out = np.asarray(r.outputs, dtype=np.float64)
            if out.shape != (schema.num_experts, schema.output_dim):
                raise SchemaMismatch(
                    f"record {r.id}: expected {schema.num_experts} vectors of "
                    f"length {schema.output_dim}, found shape {out.shape}"
                )
            outputs[row] = out
        return cls(schema, ids, domains, labels, outputs)

    @property
    def ids(self) -> np.ndarray:
        return self._ids

    @property
    def domains(self) -> np.ndarray:
        return self._domains

    @property
    def labels(self) -> np.ndarray:
        return self._labels

    @property
    def outputs(self) -> np.ndarray:
        """All output vectors, shape (n, K, d)."""
        return self._outputs

    def __len__(self) -> int:
        return self._ids.shape[0]

    def record(self, row: int) -> ExpertOutputRecord:
        return ExpertOutputRecord(
            id=int(self._ids[row]),
            domain=int(self._domains[row]),
            label=int(self._labels[row]),
            outputs=self._outputs[row],
        )

    def __iter__(self) -> Iterator[ExpertOutputRecord]:
        for row in range(len(self)):
            yield self.record(row)

    def row_of_id(self, record_id: int) -> int | None:
        return self._id_to_row.get(int(record_id))

    def features(self, expert_indices: Sequence[int]) -> np.ndarray:
        """Concatenated outputs of the given experts, shape (n, len(idx)*d)."""
        idx = list(expert_indices)
        n = len(self)
        return self._outputs[:, idx, :].reshape(n, len(idx) * self.schema.output_dim)

    def targets(self, target_kind: TargetKind) -> np.ndarray:
        """Label array under the requested target kind (domains for experts)."""
        if target_kind is TargetKind.EXPERT_INDEX:
            return self._domains
        return self._labels

    def with_expert_target(self) -> "Dataset":
        """Copy with ``label := domain`` and an expert-index target kind."""
        schema = DatasetSchema(
            num_experts=self.schema.num_experts,
            output_dim=self.schema.output_dim,
            num_classes=self.schema.num_classes,
            target_kind=TargetKind.EXPERT_INDEX,
            prob_outputs=self.schema.prob_outputs,
        )
        return Dataset(schema, self._ids, self._domains, self._domains, self._outputs)

    def equals(self, other: "Dataset") -> bool:
        return (
            self.schema == other.schema
            and np.array_equal(self._ids, other._ids)
            and np.array_equal(self._domains, other._domains)
            and np.array_equal(self._labels, other._labels)
            and np.array_equal(self._outputs, other._outputs)
        )


def _parse_header(line: str) -> DatasetSchema:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise MalformedRecord(f"header is not valid JSON ({exc.msg})", line=1) from exc
    if not isinstance(obj, dict):
        raise MalformedRecord("header must be a JSON object", line=1)
    for key in ("k", "d", "c", "target"):
        if key not in obj:
            raise MalformedRecord("missing header key", line=1, field=key)
    try:
        target = TargetKind(obj["target"])
    except ValueError:
        raise MalformedRecord(
            "target must be 'class' or 'expert'", line=1, field="target"
        ) from None
    for key in ("k", "d", "c"):
        if not isinstance(obj[key], int) or isinstance(obj[key], bool):
            raise MalformedRecord("header dimension must be an integer", line=1, field=key)
    prob = obj.get("prob_outputs", False)
    if not isinstance(prob, bool):
        raise MalformedRecord("prob_outputs must be a boolean", line=1, field="prob_outputs")
    try:
        return DatasetSchema(
            num_experts=obj["k"],
            output_dim=obj["d"],
            num_classes=obj["c"],
            target_kind=target,
            prob_outputs=prob,
        )
    except InvalidConfig as exc:
        raise MalformedRecord(str(exc), line=1) from exc


def _parse_record(line: str, line_no: int, schema: DatasetSchema):
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise MalformedRecord(f"record is not valid JSON ({exc.msg})", line=line_no) from exc
    if not isinstance(obj, dict):
        raise MalformedRecord("record must be a JSON object", line=line_no)
    for key in ("id", "domain", "label", "outputs"):
        if key not in obj:
            raise MalformedRecord("missing record key", line=line_no, field=key)
    for key in ("id", "domain", "label"):
        if not isinstance(obj[key], int) or isinstance(obj[key], bool):
            raise MalformedRecord("must be an integer", line=line_no, field=key)
    outputs = obj["outputs"]
    if not isinstance(outputs, list):
        raise MalformedRecord("outputs must be a list of vectors", line=line_no, field="outputs")
    if len(outputs) != schema.num_experts:
        raise SchemaMismatch(
            f"line {line_no}: expected {schema.num_experts} output vectors, "
            f"found {len(outputs)}"
        )
    for vec in outputs:
        if not isinstance(vec, list) or len(vec) != schema.output_dim:
            raise SchemaMismatch(
                f"line {line_no}: expected output vectors of length "
                f"{schema.output_dim}, found {len(vec) if isinstance(vec, list) else type(vec).__name__}"
            )
        for v in vec:
            if not isinstance(v, (int, float)) or isinstance(v, bool):
                raise MalformedRecord("output entries must be numbers", line=line_no, field="outputs")
    arr = np.asarray(outputs, dtype=np.float64)
    if not np.isfinite(arr).all():
        raise MalformedRecord("output vectors must be finite", line=line_no, field="outputs")
    if obj["id"] < 0:
        raise MalformedRecord("record ids must be non-negative", line=line_no, field="id")
    if not (0 <= obj["domain"] < schema.num_experts):
        raise MalformedRecord(
            f"domain must lie in [0, {schema.num_experts})", line=line_no, field="domain"
        )
    cardinality = schema.label_cardinality
    if not (0 <= obj["label"] < cardinality):
        raise MalformedRecord(
            f"label must lie in [0, {cardinality})", line=line_no, field="label"
        )
    if schema.prob_outputs:
        if arr.min() < 0:
            raise MalformedRecord(
                "probability outputs must be entrywise >= 0", line=line_no, field="outputs"
            )
        sums = arr.sum(axis=1)
        if np.abs(sums - 1.0).max() > PROB_SUM_TOL:
            raise MalformedRecord(
                f"probability outputs must sum to 1 within {PROB_SUM_TOL}",
                line=line_no,
                field="outputs",
            )
    return obj["id"], obj["domain"], obj["label"], arr


def load_dataset(path) -> Dataset:
    """Load and fully validate a JSONL dataset file."""
    try:
        with open(path, "r", encoding="utf-8") as handle:
            lines = handle.read().splitlines()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    if not lines:
        raise MalformedRecord("file is empty: missing header", line=1)
    schema = _parse_header(lines[0])
    ids, domains, labels, outputs = [], [], [], []
    seen: set[int] = set()
    for line_no, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        rid, dom, lab, arr = _parse_record(line, line_no, schema)
        if rid in seen:
            raise DuplicateId(f"line {line_no}: record id {rid} appears more than once")
        seen.add(rid)
        ids.append(rid)
        domains.append(dom)
        labels.append(lab)
        outputs.append(arr)
    n = len(ids)
    packed = (
        np.asarray(outputs, dtype=np.float64)
        if n
        else np.zeros((0, schema.num_experts, schema.output_dim))
    )
    return Dataset(
        schema,
        np.asarray(ids, dtype=np.int64),
        np.asarray(domains, dtype=np.int64),
        np.asarray(labels, dtype=np.int64),
        packed,
    )


def _record_line(rid: int, domain: int, label: int, outputs: np.ndarray) -> str:
    vecs = ",".join(
        "[" + ",".join(format_float(v) for v in vec) + "]" for vec in outputs
    )
    return f'{{"id":{rid},"domain":{domain},"label":{label},"outputs":[{vecs}]}}'


def save_dataset(dataset: Dataset, path) -> None:
    """Write a dataset in canonical form (fixed key order, 9-digit floats)."""
    schema = dataset.schema
    header = (
        f'{{"k":{schema.num_experts},"d":{schema.output_dim},"c":{schema.num_classes},'
        f'"target":"{schema.target_kind.value}",'
        f'"prob_outputs":{"true" if schema.prob_outputs else "false"}}}'
    )
    lines = [header]
    for row in range(len(dataset)):
        lines.append(
            _record_line(
                int(dataset.ids[row]),
                int(dataset.domains[row]),
                int(dataset.labels[row]),
                dataset.outputs[row],
            )
        )
    try:
        with open(path, "w", encoding="utf-8") as handle:
            handle.write("\n".join(lines) + "\n")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


@dataclass(frozen=True)
class SynthConfig:
    """Configuration of the synthetic domain-mixture generator.

    ``off_domain_flatness`` scales the softening temperature of off-domain
    experts (> 1 means flatter, less confident vectors). Off-domain experts
    being visibly less sharp is what makes the sample's domain identifiable
    from outputs alone; set it to 1.0 for indistinguishable sharpness.
    """

    num_domains: int
    num_classes: int
    mixture_weights: tuple[float, ...] = ()
    in_domain_accuracy: float = 0.9
    off_domain_accuracy: float = 0.55
    confusion_temperature: float = 1.0
    off_domain_flatness: float = 2.0
    samples_per_split: tuple[int, int, int] = (1000, 500, 1000)
    seed: int = 0

    def __post_init__(self):
        if self.num_domains < 1:
            raise InvalidConfig("num_domains must be >= 1")
        if self.num_classes < 2:
            raise InvalidConfig("num_classes must be >= 2")
        weights = self.mixture_weights
        if not weights:
            weights = (1.0 / self.num_domains,) * self.num_domains
        weights = tuple(float(w) for w in weights)
        object.__setattr__(self, "mixture_weights", weights)
        if len(weights) != self.num_domains:
            raise InvalidConfig("mixture_weights must have num_domains entries")
        if any(w <= 0 for w in weights):
            raise InvalidConfig("mixture weights must be positive")
        if abs(sum(weights) - 1.0) > 1e-9:
            raise InvalidConfig("mixture weights must sum to 1 within 1e-9")
        if not (0.0 < self.in_domain_accuracy <= 1.0):
            raise InvalidConfig("in_domain_accuracy must lie in (0, 1]")
        if not (0.0 <= self.off_domain_accuracy <= 1.0):
            raise InvalidConfig("off_domain_accuracy must lie in [0, 1]")
        if self.in_domain_accuracy < self.off_domain_accuracy:
            raise InvalidConfig("in_domain_accuracy must be >= off_domain_accuracy")
        if self.confusion_temperature <= 0:
            raise InvalidConfig("confusion_temperature must be positive")
        if self.off_domain_flatness < 1.0:
            raise InvalidConfig("off_domain_flatness must be >= 1")
        spl = tuple(int(s) for s in self.samples_per_split)
        object.__setattr__(self, "samples_per_split", spl)
        if len(spl) != 3 or any(s < 0 for s in spl):
            raise InvalidConfig("samples_per_split must be three non-negative counts")
        if self.seed < 0 or self.seed > (1 << 64) - 1:
            raise InvalidConfig("seed must fit in 64 unsigned bits")


def _softened_point_mass(num_classes: int, temperature: float) -> tuple[float, float]:
    """(peak, rest) masses of a temperature-softened point mass over C classes.

    Computed via exp(-1/T) so that the T -> 0 limit underflows cleanly to an
    exact one-hot vector instead of overflowing.
    """
    t = max(temperature, _MIN_TEMPERATURE)
    decay = math.exp(-1.0 / t)
    peak = 1.0 / (1.0 + (num_classes - 1) * decay)
    rest = decay * peak
    return quantize(peak), quantize(rest)


def _generate_split(config: SynthConfig, split_index: int, start_id: int, count: int) -> Dataset:
    k_dom, c = config.num_domains, config.num_classes
    rng = Xoshiro256StarStar(mix_seed(config.seed, split_index))
    peak_in, rest_in = _softened_point_mass(c, config.confusion_temperature)
    peak_off, rest_off = _softened_point_mass(
        c, config.confusion_temperature * config.off_domain_flatness
    )
    ids = np.arange(start_id, start_id + count, dtype=np.int64)
    domains = np.zeros(count, dtype=np.int64)
    labels = np.zeros(count, dtype=np.int64)
    outputs = np.zeros((count, k_dom, c))
    for i in range(count):
        domain = rng.categorical(config.mixture_weights)
        label = rng.randint(c)
        wrong = rng.randint(c - 1)
        if wrong >= label:
            wrong += 1
        domains[i] = domain
        labels[i] = label
        for j in range(k_dom):
            acc = config.in_domain_accuracy if j == domain else config.off_domain_accuracy
            vote = label if rng.bernoulli(acc) else wrong
            peak, rest = (peak_in, rest_in) if j == domain else (peak_off, rest_off)
            outputs[i, j, :] = rest
            outputs[i, j, vote] = peak
    schema = DatasetSchema(
        num_experts=k_dom,
        output_dim=c,
        num_classes=c,
        target_kind=TargetKind.CLASS_LABEL,
        prob_outputs=True,
    )
    return Dataset(schema, ids, domains, labels, outputs)


def generate_synthetic(
    config: SynthConfig, as_expert_target: bool = False
) -> tuple[Dataset, Dataset, Dataset]:
    """Generate (train, validation, test) splits of a domain mixture.

    Per sample: the domain is drawn from the mixture weights, the class
    uniformly, and one shared wrong class uniformly from the rest. Each
    expert votes for the true class with its accuracy (in-domain or off-)
    and otherwise for the shared wrong class, emitting a softened point
    mass at its vote. Sharing the wrong class across experts keeps their
    errors correlated, so no fusion of their outputs can beat the oracle
    expert; see README for the full construction.

    Splits use disjoint substreams of the seed and disjoint id ranges.
    With ``as_expert_target`` every split is relabeled ``label := domain``.
    """
    counts = config.samples_per_split
    splits = []
    start_id = 0
    for split_index, count in enumerate(counts):
        split = _generate_split(config, split_index, start_id, count)
        start_id += count
        if as_expert_target:
            split = split.with_expert_target()
        splits.append(split)
    return splits[0], splits[1], splits[2]
