"""Shared dataset fixtures.

The expensive mixtures are session-scoped; tests must treat them as
immutable (Dataset enforces this by exposing read-only arrays).
"""

import numpy as np
import pytest

from expertfuse import (
    Dataset,
    DatasetSchema,
    ExpertOutputRecord,
    SynthConfig,
    TargetKind,
    generate_synthetic,
)

K10_CONFIG = SynthConfig(
    num_domains=10,
    num_classes=20,
    in_domain_accuracy=0.9,
    off_domain_accuracy=0.55,
    confusion_temperature=1.0,
    off_domain_flatness=2.0,
    samples_per_split=(4000, 1000, 5000),
    seed=7,
)

K6_CONFIG = SynthConfig(
    num_domains=6,
    num_classes=10,
    mixture_weights=(0.45, 0.25, 0.15, 0.07, 0.05, 0.03),
    in_domain_accuracy=0.9,
    off_domain_accuracy=0.55,
    confusion_temperature=1.0,
    off_domain_flatness=3.0,
    samples_per_split=(3000, 1000, 1000),
    seed=11,
)

K4_CONFIG = SynthConfig(
    num_domains=4,
    num_classes=6,
    samples_per_split=(400, 200, 100),
    seed=5,
)


@pytest.fixture(scope="session")
def k10_splits():
    return generate_synthetic(K10_CONFIG)


@pytest.fixture(scope="session")
def k6_splits():
    return generate_synthetic(K6_CONFIG)


@pytest.fixture(scope="session")
def k4_splits():
    return generate_synthetic(K4_CONFIG)


@pytest.fixture(scope="session")
def k2_disjoint_splits():
    config = SynthConfig(
        num_domains=2,
        num_classes=5,
        in_domain_accuracy=1.0,
        off_domain_accuracy=0.0,
        samples_per_split=(600, 300, 400),
        seed=3,
    )
    return generate_synthetic(config)


def make_generic_dataset(
    num_records: int,
    num_experts: int,
    output_dim: int,
    num_classes: int,
    seed: int,
    prob_outputs: bool = False,
) -> Dataset:
    """Continuous random outputs: a tie-free geometry for order-sensitive tests."""
    rng = np.random.default_rng(seed)
    schema = DatasetSchema(
        num_experts=num_experts,
        output_dim=output_dim,
        num_classes=num_classes,
        target_kind=TargetKind.CLASS_LABEL,
        prob_outputs=prob_outputs,
    )
    outputs = rng.random((num_records, num_experts, output_dim))
    if prob_outputs:
        outputs /= outputs.sum(axis=2, keepdims=True)
    return Dataset(
        schema,
        ids=np.arange(num_records),
        domains=rng.integers(0, num_experts, num_records),
        labels=rng.integers(0, num_classes, num_records),
        outputs=outputs,
    )


def make_record(record_id, domain, label, outputs) -> ExpertOutputRecord:
    return ExpertOutputRecord(
        id=record_id, domain=domain, label=label, outputs=np.asarray(outputs, dtype=np.float64)
    )
