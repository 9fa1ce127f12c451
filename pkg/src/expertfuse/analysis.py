"""Information-theoretic diagnostics of expert selectability.

Estimates how identifiable the per-sample best expert is from expert
outputs alone: a plug-in entropy of the best-expert map, the plug-in
mutual information between the discretized output profile and that map,
and the resulting Fano-style lower bound on any selector's error.

All entropies are in nats (natural logarithms throughout).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .dataio import Dataset, TargetKind
from .errors import EmptyDataset, InvalidConfig, InvalidK, NotProbabilityOutputs


class Discretizer(str, enum.Enum):
    """How continuous expert outputs are reduced to a discrete profile."""

    ARGMAX_PROFILE = "argmax-profile"


@dataclass(frozen=True)
class FanoInputs:
    """Entropy / mutual-information pair feeding the error lower bound."""

    entropy_h: float
    mutual_info_i: float
    num_experts: int

    def __post_init__(self):
        if self.entropy_h < 0 or not math.isfinite(self.entropy_h):
            raise InvalidConfig("entropy_h must be finite and >= 0")
        if self.mutual_info_i < 0 or not math.isfinite(self.mutual_info_i):
            raise InvalidConfig("mutual_info_i must be finite and >= 0")
        if self.mutual_info_i > self.entropy_h + 1e-9:
            raise InvalidConfig("mutual information cannot exceed target entropy")


def oracle_map(validation: Dataset) -> np.ndarray:
    """Per-record best expert under 0-1 loss of each expert's argmax.

    A pointwise plug-in: with a single draw per input, the conditionally
    best expert is approximated by the lowest-indexed expert whose argmax
    matches the label (expert 0 when none do).
    """
    if len(validation) == 0:
        raise EmptyDataset("oracle map needs records")
    if not validation.schema.prob_outputs:
        raise NotProbabilityOutputs("oracle map requires probability outputs")
    if validation.schema.target_kind is not TargetKind.CLASS_LABEL:
        raise NotProbabilityOutputs("oracle map requires class-label targets")
    votes = validation.outputs.argmax(axis=2)  # (n, K)
    correct = votes == validation.labels[:, None]
    # argmax of a boolean row returns the first True, or 0 when all False.
    return correct.argmax(axis=1).astype(np.int64)


def _plugin_entropy(counts: np.ndarray) -> float:
    total = counts.sum()
    probs = counts[counts > 0] / total
    return float(-(probs * np.log(probs)).sum())


def estimate_fano_inputs(
    validation: Dataset, discretizer: Discretizer = Discretizer.ARGMAX_PROFILE
) -> FanoInputs:
    """Plug-in entropy and mutual information over discretized outputs.

    The profile of a record is the tuple of per-expert argmax classes; the
    target variable is the best-expert map. Both H and I are empirical
    plug-in estimates in nats.
    """
    if len(validation) == 0:
        raise EmptyDataset("estimation needs records")
    discretizer = Discretizer(discretizer)
    best = oracle_map(validation)
    votes = validation.outputs.argmax(axis=2)
    _, profile_codes = np.unique(votes, axis=0, return_inverse=True)
    k = validation.schema.num_experts
    n = len(validation)
    target_counts = np.bincount(best, minlength=k)
    entropy_h = _plugin_entropy(target_counts)
    num_profiles = profile_codes.max() + 1
    joint = np.zeros((num_profiles, k))
    np.add.at(joint, (profile_codes, best), 1.0)
    joint /= n
    p_profile = joint.sum(axis=1)
    p_target = joint.sum(axis=0)
    nonzero = joint > 0
    ratios = joint[nonzero] / (
        np.outer(p_profile, p_target)[nonzero]
    )
    mutual = float((joint[nonzero] * np.log(ratios)).sum())
    mutual = max(mutual, 0.0)
    return FanoInputs(entropy_h=entropy_h, mutual_info_i=min(mutual, entropy_h), num_experts=k)


def fano_lower_bound(inputs: FanoInputs) -> float:
    """Lower bound on selector error: max(0, (H - I - ln 2) / ln(K - 1)).

    Clamped to [0, 1] since it bounds a probability; needs K >= 3 so the
    denominator is positive.
    """
    if inputs.num_experts < 3:
        raise InvalidK("the error bound needs at least 3 experts")
    raw = (inputs.entropy_h - inputs.mutual_info_i - math.log(2.0)) / math.log(
        inputs.num_experts - 1
    )
    return min(1.0, max(0.0, raw))
