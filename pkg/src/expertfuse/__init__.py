"""expertfuse: fuse complementary expert outputs; query experts frugally."""

from .analysis import (
    Discretizer,
    FanoInputs,
    estimate_fano_inputs,
    fano_lower_bound,
    oracle_map,
)
from .dataio import (
    CostModel,
    Dataset,
    DatasetSchema,
    ExpertOutputRecord,
    SynthConfig,
    TargetKind,
    generate_synthetic,
    load_dataset,
    save_dataset,
)
from .frugal import (
    FrugalConfig,
    FrugalIndex,
    FrugalReport,
    FrugalTrace,
    FuserKind,
    MlpFuserBank,
    StopReason,
    estimate_loss,
    exhaustive_shortest_path,
    frugal_evaluate,
    frugal_run,
    neighbor_set,
    select_starting_expert,
    train_fuser_bank,
)
from .fusion import (
    ConfidenceStrategy,
    EnsembleStrategy,
    KnnStrategy,
    MetricsReport,
    MlpFuser,
    MlpStrategy,
    OracleStrategy,
    Prediction,
    SubsetMask,
    TrainConfig,
    confidence_select,
    ensemble_average,
    evaluate,
    knn_fuse,
    load_fuser,
    mlp_predict,
    oracle_select,
    save_fuser,
    train_mlp_fuser,
)
from .manifest import ExperimentManifest, run_manifest

__version__ = "0.1.0"
