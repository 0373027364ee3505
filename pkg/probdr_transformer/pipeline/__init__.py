from .data import LabeledDataset, load_idx
from .unroll import (
    DimredParams,
    UnrollTrace,
    cluster_ratio,
    emit_scatter,
    random_projection,
    run_dimred,
    unroll,
)
