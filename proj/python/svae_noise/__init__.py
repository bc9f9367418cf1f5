"""Label-noise robust training: SVAE side branch, batch reweighting, sweeps and audits."""

from ._core import (
    Config,
    DomainError,
    KlSign,
    Method,
    NumericError,
    ResultRow,
    Task,
    alpha_at,
    audit_run,
    batch_weights,
    bce_multilabel,
    ce_pixelwise,
    focal_multilabel,
    importance_weights,
    kl_gaussian,
    load_config,
    loss_gap,
    minmax_rescale,
    mse_features,
    parse_config,
    prepare_splits,
    read_rows,
    run_experiment,
    run_sweep,
    save_config,
    summarize,
    write_rows,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
