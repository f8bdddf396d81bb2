"""Retinal vessel segmentation pipeline (Python bindings)."""

from ._deffa import (  # noqa: F401
    Model,
    __version__,
    confusion,
    csa_transform,
    default_payload_bytes,
    invariant_input,
    jaccard_distance,
    roc_auc,
    run,
    segmentation_metrics,
)
