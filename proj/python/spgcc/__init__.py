from ._core import (
    Config,
    IoError,
    artifact_path,
    cluster,
    evaluate,
    features,
    hungarian,
    kmeans,
    load_config,
    load_labels_file,
    metrics,
    pca_reduce_file,
    pretrain,
    render_map,
    run_all,
    segment,
    slic_labels,
    synth,
)

__all__ = [
    "Config",
    "IoError",
    "artifact_path",
    "cluster",
    "evaluate",
    "features",
    "hungarian",
    "kmeans",
    "load_config",
    "load_labels_file",
    "metrics",
    "pca_reduce_file",
    "pretrain",
    "render_map",
    "run_all",
    "segment",
    "slic_labels",
    "synth",
]
