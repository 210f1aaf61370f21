"""Game-theoretic feature selection for tabular data."""

import json

from ._core import (
    Dataset,
    GtselectError,
    allocate_per_cluster,
    cis_value,
    cli,
    diversity_sample,
    run_pipeline_json,
    select_features,
    shapley_exact,
    shapley_mc,
)

__all__ = [
    "Dataset",
    "GtselectError",
    "allocate_per_cluster",
    "cis_value",
    "cli",
    "diversity_sample",
    "run_pipeline",
    "select_features",
    "shapley_exact",
    "shapley_mc",
]


def run_pipeline(config_text, strip_timing=False):
    """Run the pipeline from TOML config text and return the report as a dict."""
    return json.loads(run_pipeline_json(config_text, strip_timing))
