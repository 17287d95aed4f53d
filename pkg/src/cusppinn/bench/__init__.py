"""Benchmark problems, error metrics and the multi-trial runner."""

from .examples import EXAMPLE_IDS, ExampleSpec, describe_examples, make_example
from .metrics import ErrorReport, mean_report, relative_errors
from .trials import (
    TABLE_HEADER,
    TrialResult,
    TrialsReport,
    compare_augmentation,
    compare_optimizers,
    layer_sizes,
    run_trial,
    run_trials,
    with_knobs,
    write_table,
    write_trials_json,
)
