#  Copyright 2023-2026 Amazon.com, Inc. or its affiliates.

# flake8: noqa

from .harness import ExperimentConfig, MetricsRow, RuleSpec, calibrate_energy, parse_rule, run_cell, run_sweep
