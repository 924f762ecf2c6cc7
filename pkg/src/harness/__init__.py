"""
Harness package.
Run configuration files, the model/cost/policy registry, run manifests, the
acceptance suites and the command-line interface.
"""

from .config_parser import ResolvedConfig, ConfigDocument, parse_text, resolve, parse_config
from .registry import (
    run_seed, build_run_model, build_run_cost, build_run_policy, load_initial_measure,
    build_initial_law, build_sim_config, build_budget
)
from .manifest import RunManifest, MANIFEST_NAME, sha256_file
from .suites import SUITES, CHECK_SUITES, SuiteScale, SuiteReport, run_suite, run_check_suite

__all__ = [
    'ResolvedConfig',
    'ConfigDocument',
    'parse_text',
    'resolve',
    'parse_config',
    'run_seed',
    'build_run_model',
    'build_run_cost',
    'build_run_policy',
    'load_initial_measure',
    'build_initial_law',
    'build_sim_config',
    'build_budget',
    'RunManifest',
    'MANIFEST_NAME',
    'sha256_file',
    'SUITES',
    'CHECK_SUITES',
    'SuiteScale',
    'SuiteReport',
    'run_suite',
    'run_check_suite',
]
