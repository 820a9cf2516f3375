"""Configuration-driven training, evaluation and prediction on tabular data."""

from riskpipe.config import parse_algo_config, parse_data_config, parse_predict_config
from riskpipe.engine import RunResult, run_predict_pretrained, run_training, write_results
from riskpipe.persist import ModelBundle, load_bundle, save_bundle

__all__ = [
    "ModelBundle",
    "RunResult",
    "load_bundle",
    "parse_algo_config",
    "parse_data_config",
    "parse_predict_config",
    "run_predict_pretrained",
    "run_training",
    "save_bundle",
    "write_results",
]
