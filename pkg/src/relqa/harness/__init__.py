"""Datasets, training, evaluation, ablation grids and the CLI."""
from relqa.harness.data import SyntheticSpec, gen_synthetic, load_dataset, save_dataset
from relqa.harness.grid import run_grid
from relqa.harness.train import EvalResult, RunConfig, TrainResult, evaluate, evaluate_checkpoint, train

__all__ = [
    "EvalResult", "RunConfig", "SyntheticSpec", "TrainResult", "evaluate", "evaluate_checkpoint",
    "gen_synthetic", "load_dataset", "run_grid", "save_dataset", "train",
]
