"""Cohort identification from a few disclosed positives and population statistics."""

from .core import CohortDataset, HyperplaneModel, SparseMatrix, load_dataset, save_dataset
from .sgd import TrainConfig, score, train

__all__ = ["CohortDataset", "HyperplaneModel", "SparseMatrix", "TrainConfig",
           "load_dataset", "save_dataset", "score", "train"]
