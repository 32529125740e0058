"""fairsearch: multi-objective search for fair and effective forests."""

from .dataset import DatasetSchema, SplitIndices, Table, load_csv, mutate_sensitive, split
from .forest import ForestHyperparams, ForestModel, RandomForest, fit_forest, predict
from .metrics import MetricsRecord, compute_record, effectiveness

__all__ = [
    "DatasetSchema",
    "SplitIndices",
    "Table",
    "load_csv",
    "mutate_sensitive",
    "split",
    "ForestHyperparams",
    "ForestModel",
    "RandomForest",
    "fit_forest",
    "predict",
    "MetricsRecord",
    "compute_record",
    "effectiveness",
]
