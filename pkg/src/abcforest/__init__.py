"""Likelihood-free Bayesian model choice with random forests.

The package turns Bayesian model selection into a classification problem:
a reference table of prior-predictive simulations trains a forest of
randomized CARTs that picks the model for an observed dataset, a second
regression forest estimates the posterior probability of that choice from
out-of-bag errors, and an exactly solvable MA(1)/MA(2) time-series
benchmark supplies the ground truth everything is validated against.
"""

__version__ = "0.1.0"

from .cart import CLASSIFICATION, REGRESSION, DecisionTree, SplitRule, TreeNode, gini
from .data import (DataSplit, ReferenceTable, SimulationRecord, load_observed,
                   load_table, save_table, split)
from .errors import (AbcForestError, DegenerateInputError, NumericError,
                     TableFormatError)
from .forest import (Forest, ForestConfig, ImportanceReport, VoteTally,
                     load_forest, save_forest)
from .ma import ExactPosterior, MaParams, ToyConfig, ToyDataset
from .model_choice import (AbcRfClassifier, ErrorVector, PosteriorEstimate,
                           PriorErrorReport)

__all__ = [
    "AbcForestError", "AbcRfClassifier", "CLASSIFICATION", "DataSplit",
    "DecisionTree", "DegenerateInputError", "ErrorVector", "ExactPosterior",
    "Forest", "ForestConfig", "ImportanceReport", "MaParams", "NumericError",
    "PosteriorEstimate", "PriorErrorReport", "REGRESSION", "ReferenceTable",
    "SimulationRecord", "SplitRule", "TableFormatError", "ToyConfig",
    "ToyDataset", "TreeNode", "VoteTally", "gini", "load_forest",
    "load_observed", "load_table", "save_forest", "save_table", "split",
]
