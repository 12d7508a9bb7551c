"""Problem constructors: analytic toys, the inventory ALP and the classification models."""

from .classification import (FairnessSpec, MulticlassNpSpec, build_fairness, build_np_multiclass,
                             fairness_data, gaussian_classes, split_classes)
from .mdp import (AlpProblem, PerishableMdpSpec, basis_features, build_alp, mdp_stage_cost,
                  mdp_transition, sample_truncated_normal)
from .toys import build_analytic_toy, one_d, two_d

__all__ = [
    "AlpProblem", "FairnessSpec", "MulticlassNpSpec", "PerishableMdpSpec", "basis_features",
    "build_alp", "build_analytic_toy", "build_fairness", "build_np_multiclass", "fairness_data",
    "gaussian_classes", "mdp_stage_cost", "mdp_transition", "one_d", "sample_truncated_normal",
    "split_classes", "two_d",
]
