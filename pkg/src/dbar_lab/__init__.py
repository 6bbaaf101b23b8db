"""
dbar-compactness-lab

Numerical experiments on compactness of the ∂̄-Neumann operator: discrete
Kohn Laplacians on masked lattices, certified witness forms and the weighted
inequality checks. Prefer `dbar_lab.api` for running experiments.
"""

from dbar_lab.api import DbarLab, run_experiment

__all__ = ["DbarLab", "run_experiment"]
