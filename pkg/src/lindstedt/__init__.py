"""Perturbation series for quasi-periodic solutions.

Order-by-order solvers for four model families, an independent tree-diagram
oracle with multiscale/cluster diagnostics, continued-fraction and Brjuno
arithmetic for rotation numbers, and convergence/measure/attractivity
analysis on top of solver output.
"""

from .diophantine import (
    BryunoReport,
    CFReport,
    RotationVector,
    Surd,
    bryuno_function,
    bryuno_omega,
    continued_fraction,
    diophantine_constant,
    scale_of,
    surd_from_cf,
    surd_golden,
    surd_silver,
)
from .errors import BudgetError, ContractError, InputError, LindstedtError
from .models import (
    ForcingMode,
    ForcingModes,
    ModelSpec,
    SolveReport,
    Tolerances,
    compatibility_report,
    cosine_forcing,
    merge_forcings,
    merge_taylor,
    residual_eval,
    residual_order_check,
    sin_forcing,
    solve_lindstedt,
    spec_from_json,
    stationary_point_check,
    taylor_of_cos,
    taylor_of_exp,
    taylor_of_sin,
)
from .series import (
    FTSeries,
    ft_add,
    ft_compose_analytic,
    ft_eval,
    ft_eval_grid,
    ft_exp,
    ft_mul,
    ft_order_norms,
    ft_order_sup_norms,
    ft_scale,
    ft_shift,
    from_csv,
    hermitize,
    to_csv,
)
from .trees import (
    ClusterReport,
    LabeledTree,
    SelfEnergyCluster,
    TreeEnumerator,
    TreeNode,
    chain_value,
    compatibility_tree_sum,
    enumerate_self_energy_clusters,
    enumerate_trees,
    factorial_chain_tree,
    factorial_growth_fit,
    fragment_from_cluster,
    group_by_free_structure,
    scale_decomposition,
    self_energy_derivative,
    self_energy_sum,
    self_energy_value,
    siegel_bryuno_check,
    tree_sum,
    tree_value,
)
from .analysis import (
    IntegrationReport,
    MeasureReport,
    RadiusEstimate,
    attractivity_check,
    borel_transform,
    davie_compare,
    growth_classification,
    integrate_ode,
    melnikov_measure,
    radius_estimate,
)

__version__ = "0.1.0"
