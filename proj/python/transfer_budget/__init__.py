"""Transfer-quantity planning, Monte-Carlo verification and desk-scale training."""

from ._core import (
    Family,
    Regime,
    TrainStrategy,
    compare_strategies,
    fisher_analytic,
    kl_divergence,
    mc_expected_kl,
    optimal_single,
    plan_multi,
    proxy_multi,
    proxy_single,
    proxy_single_high_dim,
    regime_curve,
    run_command,
    solve_alpha_qp,
)

__all__ = [
    "Family",
    "Regime",
    "TrainStrategy",
    "compare_strategies",
    "fisher_analytic",
    "kl_divergence",
    "mc_expected_kl",
    "optimal_single",
    "plan_multi",
    "proxy_multi",
    "proxy_single",
    "proxy_single_high_dim",
    "regime_curve",
    "run_command",
    "solve_alpha_qp",
]
