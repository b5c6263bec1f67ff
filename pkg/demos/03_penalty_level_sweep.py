"""Sharper penalties confine better: a small three-level sweep.

The penalization scheme replaces the hard constraint with a restoring drift
of strength n.  As n grows the overshoot beyond the unit ball must vanish
while the total reflection effort Var(L) and the dissipation budget stay
bounded.  This script runs a small common-random-numbers ensemble at three
penalty levels and prints the estimator table that a full experiment writes
to CSV, so the trends are visible in one terminal screen.

The time step shrinks with n (dt ~ 1/n) so each level resolves its own
boundary layer; all levels still share snapshot times and Brownian paths,
which makes the cross-level gap table meaningful pathwise.
"""

from reflectx import (
    CoefficientSet,
    ExperimentSpec,
    PenaltyRunConfig,
    mode_field,
    run_experiment,
)

K = 8
coeffs = CoefficientSet(
    nu=0.05, gamma=0.5,
    f_const=mode_field(K, [(1, 0, 1.6), (0, 1, 1.2, 0.5)]),
    f_lin=0.0,
    sigma_const=mode_field(K, [(1, -1, 0.12)]),
    sigma_lin=0.0,
)
base = PenaltyRunConfig(
    n_penalty=50.0, dt=2e-3, T=0.4, cutoff=K, seed=9,
    coefficient_set=coeffs,
    u0=mode_field(K, [(1, 0, 0.7), (0, 1, 0.5, 0.5)]),
    snapshot_stride=20,
)
spec = ExperimentSpec(
    base=base, penalty_levels=(50.0, 500.0, 5000.0),
    ensemble_size=8, dt_policy="scaled",
)

print(f"levels {spec.penalty_levels}, {spec.ensemble_size} members, "
      f"dt scaled so n dt = {base.n_penalty * base.dt:g} at every level\n")
result = run_experiment(spec, vi_trials=25)

cols = ("sup_penetration4", "var_L_sq", "v_norm_budget", "support_leak")
print(f"{'n':>7} " + " ".join(f"{c:>18}" for c in cols))
for n, rep in result.reports:
    cells = []
    for c in cols:
        est = getattr(rep, c)
        cells.append(f"{est.value:11.3e}+-{est.stderr:5.0e}")
    print(f"{n:7g} " + " ".join(f"{s:>18}" for s in cells))

print("\nsup_penetration4 collapses with n; the variation and dissipation")
print("budgets barely move: confinement tightens at no extra effort.\n")

print("pathwise gap between consecutive levels (same Brownian path):")
for n_small, n_large, est in result.cauchy_table:
    print(f"  gap({n_small:g} -> {n_large:g}) = {est.value:.4e} +- {est.stderr:.0e}")
print("the gaps shrink as the levels climb: the penalized paths are a")
print("Cauchy family, which is how the reflected limit is reached.")

rep0 = result.report_for(spec.penalty_levels[0])
print(f"\nvariational inequality sampled on level {spec.penalty_levels[0]:g}: "
      f"min value {rep0.vi_min:.3e} over {rep0.vi_trials} test paths x "
      f"{rep0.sample_count} members, violations {rep0.vi_violations}")
