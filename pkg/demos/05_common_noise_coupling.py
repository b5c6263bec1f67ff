"""Why every penalty level rides the same Brownian path.

Comparing two penalty levels through ensemble averages is hopeless at small
sample sizes: the Monte Carlo error swamps the systematic n-difference.
Driving both levels with the identical noise (common random numbers) turns
the comparison pathwise, and the weighted gap between levels becomes a
deterministic-looking quantity orders of magnitude below the independent
coupling.  The same trick certifies stability: two runs at one level from
different starting points contract towards each other.
"""

import numpy as np

from reflectx import (
    CoefficientSet,
    PenaltyRunConfig,
    brownian_increments,
    cauchy_gap,
    inner_h,
    mode_field,
    norm_h,
    simulate_path,
    uniqueness_gap,
)
import dataclasses

K = 8
dt = 1e-3
coeffs = CoefficientSet(
    nu=0.05, gamma=0.5,
    f_const=mode_field(K, [(1, 0, 1.6), (0, 1, 1.2, 0.5)]),
    f_lin=0.0,
    sigma_const=mode_field(K, [(1, -1, 0.15)]),
    sigma_lin=0.0,
)
base = PenaltyRunConfig(
    n_penalty=100.0, dt=dt, T=0.4, cutoff=K, seed=5,
    coefficient_set=coeffs,
    u0=mode_field(K, [(1, 0, 0.7), (0, 1, 0.5, 0.5)]),
    snapshot_stride=10,
)

steps = base.steps
shared = brownian_increments(base.seed, steps, dt, coeffs.noise_dim)
other = brownian_increments(base.seed + 1, steps, dt, coeffs.noise_dim)

low = simulate_path(base, increments=shared)
high_cfg = dataclasses.replace(base, n_penalty=1000.0)
high_same = simulate_path(high_cfg, increments=shared)
high_other = simulate_path(high_cfg, increments=other)

def sup_h_gap(a, b):
    return max(
        norm_h(ua - ub) for ua, ub in zip(a.u_snapshots, b.u_snapshots)
    )

print("two penalty levels, n = 100 vs n = 1000, same dt and horizon:\n")
print(f"  sup_t |u_100 - u_1000|_H, SAME Brownian path:   "
      f"{sup_h_gap(low, high_same):.4e}")
print(f"  sup_t |u_100 - u_1000|_H, independent paths:    "
      f"{sup_h_gap(low, high_other):.4e}")
print(f"  weighted cross-level gap (common noise):        "
      f"{cauchy_gap(low, high_same):.4e}")
print("\nthe common-noise gap isolates the penalty effect; the independent")
print("coupling mostly measures noise, not the thing being studied.\n")

print("stability at a fixed level: two starting points, one noise")
u0_b = mode_field(K, [(1, 0, 0.55), (2, 1, 0.3, 0.8)])
path_a = simulate_path(base, increments=shared)
path_b = simulate_path(
    dataclasses.replace(base, u0=u0_b), increments=shared
)
d0 = norm_h(base.u0 - u0_b)
dT = norm_h(path_a.final_u - path_b.final_u)
print(f"  |u_a(0) - u_b(0)|_H = {d0:.4f}   |u_a(T) - u_b(T)|_H = {dT:.4f}")
print(f"  weighted uniqueness gap sup_t h(t)|u_a - u_b|^2 = "
      f"{uniqueness_gap(path_a, path_b):.4e} (initial value {d0**2:.4e})")
print("\nthe gap never exceeds its starting value: with one noise the")
print("dynamics is pathwise stable, which is exactly what makes the")
print("penalized family converge to a unique reflected limit.")

# the two runs above share every increment; their L processes differ only
# through the states, so the coupling is visible in the reflection terms too
atoms_a = path_a.dl_norm_series.sum()
atoms_b = path_b.dl_norm_series.sum()
print(f"\nreflection effort Var(L): {atoms_a:.4f} vs {atoms_b:.4f}")
