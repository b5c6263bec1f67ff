"""One reflected trajectory, watched closely.

A forced, damped, noisy fluid state starts inside the unit ball, gets pushed
against the boundary by the forcing, and from then on the penalty stage keeps
it (almost) inside: every time a step overshoots, the resolvent pulls the
state back and the pullback accumulates in the bounded-variation process L.
The table shows the energy |u|_H saturating near 1, the overshoot staying at
the size of one step, and Var(L) growing only while the state presses against
the boundary.
"""

import numpy as np

from reflectx import (
    CoefficientSet,
    PenaltyRunConfig,
    mode_field,
    norm_h,
    simulate_path,
)

K = 8
dt = 1e-3
coeffs = CoefficientSet(
    nu=0.05, gamma=0.5,
    f_const=mode_field(K, [(1, 0, 1.6), (0, 1, 1.2, 0.5)]),
    f_lin=0.0,
    sigma_const=mode_field(K, [(1, -1, 0.12)]),
    sigma_lin=0.0,
)
cfg = PenaltyRunConfig(
    n_penalty=200.0, dt=dt, T=0.6, cutoff=K, seed=42,
    coefficient_set=coeffs,
    u0=mode_field(K, [(1, 0, 0.7), (0, 1, 0.5, 0.5)]),
    snapshot_stride=60,
)
path = simulate_path(cfg)

print(f"penalty strength n = {cfg.n_penalty:g}, dt = {cfg.dt:g}, "
      f"resolvent parameter a = n dt = {cfg.resolvent_strength:g}\n")

print(f"{'t':>5} {'|u|_H':>8} {'overshoot':>10} {'Var(L)':>8} {'int V-norm^2':>13}")
for idx in path.snapshot_indices:
    print(
        f"{path.times[idx]:5.2f} {path.energy_series[idx]:8.5f}"
        f" {path.penetration_series[idx]:10.2e} {path.var_L[idx]:8.4f}"
        f" {path.v_norm_integral[idx]:13.4f}"
    )

active = path.dl_norm_series > 0
first = int(np.argmax(active)) if active.any() else -1
print(f"\nfirst reflection at t = {path.times[first]:.3f}; after that "
      f"{active[first:].mean():.1%} of steps touch the boundary")
print(f"max overshoot (|u|_H - 1)+ along the path: "
      f"{path.penetration_series.max():.2e}  (steady-state balance "
      f"forcing/n = {norm_h(coeffs.f_const) / cfg.n_penalty:.2e})")
print(f"total variation of L: {path.var_L_total:.4f} spread over "
      f"{int(active.sum())} atoms")
print("\nevery atom of L happens at |u|_H > 1 and acts radially inward;")
print("the reflection never pushes, it only restrains.")
