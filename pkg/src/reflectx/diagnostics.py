"""Path diagnostics: variation, Stieltjes sums, inequalities, moment estimates.

Conventions, shared with the integrator: L is piecewise constant between grid
points with its atom at the step's right endpoint, so every Stieltjes sum
pairs the integrand value at an atom's own time with that atom.  With the
radial inward increments the penalty produces, each term of the variational
inequality sum is then nonnegative up to roundoff whenever the test path
stays in the ball, which is what makes the inequality checkable at tolerance
1e-8 * Var(L) rather than at a discretization-limited tolerance.

The inequality check can run on two routes: a scalar route using per-step
probe projections recorded by the integrator (full step resolution, no field
storage), or a field route over stored snapshots.  The scalar route is exact
for test paths spanned by the recorded probes; the field route on a coarse
snapshot grid merges increments and is only approximate, so checks that must
certify the inequality use recorded projections or snapshot stride 1.
"""

from __future__ import annotations

import dataclasses
import math
from typing import Optional, Sequence

import numpy as np

from .fields import SpectralField, _wrap, inner_h, mode_field, norm_h, norm_v
from .integrator import ReflectionPath

__all__ = [
    "Estimate",
    "DiagnosticsReport",
    "probe_basis",
    "total_variation",
    "stieltjes_integral",
    "variational_inequality_check",
    "vi_for_state_projection",
    "vi_for_zero",
    "boundary_support_integral",
    "moment_estimates",
    "cauchy_gap",
    "uniqueness_gap",
    "VI_TOLERANCE",
]

VI_TOLERANCE = 1e-8

_PROBE_WAVEVECTORS = [
    (1, 0), (0, 1), (1, 1), (1, -1),
    (2, 0), (0, 2), (2, 1), (1, 2),
    (2, -1), (1, -2), (2, 2), (2, -2),
    (3, 0), (0, 3), (3, 1), (1, 3),
]


@dataclasses.dataclass(frozen=True)
class Estimate:
    """Sample mean with its standard error and sample count."""

    value: float
    stderr: float
    n_samples: int

    @staticmethod
    def from_samples(samples: Sequence[float]) -> "Estimate":
        arr = np.asarray(samples, dtype=np.float64)
        if arr.size == 0:
            raise ValueError("estimate needs at least one sample")
        # a single sample carries no spread information; report stderr 0
        se = float(arr.std(ddof=1) / np.sqrt(arr.size)) if arr.size > 1 else 0.0
        return Estimate(float(arr.mean()), se, int(arr.size))


@dataclasses.dataclass(frozen=True)
class DiagnosticsReport:
    """Every per-level estimate the analysis bounds, with sampling error.

    e_sup_u4:            E sup_t |u|_H^4
    penalty_dissipation: n E int |u|^2 (u, u - proj u) dt
    var_L_sq:            E [Var(L)^2]
    v_norm_budget:       E int (V-norm of u)^2 dt
    sup_penetration4:    E sup_t (|u|_H - 1)+^4
    support_leak:        mean fraction of Var(L) spent while |u| <= 1 - eps
    m2_norm:             E [sup_t |u|^2 + int (V-norm)^2 dt]
    vi_min/vi_violations: worst sampled variational-inequality value and the
                          count below -vi_tol * Var(L), when the check ran
    cauchy_gaps:         (n, m) -> weighted gap estimate across penalty levels
    """

    n_penalty: float
    sample_count: int
    e_sup_u4: Estimate
    penalty_dissipation: Estimate
    var_L_sq: Estimate
    v_norm_budget: Estimate
    sup_penetration4: Estimate
    support_leak: Estimate
    m2_norm: Estimate
    support_eps: float
    vi_min: Optional[float] = None
    vi_violations: Optional[int] = None
    vi_trials: int = 0
    vi_tol: float = VI_TOLERANCE
    cauchy_gaps: dict = dataclasses.field(default_factory=dict)

    def __post_init__(self):
        leak = self.support_leak.value
        if not (-1e-12 <= leak <= 1.0 + 1e-12):
            raise ValueError(f"support leak {leak} outside [0, 1]")

    def estimator_rows(self):
        """(name, estimate, stderr, n_samples) rows for the summary table."""
        out = []
        for name in ("e_sup_u4", "penalty_dissipation", "var_L_sq",
                     "v_norm_budget", "sup_penetration4", "support_leak",
                     "m2_norm"):
            est: Estimate = getattr(self, name)
            out.append((name, est.value, est.stderr, est.n_samples))
        return out


def probe_basis(cutoff: int, count: int = 16) -> tuple:
    """Canonical orthonormal probe fields spanning the low modes.

    Two fields per wavevector (cosine and sine time phases of the same shear
    mode), unit H-norm each, mutually orthonormal.  Probes recorded during
    integration let inequality checks rebuild test-path projections at full
    step resolution.
    """
    if count < 1 or count > 2 * len(_PROBE_WAVEVECTORS):
        raise ValueError(
            f"count must be in [1, {2 * len(_PROBE_WAVEVECTORS)}], got {count}"
        )
    need = max(max(abs(kx), abs(ky))
               for kx, ky in _PROBE_WAVEVECTORS[:(count + 1) // 2])
    if cutoff < need:
        raise ValueError(
            f"cutoff {cutoff} too small for {count} probes (needs >= {need})"
        )
    probes = []
    for kx, ky in _PROBE_WAVEVECTORS:
        for phase in (0.0, 0.5 * np.pi):
            if len(probes) == count:
                return tuple(probes)
            probes.append(mode_field(cutoff, [(kx, ky, 1.0, phase)]))
    return tuple(probes)


def total_variation(values: Sequence[SpectralField], partition: Sequence[int]) -> float:
    """Sum of H-norm increments of `values` over the index partition."""
    idx = list(partition)
    if len(idx) < 2:
        raise ValueError("partition needs at least two indices")
    if idx[0] != 0 or idx[-1] != len(values) - 1:
        raise ValueError("partition must contain the first and last indices")
    if any(b <= a for a, b in zip(idx, idx[1:])):
        raise ValueError("partition indices must be strictly increasing")
    return float(sum(
        norm_h(values[b] - values[a]) for a, b in zip(idx, idx[1:])
    ))


def stieltjes_integral(integrand: Sequence[SpectralField],
                       L: Sequence[SpectralField]) -> float:
    """Sum of inner_h(integrand at each atom time, that atom of L).

    L is piecewise constant with atoms at grid points; the atom at index j is
    L[j] - L[j-1] and pairs with integrand[j].
    """
    if len(integrand) != len(L):
        raise ValueError(
            f"integrand ({len(integrand)}) and L ({len(L)}) grids differ"
        )
    total = 0.0
    for j in range(1, len(L)):
        total += inner_h(integrand[j], L[j] - L[j - 1])
    return total


def _trial_envelopes(rng: np.random.Generator, n_probes: int,
                     times: np.ndarray, horizon: float) -> np.ndarray:
    """Smooth random time envelopes, one per probe: g cos(2 pi f t/T + theta)."""
    g = rng.standard_normal(n_probes)
    freq = rng.integers(0, 4, n_probes).astype(np.float64)
    theta = rng.uniform(0.0, 2.0 * np.pi, n_probes)
    arg = (2.0 * np.pi / horizon) * freq[:, None] * times[None, :]
    return g[:, None] * np.cos(arg + theta[:, None])


def _vi_scalar_route(path: ReflectionPath, dot_u: np.ndarray) -> float:
    """VI sum from scalars: dot_u[j] = inner_h(test path at t_j, u(t_j))."""
    dl = path.dl_norm_series
    active = dl > 0.0
    if not active.any():
        return 0.0
    r = path.energy_series[active]
    return float(np.sum(dl[active] * (r - dot_u[active] / r)))


def vi_for_state_projection(path: ReflectionPath) -> float:
    """Inequality value for the test path proj(u): equals sum dl * penetration."""
    return float(np.sum(path.dl_norm_series * path.penetration_series))


def vi_for_zero(path: ReflectionPath) -> float:
    """Inequality value for the zero test path: sum dl * |u| at atom times."""
    return float(np.sum(path.dl_norm_series * path.energy_series))


def variational_inequality_check(path: ReflectionPath, trials: int, seed) -> tuple:
    """Sample ball-valued test paths; return (vi_min, violations).

    Each trial draws random smooth time envelopes over the probe basis,
    rescales the curve into the ball globally, and evaluates the Stieltjes
    sum of (test path - u) against L.  violations counts trials below
    -VI_TOLERANCE * Var(L).

    Uses recorded probe projections when the path has them (exact at full
    step resolution); otherwise evaluates fields on the snapshot grid, which
    requires snapshot stride 1 to see every increment.
    """
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    rng = np.random.default_rng(seed)
    var_total = path.var_L_total
    threshold = -VI_TOLERANCE * var_total

    scalar_route = path.probe_projections is not None and len(path.probes) > 0
    if scalar_route:
        probes = path.probes
        times = path.times
    else:
        probes = probe_basis(path.config.cutoff)
        times = path.snapshot_times

    n_probes = len(probes)
    gram = np.array([[inner_h(a, b) for b in probes] for a in probes])
    horizon = float(path.config.T)

    values = np.empty(trials)
    for t in range(trials):
        env = _trial_envelopes(rng, n_probes, times, horizon)
        norm_sq = np.einsum("it,ij,jt->t", env, gram, env)
        scale = 1.0 / max(1.0, math.sqrt(float(norm_sq.max())))
        env *= scale
        if scalar_route:
            dot_u = np.einsum("it,it->t", env, path.probe_projections)
            values[t] = _vi_scalar_route(path, dot_u)
        else:
            integrand = []
            for s in range(len(times)):
                c = sum(env[i, s] * probes[i].coeffs for i in range(n_probes))
                integrand.append(
                    _wrap(path.config.cutoff, c) - path.u_snapshots[s]
                )
            values[t] = stieltjes_integral(integrand, path.L_snapshots)

    vi_min = float(values.min())
    violations = int(np.sum(values < threshold))
    return vi_min, violations


def boundary_support_integral(path: ReflectionPath, eps: float) -> float:
    """Fraction of Var(L) accumulated while |u|_H <= 1 - eps at atom times.

    Zero for a path whose reflection only acts at the boundary; the
    normalized value lies in [0, 1] and 0 is returned when Var(L) = 0.
    """
    if not (0.0 < eps < 1.0):
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    var_total = path.var_L_total
    if var_total == 0.0:
        return 0.0
    radius = path.config.ball.radius
    inside = path.energy_series <= radius - eps
    leak = float(np.sum(path.dl_norm_series[inside]))
    return leak / var_total


def _check_ensemble_consistency(paths: Sequence[ReflectionPath], cfg) -> None:
    for p in paths:
        c = p.config
        same = (
            c.n_penalty == cfg.n_penalty and c.dt == cfg.dt and c.T == cfg.T
            and c.cutoff == cfg.cutoff
            and c.coefficient_set.nu == cfg.coefficient_set.nu
            and c.coefficient_set.gamma == cfg.coefficient_set.gamma
        )
        if not same:
            raise ValueError(
                "ensemble paths must share the configuration up to the seed"
            )


def moment_estimates(ensemble: Sequence[ReflectionPath], cfg,
                     support_eps: float = 0.05,
                     vi_trials: int = 0, vi_seed: int = 0) -> DiagnosticsReport:
    """Sample means and standard errors of every per-path functional.

    Accepts a single path (standard errors are then zero).  With vi_trials
    > 0 the variational inequality is sampled per path and the worst value
    and total violation count across the ensemble are reported.
    """
    paths = list(ensemble)
    if not paths:
        raise ValueError("moment_estimates needs a nonempty ensemble")
    _check_ensemble_consistency(paths, cfg)
    dt = cfg.dt
    n = cfg.n_penalty

    sup_u4, dissip, var_sq, v_budget, sup_pen4, leak, m2 = ([] for _ in range(7))
    for p in paths:
        r = p.energy_series
        pen = p.penetration_series
        sup_u4.append(float(r.max()) ** 4)
        # left-endpoint rule; (u, u - proj u) = |u| (|u| - 1)+ per radiality
        dissip.append(n * dt * float(np.sum(r[:-1] ** 3 * pen[:-1])))
        var_sq.append(p.var_L_total ** 2)
        v_budget.append(p.v_norm_integral_total)
        sup_pen4.append(float(pen.max()) ** 4)
        leak.append(boundary_support_integral(p, support_eps))
        m2.append(float(r.max()) ** 2 + p.v_norm_integral_total)

    vi_min = None
    vi_violations = None
    if vi_trials > 0:
        worst = np.inf
        count = 0
        for k, p in enumerate(paths):
            v, c = variational_inequality_check(p, vi_trials, vi_seed + k)
            worst = min(worst, v)
            count += c
        vi_min = float(worst)
        vi_violations = int(count)

    return DiagnosticsReport(
        n_penalty=n,
        sample_count=len(paths),
        e_sup_u4=Estimate.from_samples(sup_u4),
        penalty_dissipation=Estimate.from_samples(dissip),
        var_L_sq=Estimate.from_samples(var_sq),
        v_norm_budget=Estimate.from_samples(v_budget),
        sup_penetration4=Estimate.from_samples(sup_pen4),
        support_leak=Estimate.from_samples(leak),
        m2_norm=Estimate.from_samples(m2),
        support_eps=support_eps,
        vi_min=vi_min,
        vi_violations=vi_violations,
        vi_trials=vi_trials,
    )


def _aligned_snapshot_times(a: ReflectionPath, b: ReflectionPath) -> np.ndarray:
    ta, tb = a.snapshot_times, b.snapshot_times
    if len(ta) != len(tb) or not np.allclose(ta, tb, rtol=0.0, atol=1e-12):
        raise ValueError(
            "paths do not share a snapshot grid; align snapshot strides first"
        )
    return ta


def cauchy_gap(path_n: ReflectionPath, path_m: ReflectionPath,
               lam: Optional[float] = None) -> float:
    """Weighted gap between two penalty levels driven by one Brownian path.

    With f(t) = exp(-lam * int_0^t (V-norm of u_n)^2 ds) built from path_n,
    returns sup_t f(t) |u_n - u_m|_H^2 + sum_t f(t) (V-norm of u_n - u_m)^2 dt
    over the shared snapshot grid.  lam defaults to path_n's lambda_weight
    and must exceed 4 for the weight to beat the convection growth.
    """
    if lam is None:
        lam = path_n.config.lambda_weight
    if lam <= 4.0:
        raise ValueError(f"weight exponent must exceed 4, got {lam}")
    if path_n.config.seed != path_m.config.seed:
        raise ValueError(
            "gap requires common random numbers: seeds "
            f"{path_n.config.seed} != {path_m.config.seed}"
        )
    times = _aligned_snapshot_times(path_n, path_m)
    cset = path_n.config.coefficient_set
    weights = np.exp(-lam * path_n.v_norm_integral[path_n.snapshot_indices])

    sup_term = 0.0
    integral_term = 0.0
    spacing = np.diff(times)
    for s in range(len(times)):
        diff = path_n.u_snapshots[s] - path_m.u_snapshots[s]
        h2 = inner_h(diff, diff)
        sup_term = max(sup_term, weights[s] * h2)
        if s < len(times) - 1:
            v2 = norm_v(diff, cset.nu, cset.gamma) ** 2
            integral_term += weights[s] * v2 * spacing[s]
    return sup_term + integral_term


def uniqueness_gap(path_a: ReflectionPath, path_b: ReflectionPath) -> float:
    """sup_t h(t) |u_a - u_b|_H^2 with h(t) = exp(-4 int (V-norm of u_a)^2).

    A stability diagnostic for two runs with the same penalty level and
    Brownian path but possibly different initial data.
    """
    if path_a.config.seed != path_b.config.seed:
        raise ValueError("uniqueness gap requires a shared Brownian seed")
    if path_a.config.n_penalty != path_b.config.n_penalty:
        raise ValueError("uniqueness gap compares runs at one penalty level")
    _aligned_snapshot_times(path_a, path_b)
    h = np.exp(-4.0 * path_a.v_norm_integral[path_a.snapshot_indices])
    gap = 0.0
    for s in range(len(h)):
        diff = path_a.u_snapshots[s] - path_b.u_snapshots[s]
        gap = max(gap, h[s] * inner_h(diff, diff))
    return float(gap)
