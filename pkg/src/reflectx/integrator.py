"""Penalized time integrator producing trajectory pairs (u, L).

One step is a Lie splitting of the evolution into a soft stage and a proximal
penalty stage:

    w  = exp(-dt (nu|k|^2 + gamma)) * [u + dt (B(u,u) + f(u)) + sigma(u) dW]
    u' = resolvent of the penalty at w:  u' + a (u' - proj(u')) = w,  a = n dt
    dL = u' - w

The linear stage uses the exact diagonal exponential, so viscosity imposes no
step-size restriction.  The penalty stage is the proximal map of the distance
potential scaled by n dt; its closed-form radial solution is unconditionally
stable, which is what makes large-n studies affordable (an explicit penalty
term would force dt = O(1/n)).  The resolvent never increases the norm, so the
post-step state satisfies the penetration bound (|u'| - 1)+ <= (|w| - 1)/(1+a).

L increments are attributed at the step's right endpoint and L is piecewise
constant in between, so downstream Stieltjes sums pair each atom with the
state at the atom's own time.

Scalar observables (energy, instantaneous V-norm, penetration, |dL|, running
variation and running integral of the squared V-norm) are recorded at every
step regardless of snapshot stride; field snapshots of u and L are kept every
snapshot_stride steps plus the final time.
"""

from __future__ import annotations

import dataclasses
from typing import Optional, Sequence

import numpy as np

from .fields import (
    BallGeometry,
    SpectralField,
    UNIT_BALL,
    _require_same_cutoff,
    _wrap,
    norm_h,
)
from .operators import CoefficientSet, SpectralGrid, drift_f, noise_sigma, nonlinear_B

__all__ = [
    "PenaltyRunConfig",
    "ReflectionPath",
    "IntegrationError",
    "PathFailure",
    "EnsembleResult",
    "brownian_increments",
    "penalty_resolvent",
    "step",
    "simulate_path",
    "simulate_ensemble",
]

# any coefficient beyond this magnitude means the run is mis-configured; the
# reflected dynamics themselves are confined to the ball
BLOWUP_GUARD = 1e12

_GRID_REL_TOL = 1e-8


class IntegrationError(RuntimeError):
    """Blow-up or non-finite state; carries the failing step and time."""

    def __init__(self, message: str, step_index: int, time: float, member: int = 0):
        super().__init__(
            f"{message} (member {member}, step {step_index}, t = {time:.6g})"
        )
        self.step_index = step_index
        self.time = time
        self.member = member


@dataclasses.dataclass(frozen=True)
class PathFailure:
    member: int
    step_index: int
    time: float
    reason: str


@dataclasses.dataclass(frozen=True)
class PenaltyRunConfig:
    """One penalized run: penalty strength, grid, horizon, seed, coefficients.

    lambda_weight is the exponent of the Cauchy-gap weight used downstream;
    values must exceed 4 for the weighted gap to contract.
    """

    n_penalty: float
    dt: float
    T: float
    cutoff: int
    seed: int
    coefficient_set: CoefficientSet
    u0: SpectralField
    snapshot_stride: int = 1
    lambda_weight: float = 8.0
    ball: BallGeometry = UNIT_BALL

    def __post_init__(self):
        if not (self.n_penalty > 0.0 and np.isfinite(self.n_penalty)):
            raise ValueError(f"penalty strength must be positive, got {self.n_penalty}")
        if not (self.dt > 0.0 and np.isfinite(self.dt)):
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not (self.T >= self.dt):
            raise ValueError(f"horizon T = {self.T} shorter than one step dt = {self.dt}")
        if int(self.snapshot_stride) < 1:
            raise ValueError(f"snapshot_stride must be >= 1, got {self.snapshot_stride}")
        object.__setattr__(self, "snapshot_stride", int(self.snapshot_stride))
        object.__setattr__(self, "cutoff", int(self.cutoff))
        object.__setattr__(self, "seed", int(self.seed))
        if self.lambda_weight <= 4.0:
            raise ValueError(
                f"lambda_weight must exceed 4, got {self.lambda_weight}"
            )
        if self.coefficient_set.cutoff != self.cutoff:
            raise ValueError(
                f"coefficient fields live at cutoff {self.coefficient_set.cutoff}, "
                f"config says {self.cutoff}"
            )
        if self.u0.cutoff != self.cutoff:
            raise ValueError(
                f"u0 lives at cutoff {self.u0.cutoff}, config says {self.cutoff}"
            )
        r0 = norm_h(self.u0)
        if r0 > self.ball.radius * (1.0 + 1e-12):
            raise ValueError(
                f"|u0|_H = {r0:.6g} outside the ball of radius {self.ball.radius}: "
                f"initial data must start inside the constraint set"
            )
        steps = round(self.T / self.dt)
        if steps < 1 or abs(steps * self.dt - self.T) > _GRID_REL_TOL * max(self.T, 1.0):
            raise ValueError(
                f"T = {self.T} is not an integer multiple of dt = {self.dt}"
            )

    @property
    def steps(self) -> int:
        return round(self.T / self.dt)

    @property
    def resolvent_strength(self) -> float:
        """a = n dt, the proximal parameter of the penalty stage."""
        return self.n_penalty * self.dt


@dataclasses.dataclass(frozen=True)
class ReflectionPath:
    """One trajectory pair (u, L) plus every per-step scalar observable.

    times is the full step grid; u_snapshots/L_snapshots hold fields at
    times[snapshot_indices].  Scalar series run at full step resolution:
    energy_series = |u(t_j)|_H, v_norm_series = V-norm of u(t_j),
    penetration_series = (|u(t_j)|_H - 1)+, dl_norm_series = |dL_j|_H (zero at
    j = 0), var_L = running sum of |dL|_H, v_norm_integral = running
    left-endpoint sum of dt * (V-norm)^2.  probe_projections optionally holds
    inner_h(u(t_j), p) for a fixed tuple of probe fields, recorded in-step so
    inequality checks can rebuild test-path pairings without storing fields.
    """

    config: PenaltyRunConfig
    times: np.ndarray
    snapshot_indices: np.ndarray
    u_snapshots: tuple
    L_snapshots: tuple
    energy_series: np.ndarray
    v_norm_series: np.ndarray
    penetration_series: np.ndarray
    penetration_max: np.ndarray
    dl_norm_series: np.ndarray
    var_L: np.ndarray
    v_norm_integral: np.ndarray
    probes: tuple = ()
    probe_projections: Optional[np.ndarray] = None

    @property
    def snapshot_times(self) -> np.ndarray:
        return self.times[self.snapshot_indices]

    @property
    def var_L_total(self) -> float:
        return float(self.var_L[-1])

    @property
    def v_norm_integral_total(self) -> float:
        return float(self.v_norm_integral[-1])

    @property
    def final_u(self) -> SpectralField:
        return self.u_snapshots[-1]

    @property
    def final_L(self) -> SpectralField:
        return self.L_snapshots[-1]


@dataclasses.dataclass(frozen=True)
class EnsembleResult:
    """Paths by member index (None where the member failed) plus failures."""

    paths: tuple
    failures: tuple

    @property
    def completed(self) -> list:
        return [p for p in self.paths if p is not None]


def brownian_increments(seed, steps: int, dt: float, noise_dim: int = 1) -> np.ndarray:
    """Gaussian increments, shape (steps, noise_dim), each with variance dt.

    Deterministic in seed; penalty strength never enters, so runs at different
    n with equal seeds consume the identical sequence (common random numbers).
    """
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    rng = np.random.default_rng(seed)
    return rng.standard_normal((int(steps), int(noise_dim))) * np.sqrt(dt)


def _resolvent_factor(r, a: float, radius: float):
    """Scale on w solving the radial penalty fixed point; r is |w|_H."""
    r = np.asarray(r, dtype=np.float64)
    inside = r <= radius
    safe_r = np.where(inside, 1.0, r)
    factor = np.where(inside, 1.0, (r + a * radius) / ((1.0 + a) * safe_r))
    return factor


def penalty_resolvent(w: SpectralField, a: float, ball: BallGeometry = UNIT_BALL):
    """Solve v + a (v - proj(v)) = w; returns (v, dL) with dL = v - w.

    The solution is radial: v = w when |w| <= radius, otherwise v is w scaled
    to norm (|w| + a radius)/(1 + a).  For a -> infinity this tends to the
    hard projection onto the ball.
    """
    if not (a >= 0.0):
        raise ValueError(f"resolvent strength must be >= 0, got {a}")
    r = norm_h(w)
    factor = float(_resolvent_factor(r, a, ball.radius))
    v = _wrap(w.cutoff, w.coeffs * factor)
    dl = _wrap(w.cutoff, w.coeffs * (factor - 1.0))
    return v, dl


def step(u: SpectralField, dW, cfg: PenaltyRunConfig):
    """One full step; returns (u', dL).  Reference single-field implementation.

    The ensemble engine vectorizes the identical arithmetic over members; the
    two are cross-checked in the test suite.
    """
    cset = cfg.coefficient_set
    dw = np.atleast_1d(np.asarray(dW, dtype=np.float64))
    if dw.shape != (cset.noise_dim,):
        raise ValueError(
            f"dW has shape {dw.shape}, expected ({cset.noise_dim},)"
        )
    drift = nonlinear_B(u, u) + drift_f(u, cset)
    w = u + cfg.dt * drift
    w = w + float(dw[0]) * noise_sigma(u, cset)
    for i, extra in enumerate(cset.sigma_extra):
        w = w + float(dw[i + 1]) * extra
    grid = SpectralGrid.get(cfg.cutoff)
    decay = np.exp(-cfg.dt * grid.multiplier(cset.nu, cset.gamma))
    w = _wrap(cfg.cutoff, w.coeffs * decay)
    r = norm_h(w)
    if not np.isfinite(r) or r > BLOWUP_GUARD:
        raise IntegrationError("non-finite or blown-up state", -1, float("nan"))
    return penalty_resolvent(w, cfg.resolvent_strength, cfg.ball)


def _snapshot_indices(steps: int, stride: int) -> np.ndarray:
    idx = list(range(0, steps + 1, stride))
    if idx[-1] != steps:
        idx.append(steps)
    return np.asarray(idx, dtype=np.int64)


def _member_increments(seeds, steps: int, dt: float, noise_dim: int) -> np.ndarray:
    out = np.empty((len(seeds), steps, noise_dim), dtype=np.float64)
    for b, s in enumerate(seeds):
        out[b] = brownian_increments(s, steps, dt, noise_dim)
    return out


def _simulate_batch(cfg: PenaltyRunConfig, seeds: Sequence[int],
                    increments: Optional[np.ndarray] = None,
                    probes: Sequence[SpectralField] = ()):
    """Vectorized member loop; returns (paths, failures) ordered by member."""
    cset = cfg.coefficient_set
    grid = SpectralGrid.get(cfg.cutoff)
    steps = cfg.steps
    dt = cfg.dt
    a = cfg.resolvent_strength
    radius = cfg.ball.radius
    nb = len(seeds)
    m = grid.modes

    if increments is None:
        increments = _member_increments(seeds, steps, dt, cset.noise_dim)
    else:
        increments = np.asarray(increments, dtype=np.float64)
        if increments.shape != (nb, steps, cset.noise_dim):
            raise ValueError(
                f"increments have shape {increments.shape}, expected "
                f"({nb}, {steps}, {cset.noise_dim})"
            )

    for p in probes:
        _require_same_cutoff(p, cfg.u0)
    probe_c = (
        np.stack([p.coeffs for p in probes]) if len(probes) else None
    )  # (P, 2, m, m)

    decay = np.exp(-dt * grid.multiplier(cset.nu, cset.gamma))
    vmult = grid.multiplier(cset.nu, cset.gamma)
    fc = cset.f_const.coeffs
    sc = cset.sigma_const.coeffs
    extras = [e.coeffs for e in cset.sigma_extra]

    c = np.broadcast_to(cfg.u0.coeffs, (nb, 2, m, m)).copy()
    ell = np.zeros_like(c)

    snap_idx = _snapshot_indices(steps, cfg.snapshot_stride)
    snap_positions = {int(j): s for s, j in enumerate(snap_idx)}
    ns = len(snap_idx)
    u_snap = np.empty((nb, ns, 2, m, m), dtype=np.complex128)
    l_snap = np.empty((nb, ns, 2, m, m), dtype=np.complex128)

    energy = np.empty((nb, steps + 1))
    vnorm = np.empty((nb, steps + 1))
    dl_norm = np.zeros((nb, steps + 1))
    v2dt = np.empty((nb, steps))
    proj = (
        np.empty((nb, len(probes), steps + 1)) if probe_c is not None else None
    )

    failed = np.zeros(nb, dtype=bool)
    fail_step = np.full(nb, -1, dtype=np.int64)

    # per-call scratch buffers; the loop reuses them to stay allocation-free
    abs2 = np.empty((nb, 2, m, m))
    abs2_im = np.empty((nb, 2, m, m))
    w = np.empty((nb, 2, m, m), dtype=np.complex128)
    noise_buf = np.empty((nb, 2, m, m), dtype=np.complex128)
    fc_dt = dt * fc

    def record_state(j):
        np.multiply(c.real, c.real, out=abs2)
        np.multiply(c.imag, c.imag, out=abs2_im)
        np.add(abs2, abs2_im, out=abs2)
        h2 = abs2.sum(axis=(1, 2, 3))
        v2 = (abs2.sum(axis=1) * vmult).sum(axis=(1, 2))
        energy[:, j] = np.sqrt(h2)
        vnorm[:, j] = np.sqrt(v2)
        if j < steps:
            v2dt[:, j] = v2 * dt
        if proj is not None:
            proj[:, :, j] = np.einsum(
                "bcxy,pcxy->bp", c.real, probe_c.real, optimize=True
            ) + np.einsum("bcxy,pcxy->bp", c.imag, probe_c.imag, optimize=True)
        s = snap_positions.get(j)
        if s is not None:
            u_snap[:, s] = c
            l_snap[:, s] = ell

    record_state(0)
    one_minus_flin = 1.0 - dt * cset.f_lin
    for j in range(steps):
        b = grid.convect(c)
        np.multiply(c, one_minus_flin, out=w)
        b *= dt
        w += b
        w += fc_dt
        dw0 = increments[:, j, 0][:, None, None, None]
        np.multiply(sc, dw0, out=noise_buf)
        w += noise_buf
        if cset.sigma_lin != 0.0:
            np.multiply(c, dw0, out=noise_buf)
            noise_buf *= cset.sigma_lin
            w += noise_buf
        for i, e in enumerate(extras):
            np.multiply(e, increments[:, j, i + 1][:, None, None, None],
                        out=noise_buf)
            w += noise_buf
        w *= decay
        np.multiply(w.real, w.real, out=abs2)
        np.multiply(w.imag, w.imag, out=abs2_im)
        abs2 += abs2_im
        r = np.sqrt(abs2.sum(axis=(1, 2, 3)))

        bad = (~np.isfinite(r)) | (r > BLOWUP_GUARD)
        new_bad = bad & ~failed
        if new_bad.any():
            fail_step[new_bad] = j + 1
            failed |= new_bad
        if failed.any():
            # freeze failed members at zero; their outputs are discarded
            w[failed] = 0.0
            ell[failed] = 0.0
            r[failed] = 0.0

        factor = _resolvent_factor(r, a, radius)
        dl_norm[:, j + 1] = np.where(r > radius, a * (r - radius) / (1.0 + a), 0.0)
        np.multiply(w, factor[:, None, None, None], out=c)
        ell += c
        ell -= w
        record_state(j + 1)

    dl_norm[failed] = 0.0
    var_l = np.cumsum(dl_norm, axis=1)
    vint = np.zeros((nb, steps + 1))
    np.cumsum(v2dt, axis=1, out=vint[:, 1:])
    pen = np.maximum(energy - radius, 0.0)
    times = dt * np.arange(steps + 1)

    for arr in (u_snap, l_snap):
        arr.setflags(write=False)

    paths = []
    failures = []
    probes_t = tuple(probes)
    for bidx, seed in enumerate(seeds):
        if failed[bidx]:
            j = int(fail_step[bidx])
            failures.append(
                PathFailure(bidx, j, float(times[j]), "non-finite or blown-up state")
            )
            paths.append(None)
            continue
        member_cfg = (
            cfg if cfg.seed == int(seed) and nb == 1
            else dataclasses.replace(cfg, seed=int(seed))
        )
        paths.append(ReflectionPath(
            config=member_cfg,
            times=times,
            snapshot_indices=snap_idx,
            u_snapshots=tuple(_wrap(cfg.cutoff, u_snap[bidx, s]) for s in range(ns)),
            L_snapshots=tuple(_wrap(cfg.cutoff, l_snap[bidx, s]) for s in range(ns)),
            energy_series=energy[bidx],
            v_norm_series=vnorm[bidx],
            penetration_series=pen[bidx],
            penetration_max=np.maximum.accumulate(pen[bidx]),
            dl_norm_series=dl_norm[bidx],
            var_L=var_l[bidx],
            v_norm_integral=vint[bidx],
            probes=probes_t,
            probe_projections=proj[bidx] if proj is not None else None,
        ))
    return paths, failures


def simulate_path(cfg: PenaltyRunConfig,
                  increments: Optional[np.ndarray] = None,
                  probes: Sequence[SpectralField] = ()) -> ReflectionPath:
    """Integrate one full path; reproducible from cfg.seed.

    increments, when given, replace the seed-derived Brownian increments
    (shape (steps, noise_dim)); used for coupling runs across penalty levels
    on one underlying Brownian path at different resolutions.
    """
    inc = None
    if increments is not None:
        inc = np.asarray(increments, dtype=np.float64)
        if inc.ndim == 2:
            inc = inc[None]
    paths, failures = _simulate_batch(cfg, [cfg.seed], inc, probes)
    if failures:
        f = failures[0]
        raise IntegrationError(f.reason, f.step_index, f.time, f.member)
    return paths[0]


def simulate_ensemble(cfg: PenaltyRunConfig, seeds: Sequence[int],
                      increments: Optional[np.ndarray] = None,
                      probes: Sequence[SpectralField] = (),
                      chunk_size: int = 64) -> EnsembleResult:
    """Integrate one path per seed; members are mutually independent.

    Members run in fixed-size chunks so results do not depend on how the work
    is scheduled; a failed member is reported in failures and leaves a None
    at its position instead of aborting the whole ensemble.
    """
    if len(seeds) == 0:
        raise ValueError("ensemble needs at least one seed")
    if chunk_size < 1:
        raise ValueError(f"chunk_size must be >= 1, got {chunk_size}")
    paths: list = []
    failures: list = []
    for start in range(0, len(seeds), chunk_size):
        chunk = list(seeds[start:start + chunk_size])
        inc = None if increments is None else increments[start:start + chunk_size]
        got, fails = _simulate_batch(cfg, chunk, inc, probes)
        paths.extend(got)
        failures.extend(
            dataclasses.replace(f, member=f.member + start) for f in fails
        )
    return EnsembleResult(paths=tuple(paths), failures=tuple(failures))
