"""Divergence-free spectral velocity fields and unit-ball geometry.

A field is a real, divergence-free velocity on the periodic torus [0, 2pi)^2,
stored as the truncated Fourier series

    u(x) = sum_{|kx|<=K, |ky|<=K} c(k) exp(i k . x),        c(k) in C^2,

with Hermitian symmetry c(-k) = conj(c(k)) and k . c(k) = 0 for k != 0.
The H inner product is normalized so that

    inner_h(u, v) = (2pi)^{-2} integral_{T^2} u . v dx = sum_k Re <c_u(k), conj c_v(k)>,

i.e. the Parseval constant in coefficient space is exactly 1.  The V norm uses
the diagonal multiplier nu*|k|^2 + gamma of the damped Stokes operator.

Ball geometry (projection, lambda, penetration, phi) is radial in the H norm
and is computed through closed forms in |u|_H rather than by subtracting
fields, to avoid cancellation near the boundary.
"""

from __future__ import annotations

import dataclasses
import functools
from typing import Iterable, NamedTuple

import numpy as np

__all__ = [
    "Wavevector",
    "SpectralField",
    "BallGeometry",
    "UNIT_BALL",
    "DimensionMismatchError",
    "zero_field",
    "mode_field",
    "random_field",
    "random_ball_field",
    "inner_h",
    "norm_h",
    "norm_v",
    "ball_project",
    "lambda_of",
    "penetration",
    "ball_distance_sq",
    "ball_distance_quartic",
    "phi_of",
    "save_field",
    "load_field",
]

FORMAT_HEADER = "# reflectx-format v1"

#: validation tolerances for construction-time invariants
_HERMITIAN_TOL = 1e-12
_DIVERGENCE_TOL = 1e-12


class DimensionMismatchError(ValueError):
    """Raised when two fields with different cutoffs are combined."""


class Wavevector(NamedTuple):
    kx: int
    ky: int


@dataclasses.dataclass(frozen=True)
class BallGeometry:
    """The closed ball B(0, radius) in H.  All production runs use radius 1."""

    radius: float = 1.0

    def __post_init__(self):
        if not (self.radius > 0.0 and np.isfinite(self.radius)):
            raise ValueError(f"ball radius must be a positive real, got {self.radius}")


UNIT_BALL = BallGeometry(1.0)


def _mode_range(cutoff: int) -> np.ndarray:
    return np.arange(-cutoff, cutoff + 1)


@dataclasses.dataclass(frozen=True)
class SpectralField:
    """Truncated Fourier coefficients of a real divergence-free velocity field.

    coeffs has shape (2, 2K+1, 2K+1); coeffs[c, K+kx, K+ky] is component c of
    the coefficient at wavevector (kx, ky).  Instances are immutable; the
    coefficient array is never mutated after construction.
    """

    cutoff: int
    coeffs: np.ndarray

    def __post_init__(self):
        k = int(self.cutoff)
        if k < 1:
            raise ValueError(f"cutoff must be a positive integer, got {self.cutoff}")
        object.__setattr__(self, "cutoff", k)
        c = np.ascontiguousarray(np.asarray(self.coeffs, dtype=np.complex128))
        m = 2 * k + 1
        if c.shape != (2, m, m):
            raise DimensionMismatchError(
                f"coefficient array must have shape (2, {m}, {m}) for cutoff {k}, "
                f"got {c.shape}"
            )
        if not np.isfinite(c.view(np.float64)).all():
            raise ValueError("coefficients must be finite")
        scale = float(np.max(np.abs(c))) or 1.0
        # mirror = coefficients at -k; Hermitian symmetry means c == conj(mirror)
        mirror = c[:, ::-1, ::-1]
        herm_defect = float(np.max(np.abs(c - mirror.conj())))
        if herm_defect > _HERMITIAN_TOL * scale:
            raise ValueError(
                f"field is not Hermitian-symmetric (defect {herm_defect:.3e}, "
                f"scale {scale:.3e}); physical-space values would be complex"
            )
        # symmetrize so the invariant holds exactly from here on; this also
        # forces the zero mode to be exactly real
        c = 0.5 * (c + mirror.conj())
        kvals = _mode_range(k).astype(np.float64)
        kx = kvals[:, None]
        ky = kvals[None, :]
        div = kx * c[0] + ky * c[1]
        cmag = np.sqrt(np.abs(c[0]) ** 2 + np.abs(c[1]) ** 2)
        bad = np.abs(div) > _DIVERGENCE_TOL * np.maximum(cmag, 1e-300)
        bad[k, k] = False  # zero mode carries the mean flow, no constraint
        if bad.any():
            i, j = np.argwhere(bad)[0]
            raise ValueError(
                f"field is not divergence-free at mode ({i - k}, {j - k}): "
                f"|k.c| = {abs(div[i, j]):.3e} vs |c| = {cmag[i, j]:.3e}"
            )
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    # linear operations preserve every construction invariant exactly
    # (IEEE addition and real scaling commute with conjugation), so results
    # skip re-validation
    def __add__(self, other: "SpectralField") -> "SpectralField":
        _require_same_cutoff(self, other)
        return _wrap(self.cutoff, self.coeffs + other.coeffs)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        _require_same_cutoff(self, other)
        return _wrap(self.cutoff, self.coeffs - other.coeffs)

    def __mul__(self, scalar) -> "SpectralField":
        s = float(scalar)
        return _wrap(self.cutoff, self.coeffs * s)

    __rmul__ = __mul__

    def __neg__(self) -> "SpectralField":
        return _wrap(self.cutoff, -self.coeffs)

    def coefficient(self, k: Wavevector | tuple) -> np.ndarray:
        """Complex 2-vector at wavevector k (copy)."""
        kx, ky = int(k[0]), int(k[1])
        if abs(kx) > self.cutoff or abs(ky) > self.cutoff:
            raise ValueError(f"wavevector ({kx}, {ky}) outside cutoff {self.cutoff}")
        return self.coeffs[:, self.cutoff + kx, self.cutoff + ky].copy()


def _require_same_cutoff(a: SpectralField, b: SpectralField) -> None:
    if a.cutoff != b.cutoff:
        raise DimensionMismatchError(
            f"fields have different cutoffs: {a.cutoff} vs {b.cutoff}"
        )


def _wrap(cutoff: int, coeffs: np.ndarray) -> SpectralField:
    """Wrap a coefficient array that is known to satisfy the invariants.

    Only for internal callers whose output is invariant-preserving by exact
    floating-point arithmetic (linear combinations, radial rescales, values
    produced by the integrator engine).  Public construction always validates.
    """
    f = object.__new__(SpectralField)
    coeffs.setflags(write=False)
    object.__setattr__(f, "cutoff", cutoff)
    object.__setattr__(f, "coeffs", coeffs)
    return f


def zero_field(cutoff: int) -> SpectralField:
    m = 2 * cutoff + 1
    return SpectralField(cutoff, np.zeros((2, m, m), dtype=np.complex128))


def mode_field(cutoff: int, modes: Iterable[tuple]) -> SpectralField:
    """Build a field from canonical divergence-free mode entries.

    Each entry is (kx, ky, amp, phase) with phase optional (default 0).  For
    k != 0 the entry adds amp * e^{i phase} along the unit direction
    k_perp/|k|, split between k and -k so that a single entry alone has
    |field|_H = amp.  The entry (0, 0, vx, vy) sets the mean-flow vector.
    """
    k = int(cutoff)
    m = 2 * k + 1
    c = np.zeros((2, m, m), dtype=np.complex128)
    for entry in modes:
        if len(entry) == 3:
            kx, ky, amp = entry
            phase = 0.0
        else:
            kx, ky, amp, phase = entry
        kx, ky = int(kx), int(ky)
        if abs(kx) > k or abs(ky) > k:
            raise ValueError(f"mode ({kx}, {ky}) outside cutoff {k}")
        if kx == 0 and ky == 0:
            # mean flow: third and fourth numbers are the vector components
            c[0, k, k] += float(amp)
            c[1, k, k] += float(phase)
            continue
        norm = float(np.hypot(kx, ky))
        direction = np.array([-ky / norm, kx / norm])  # k_perp / |k|
        half = (float(amp) / np.sqrt(2.0)) * np.exp(1j * float(phase))
        c[:, k + kx, k + ky] += half * direction
        c[:, k - kx, k - ky] += np.conj(half) * direction
    return SpectralField(k, c)


def random_field(
    cutoff: int,
    rng: np.random.Generator,
    decay: float = 2.0,
    rms: float = 1.0,
    include_mean: bool = False,
) -> SpectralField:
    """Random divergence-free field with spectrum ~ (1+|k|^2)^(-decay/2).

    The result is rescaled to |u|_H = rms exactly (rms = 0 gives the zero
    field).  Mean flow is zero unless include_mean is set.
    """
    k = int(cutoff)
    m = 2 * k + 1
    kvals = _mode_range(k).astype(np.float64)
    kx = kvals[:, None]
    ky = kvals[None, :]
    kmag = np.hypot(kx, ky)
    kmag[k, k] = 1.0  # avoid 0/0 at the mean mode; its direction is zeroed
    a = rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m))
    a *= (1.0 + kx * kx + ky * ky) ** (-decay / 2.0)
    c = np.empty((2, m, m), dtype=np.complex128)
    c[0] = a * (-ky / kmag)
    c[1] = a * (kx / kmag)
    # Hermitian-symmetrize; each mode stays along k_perp so the field remains
    # divergence-free, and the mean mode is annihilated
    c = 0.5 * (c + c[:, ::-1, ::-1].conj())
    if include_mean:
        c[:, k, k] = rng.standard_normal(2)
    raw = float(np.sqrt(np.sum(c.real**2 + c.imag**2)))
    if raw > 0.0 and rms >= 0.0:
        c *= float(rms) / raw
    return _wrap(k, np.ascontiguousarray(c))


def random_ball_field(
    cutoff: int, rng: np.random.Generator, decay: float = 2.0, radius: float = 1.0
) -> SpectralField:
    """Random field with |u|_H uniform on (0, radius): a point inside the ball."""
    return random_field(cutoff, rng, decay=decay, rms=float(rng.uniform(0.0, radius)))


# ---------------------------------------------------------------------------
# inner products and norms


def inner_h(a: SpectralField, b: SpectralField) -> float:
    """H inner product: sum over modes of Re <c_a(k), conj c_b(k)>."""
    _require_same_cutoff(a, b)
    ca, cb = a.coeffs, b.coeffs
    return float(np.sum(ca.real * cb.real + ca.imag * cb.imag))


def norm_h(u: SpectralField) -> float:
    c = u.coeffs
    return float(np.sqrt(np.sum(c.real**2 + c.imag**2)))


@functools.lru_cache(maxsize=128)
def _v_multiplier(cutoff: int, nu: float, gamma: float) -> np.ndarray:
    kvals = _mode_range(cutoff).astype(np.float64)
    k2 = kvals[:, None] ** 2 + kvals[None, :] ** 2
    mult = nu * k2 + gamma
    mult.setflags(write=False)
    return mult


def norm_v(u: SpectralField, nu: float, gamma: float) -> float:
    """V norm sqrt(sum_k (nu|k|^2 + gamma) |c(k)|^2).

    Requires nu > 0 and gamma >= 0; with gamma > 0 this dominates
    sqrt(gamma) * |u|_H, the discrete coercivity of the damped operator.
    """
    if not (nu > 0.0):
        raise ValueError(f"viscosity must be positive, got {nu}")
    if gamma < 0.0:
        raise ValueError(f"damping must be nonnegative, got {gamma}")
    mult = _v_multiplier(u.cutoff, float(nu), float(gamma))
    c = u.coeffs
    abs2 = (c.real**2 + c.imag**2).sum(axis=0)
    return float(np.sqrt(np.sum(mult * abs2)))


# ---------------------------------------------------------------------------
# ball geometry: everything is radial in |u|_H


def lambda_of(r: float, ball: BallGeometry = UNIT_BALL) -> float:
    """The radial penalty profile: 0 on [0, R], 1 - R/r beyond; values in [0, 1)."""
    r = float(r)
    if r < 0.0 or not np.isfinite(r):
        raise ValueError(f"lambda_of needs a nonnegative radius, got {r}")
    if r <= ball.radius:
        return 0.0
    return 1.0 - ball.radius / r


def ball_project(u: SpectralField, ball: BallGeometry = UNIT_BALL) -> SpectralField:
    """Nearest point of the closed ball: identity inside, radial rescale outside."""
    r = norm_h(u)
    if r <= ball.radius:
        return u
    return _wrap(u.cutoff, u.coeffs * (ball.radius / r))


def penetration(u: SpectralField, ball: BallGeometry = UNIT_BALL) -> float:
    """Distance to the closed ball, (|u|_H - R)+; equals |u - project(u)|_H."""
    return max(norm_h(u) - ball.radius, 0.0)


def ball_distance_sq(u: SpectralField, ball: BallGeometry = UNIT_BALL) -> float:
    """Squared distance to the ball (the auxiliary function g)."""
    return penetration(u, ball) ** 2


def ball_distance_quartic(u: SpectralField, ball: BallGeometry = UNIT_BALL) -> float:
    """Fourth power of the distance (the auxiliary function G = g^2)."""
    return penetration(u, ball) ** 4


def phi_of(u: SpectralField, ball: BallGeometry = UNIT_BALL) -> float:
    """Penalty potential: half the squared distance to the ball.

    Its gradient is u - project(u); tests verify this by radial finite
    differences.
    """
    return 0.5 * penetration(u, ball) ** 2


# ---------------------------------------------------------------------------
# serialization: CSV of (kx, ky, re_x, im_x, re_y, im_y), versioned header


def save_field(path, field: SpectralField) -> None:
    """Write one field to a versioned CSV snapshot (one row per mode)."""
    k = field.cutoff
    lines = [FORMAT_HEADER, f"# field cutoff={k}", "kx,ky,re_x,im_x,re_y,im_y"]
    c = field.coeffs
    for i, kx in enumerate(_mode_range(k)):
        for j, ky in enumerate(_mode_range(k)):
            cx, cy = c[0, i, j], c[1, i, j]
            # plain-float repr round-trips exactly
            vals = ",".join(repr(float(x)) for x in (cx.real, cx.imag, cy.real, cy.imag))
            lines.append(f"{kx},{ky},{vals}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_field(path) -> SpectralField:
    """Read a field snapshot written by save_field; validates all invariants."""
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines or lines[0] != FORMAT_HEADER:
        raise ValueError(f"{path}: missing format header {FORMAT_HEADER!r}")
    if len(lines) < 3 or not lines[1].startswith("# field cutoff="):
        raise ValueError(f"{path}: missing field cutoff line")
    k = int(lines[1].split("=", 1)[1])
    if lines[2] != "kx,ky,re_x,im_x,re_y,im_y":
        raise ValueError(f"{path}: unexpected column header {lines[2]!r}")
    m = 2 * k + 1
    c = np.zeros((2, m, m), dtype=np.complex128)
    seen = np.zeros((m, m), dtype=bool)
    for row, line in enumerate(lines[3:], start=4):
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 6:
            raise ValueError(f"{path}:{row}: expected 6 columns, got {len(parts)}")
        kx, ky = int(parts[0]), int(parts[1])
        if abs(kx) > k or abs(ky) > k:
            raise ValueError(f"{path}:{row}: mode ({kx}, {ky}) outside cutoff {k}")
        i, j = k + kx, k + ky
        if seen[i, j]:
            raise ValueError(f"{path}:{row}: duplicate mode ({kx}, {ky})")
        seen[i, j] = True
        c[0, i, j] = float(parts[2]) + 1j * float(parts[3])
        c[1, i, j] = float(parts[4]) + 1j * float(parts[5])
    if not seen.all():
        raise ValueError(f"{path}: snapshot is missing {int((~seen).sum())} modes")
    return SpectralField(k, c)
