"""Damped Stokes operator, dealiased convection operator, drift and noise maps.

The convection operator B(u, v) is the Leray projection of (u . grad) v,
computed in divergence form d_j(u_j v_i) (identical for divergence-free u)
on a zero-padded physical grid of N >= 3K+1 points.  The padding removes every
aliased product, so the result is the exact Galerkin truncation of the
bilinear term: the skew-symmetry identities b(u,v,w) = -b(u,w,v) and
b(u,v,v) = 0 hold to roundoff, which the energy estimates downstream rely on.

Coefficients f and sigma are the affine family f(u) = f_const - f_lin*u,
sigma(u) = sigma_const + sigma_lin*u: the simplest Lipschitz drift/noise maps
with tunable constants.  Callables with the same field-to-field contract can
be passed to the integrator's step/simulate_path for extensions.
"""

from __future__ import annotations

import dataclasses
import functools

import numpy as np
import scipy.fft

from .fields import SpectralField, _require_same_cutoff, _wrap, inner_h, norm_v

__all__ = [
    "CoefficientSet",
    "SpectralGrid",
    "apply_A",
    "nonlinear_B",
    "trilinear_b",
    "drift_f",
    "noise_sigma",
    "noise_fields",
    "restrict_field",
    "extend_field",
]


class SpectralGrid:
    """Precomputed index maps and mode grids for one cutoff.

    Shared, immutable, and cached; holds everything the padded-FFT convolution
    needs so the hot loop does no per-step setup.
    """

    def __init__(self, cutoff: int):
        k = int(cutoff)
        m = 2 * k + 1
        self.cutoff = k
        self.modes = m
        # alias-free product grid: N - 2K > K, i.e. N >= 3K + 1
        self.n_grid = scipy.fft.next_fast_len(3 * k + 1, real=True)
        n = self.n_grid
        self.n_half = n // 2 + 1

        kvals = np.arange(-k, k + 1, dtype=np.float64)
        self.kx = kvals[:, None] * np.ones((1, m))
        self.ky = np.ones((m, 1)) * kvals[None, :]
        self.k2 = self.kx**2 + self.ky**2
        inv_k2 = np.zeros_like(self.k2)
        nonzero = self.k2 > 0
        inv_k2[nonzero] = 1.0 / self.k2[nonzero]
        self.inv_k2 = inv_k2

        ints = np.arange(-k, k + 1)
        # embedding: modes with ky >= 0 land in the rfft2 half-spectrum at
        # (kx mod N, ky); modes with ky < 0 are implied by Hermitian completion
        self.embed_rows = np.mod(ints, n)  # (m,) row for each kx
        self.embed_cols = np.arange(0, k + 1)  # ky = 0..K columns
        # extraction from an rfft2 half-spectrum G: ky >= 0 reads G directly,
        # ky < 0 reads the conjugate of the mirrored mode
        ky_grid = ints[None, :] * np.ones((m, 1), dtype=int)
        kx_grid = ints[:, None] * np.ones((1, m), dtype=int)
        neg = ky_grid < 0
        rows = np.where(neg, np.mod(-kx_grid, n), np.mod(kx_grid, n))
        cols = np.where(neg, -ky_grid, ky_grid)
        self.extract_rows = rows
        self.extract_cols = cols
        self.extract_conj = neg

        for arr in (
            self.kx, self.ky, self.k2, self.inv_k2,
            self.embed_rows, self.extract_rows, self.extract_cols, self.extract_conj,
        ):
            arr.setflags(write=False)

    @staticmethod
    @functools.lru_cache(maxsize=32)
    def get(cutoff: int) -> "SpectralGrid":
        return SpectralGrid(cutoff)

    def multiplier(self, nu: float, gamma: float) -> np.ndarray:
        return nu * self.k2 + gamma

    # -- physical <-> spectral ------------------------------------------------

    def to_physical(self, coeffs: np.ndarray) -> np.ndarray:
        """Grid values / N^2 for arrays shaped (..., m, m); the N^2 is folded
        into extract_products so product pipelines touch full grids once."""
        n, k = self.n_grid, self.cutoff
        half = np.zeros(coeffs.shape[:-2] + (n, self.n_half), dtype=np.complex128)
        # ky >= 0 columns of the full spectrum, split by the sign of kx
        half[..., 0:k + 1, 0:k + 1] = coeffs[..., k:, k:]
        half[..., n - k:n, 0:k + 1] = coeffs[..., 0:k, k:]
        return scipy.fft.irfft2(half, s=(n, n), axes=(-2, -1))

    def extract_products(self, phys: np.ndarray) -> np.ndarray:
        """Spectral coefficients of a product of two to_physical outputs."""
        g = scipy.fft.rfft2(phys, axes=(-2, -1))
        n, k, m = self.n_grid, self.cutoff, self.modes
        out = np.empty(phys.shape[:-2] + (m, m), dtype=np.complex128)
        # ky >= 0 reads the half spectrum directly
        out[..., 0:k, k:] = g[..., n - k:n, 0:k + 1]
        out[..., k:, k:] = g[..., 0:k + 1, 0:k + 1]
        # ky < 0 is the conjugate of the mirrored mode
        np.conjugate(g[..., k:0:-1, k:0:-1], out=out[..., 0:k, 0:k])
        np.conjugate(g[..., 0, k:0:-1], out=out[..., k, 0:k])
        np.conjugate(g[..., n - 1:n - k - 1:-1, k:0:-1], out=out[..., k + 1:, 0:k])
        # one N^2 per to_physical factor, over the forward 1/N^2: net N^2
        out *= float(self.n_grid) ** 2
        return out

    def convect(self, cu: np.ndarray, cv: np.ndarray | None = None) -> np.ndarray:
        """Exact Galerkin truncation of the Leray-projected (u . grad) v.

        cu, cv are coefficient arrays shaped (..., 2, m, m); cv None means
        v = u (saves one transform batch).  Divergence form: for
        divergence-free u, (u . grad) v_i = d_j (u_j v_i) exactly.
        """
        n = self.n_grid
        pu = self.to_physical(cu)
        if cv is None:
            prods = np.empty(cu.shape[:-3] + (3, n, n))
            np.multiply(pu[..., 0, :, :], pu[..., 0, :, :], out=prods[..., 0, :, :])
            np.multiply(pu[..., 0, :, :], pu[..., 1, :, :], out=prods[..., 1, :, :])
            np.multiply(pu[..., 1, :, :], pu[..., 1, :, :], out=prods[..., 2, :, :])
            t = self.extract_products(prods)
            t_xx, t_xy, t_yy = t[..., 0, :, :], t[..., 1, :, :], t[..., 2, :, :]
            t_yx = t_xy
        else:
            pv = self.to_physical(cv)
            prods = np.empty(cu.shape[:-3] + (4, n, n))
            np.multiply(pu[..., 0, :, :], pv[..., 0, :, :], out=prods[..., 0, :, :])
            np.multiply(pu[..., 0, :, :], pv[..., 1, :, :], out=prods[..., 1, :, :])
            np.multiply(pu[..., 1, :, :], pv[..., 0, :, :], out=prods[..., 2, :, :])
            np.multiply(pu[..., 1, :, :], pv[..., 1, :, :], out=prods[..., 3, :, :])
            t = self.extract_products(prods)
            t_xx, t_xy = t[..., 0, :, :], t[..., 1, :, :]
            t_yx, t_yy = t[..., 2, :, :], t[..., 3, :, :]
        bx = 1j * (self.kx * t_xx + self.ky * t_yx)
        by = 1j * (self.kx * t_xy + self.ky * t_yy)
        # Leray projection, mode by mode; the k=0 coefficient is already 0
        kdot = (self.kx * bx + self.ky * by) * self.inv_k2
        bx -= self.kx * kdot
        by -= self.ky * kdot
        return np.stack((bx, by), axis=-3)


@dataclasses.dataclass(frozen=True)
class CoefficientSet:
    """One problem instance: viscosity, damping, drift and noise coefficients.

    Drift f(u) = f_const - f_lin*u and noise sigma(u) = sigma_const +
    sigma_lin*u; both Lipschitz with constants |f_lin|, |sigma_lin|.  With
    noise_dim = m > 1, channel 0 keeps the affine law and channels 1..m-1 are
    the purely additive fields sigma_extra (length m-1).
    """

    nu: float
    gamma: float
    f_const: SpectralField
    f_lin: float
    sigma_const: SpectralField
    sigma_lin: float
    noise_dim: int = 1
    sigma_extra: tuple = ()

    def __post_init__(self):
        if not (self.nu > 0.0 and np.isfinite(self.nu)):
            raise ValueError(f"viscosity must be positive, got {self.nu}")
        if not (self.gamma > 0.0 and np.isfinite(self.gamma)):
            raise ValueError(f"damping must be positive, got {self.gamma}")
        for name in ("f_lin", "sigma_lin"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if int(self.noise_dim) < 1:
            raise ValueError(f"noise_dim must be >= 1, got {self.noise_dim}")
        object.__setattr__(self, "noise_dim", int(self.noise_dim))
        object.__setattr__(self, "sigma_extra", tuple(self.sigma_extra))
        _require_same_cutoff(self.f_const, self.sigma_const)
        for extra in self.sigma_extra:
            _require_same_cutoff(self.f_const, extra)
        if len(self.sigma_extra) != self.noise_dim - 1:
            raise ValueError(
                f"noise_dim = {self.noise_dim} needs {self.noise_dim - 1} extra "
                f"sigma fields, got {len(self.sigma_extra)}"
            )

    @property
    def cutoff(self) -> int:
        return self.f_const.cutoff


def apply_A(u: SpectralField, c: CoefficientSet) -> SpectralField:
    """Damped Stokes operator: diagonal multiplier nu|k|^2 + gamma per mode."""
    grid = SpectralGrid.get(u.cutoff)
    return _wrap(u.cutoff, u.coeffs * grid.multiplier(c.nu, c.gamma))


def nonlinear_B(u: SpectralField, v: SpectralField) -> SpectralField:
    """Dealiased convection operator: Leray-projected (u . grad) v."""
    _require_same_cutoff(u, v)
    grid = SpectralGrid.get(u.cutoff)
    cv = None if v is u else v.coeffs
    return _wrap(u.cutoff, np.ascontiguousarray(grid.convect(u.coeffs, cv)))


def trilinear_b(u: SpectralField, v: SpectralField, w: SpectralField) -> float:
    """b(u, v, w) = integral (u . grad) v . w, realized as inner_h(B(u,v), w)."""
    _require_same_cutoff(u, w)
    return inner_h(nonlinear_B(u, v), w)


def drift_f(u: SpectralField, c: CoefficientSet) -> SpectralField:
    _require_same_cutoff(u, c.f_const)
    if c.f_lin == 0.0:
        return c.f_const
    return _wrap(u.cutoff, c.f_const.coeffs - c.f_lin * u.coeffs)


def noise_sigma(u: SpectralField, c: CoefficientSet) -> SpectralField:
    _require_same_cutoff(u, c.sigma_const)
    if c.sigma_lin == 0.0:
        return c.sigma_const
    return _wrap(u.cutoff, c.sigma_const.coeffs + c.sigma_lin * u.coeffs)


def noise_fields(u: SpectralField, c: CoefficientSet) -> list:
    """Per-channel diffusion fields: [sigma(u), *sigma_extra]."""
    return [noise_sigma(u, c), *c.sigma_extra]


def restrict_field(u: SpectralField, cutoff: int) -> SpectralField:
    """Galerkin truncation to a smaller cutoff."""
    k_new = int(cutoff)
    if k_new > u.cutoff:
        raise ValueError(f"restrict_field: {k_new} exceeds source cutoff {u.cutoff}")
    k = u.cutoff
    sl = slice(k - k_new, k + k_new + 1)
    return _wrap(k_new, np.ascontiguousarray(u.coeffs[:, sl, sl]))


def extend_field(u: SpectralField, cutoff: int) -> SpectralField:
    """Embed into a larger cutoff by zero padding."""
    k_new = int(cutoff)
    if k_new < u.cutoff:
        raise ValueError(f"extend_field: {k_new} below source cutoff {u.cutoff}")
    k = u.cutoff
    m_new = 2 * k_new + 1
    c = np.zeros((2, m_new, m_new), dtype=np.complex128)
    sl = slice(k_new - k, k_new + k + 1)
    c[:, sl, sl] = u.coeffs
    return _wrap(k_new, c)


def check_v_duality(u: SpectralField, c: CoefficientSet) -> float:
    """inner_h(A u, u) - norm_v(u)^2; exactly zero up to roundoff by design."""
    return inner_h(apply_A(u, c), u) - norm_v(u, c.nu, c.gamma) ** 2
