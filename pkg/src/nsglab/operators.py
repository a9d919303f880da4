"""Stokes operator, advection operator and trilinear form on the mode set.

On the mean-free torus the Stokes operator is diagonal, A y_k = |k|^2 y_k,
so D(A) is computable in closed form.  The advection operator

    B(u, v) = P [ (u . grad) v ]   truncated to the mode set

is evaluated by a direct double sum over mode pairs (exact, no aliasing);
a dealiased physical-space evaluation is provided as an independent
cross-check oracle.  The truncation convention keeps <B(y, y), y> = 0
exactly, which the energy identities rely on.

``estimate_constants`` samples random fields to produce empirical lower
bounds for the constants in the standard trilinear-form inequalities

    |b(u,v,w)|    <= c  ||u||_V  ||v||_V^(1/2) ||v||_DA^(1/2) ||w||_H
    |b(u,v,w)|    <= c  ||u||_DA^(3/4) ||u||_V^(1/4) ||v||_V  ||w||_H
    |b(u,v,Av)|   <= c1 ||u||_L4 ||v||_V^(1/4) ||v||_DA^(7/4)

together with the Young-inequality image c2 of c1 (see ``young_c2``).
Downstream inequality checks apply a safety factor on top of these lower
bounds.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, EstimationError
from .fields import (
    ModeSet,
    SpectralField,
    coeffs_from_grid,
    eval_on_grid,
    project_raw,
)


# ---------------------------------------------------------------------------
# raw-array kernels (used by the integrators; no object overhead)
# ---------------------------------------------------------------------------

def apply_A_raw(mode_set: ModeSet, coeffs: np.ndarray) -> np.ndarray:
    return mode_set.k_sq[:, None] * coeffs


def advect_project_raw(mode_set: ModeSet, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """P [ truncation of (u . grad) v ] by direct summation over mode pairs.

    The Fourier coefficient of (u . grad) v at mode k = p + q is
    i (u_p . q) v_q summed over all contributing pairs; pairs whose sum
    leaves the mode set are dropped (Galerkin truncation), then the Leray
    projection is applied mode by mode.
    """
    a_idx, b_idx, c_idx, q = mode_set.convolution_table()
    ua = u[a_idx]
    s = 1j * (ua[:, 0] * q[:, 0] + ua[:, 1] * q[:, 1] + ua[:, 2] * q[:, 2])
    contrib = s[:, None] * v[b_idx]
    n = mode_set.n_modes
    out = np.empty((n, 3), dtype=complex)
    for j in range(3):
        out[:, j] = np.bincount(
            c_idx, weights=contrib[:, j].real, minlength=n
        ) + 1j * np.bincount(c_idx, weights=contrib[:, j].imag, minlength=n)
    return project_raw(mode_set, out)


def inner_raw(u: np.ndarray, v: np.ndarray) -> float:
    return float(np.sum(u * np.conj(v)).real)


def norms_raw(mode_set: ModeSet, coeffs: np.ndarray):
    """(norm_H, norm_V, norm_DA) from raw coefficients."""
    power = np.einsum("ij,ij->i", coeffs, np.conj(coeffs)).real
    return (
        float(np.sqrt(np.sum(power))),
        float(np.sqrt(np.sum(mode_set.k_sq * power))),
        float(np.sqrt(np.sum(mode_set.k_sq**2 * power))),
    )


def norm_l4_raw(mode_set: ModeSet, coeffs: np.ndarray) -> float:
    y = eval_on_grid(mode_set, coeffs, mode_set.l4_grid)
    sq = np.einsum("...i,...i->...", y, y)
    return float(np.mean(sq**2) ** 0.25)


# ---------------------------------------------------------------------------
# public operator surface
# ---------------------------------------------------------------------------

def apply_A(field: SpectralField) -> SpectralField:
    """Stokes operator: diagonal with eigenvalue |k|^2 per mode.

    Satisfies <A u, u> = ||u||_V^2 and ||A u||_H = ||u||_DA.
    """
    return SpectralField(field.mode_set, apply_A_raw(field.mode_set, field.coeffs))


def bilinear_B(u: SpectralField, v: SpectralField) -> SpectralField:
    """Advection operator B(u, v), the mode-set truncation of P[(u.grad)v]."""
    if u.mode_set != v.mode_set:
        raise ConfigError("bilinear_B requires both fields on the same mode set")
    return SpectralField(u.mode_set, advect_project_raw(u.mode_set, u.coeffs, v.coeffs))


def bilinear_B_physical(u: SpectralField, v: SpectralField, grid: int | None = None) -> SpectralField:
    """Dealiased physical-space evaluation of B(u, v); cross-check oracle.

    Products of K-truncated fields carry modes up to 2K per axis, so any grid
    with at least 3K+1 points aliases them outside the retained set and the
    restriction to the mode set is exact.
    """
    if u.mode_set != v.mode_set:
        raise ConfigError("bilinear_B requires both fields on the same mode set")
    ms = u.mode_set
    if grid is None:
        grid = ms.dealias_grid
    if grid < ms.dealias_grid:
        raise ConfigError(f"grid {grid} below dealiasing threshold {ms.dealias_grid}")
    u_phys = eval_on_grid(ms, u.coeffs, grid)
    adv = np.zeros_like(u_phys)
    for i in range(3):
        dv_i = eval_on_grid(ms, 1j * ms.modes_f[:, i, None] * v.coeffs, grid)
        adv += u_phys[..., i : i + 1] * dv_i
    raw = coeffs_from_grid(ms, adv)
    raw = 0.5 * (raw + np.conj(raw[ms.conj_perm]))
    return SpectralField(ms, project_raw(ms, raw))


def trilinear_b(u: SpectralField, v: SpectralField, w: SpectralField) -> float:
    """Trilinear form b(u, v, w) = mean of sum_ij u_i (d v_j / d x_i) w_j.

    Computed untruncated by exact quadrature on a dealiased grid.  For w in
    the mode-set span this coincides with <B(u, v), w>, since the truncated
    part of the convolution is orthogonal to w; b(u, v, v) = 0 for
    divergence-free u.
    """
    if not (u.mode_set == v.mode_set == w.mode_set):
        raise ConfigError("trilinear_b requires all fields on one mode set")
    ms = u.mode_set
    grid = ms.dealias_grid
    u_phys = eval_on_grid(ms, u.coeffs, grid)
    w_phys = eval_on_grid(ms, w.coeffs, grid)
    total = 0.0
    for i in range(3):
        dv_i = eval_on_grid(ms, 1j * ms.modes_f[:, i, None] * v.coeffs, grid)
        total += float(np.mean(np.einsum("...j,...j->...", dv_i, w_phys) * u_phys[..., i]))
    return total


def young_c2(c1: float, nu: float) -> float:
    """Sharp Young-inequality companion of c1 for the viscosity split.

    The optimal c2 with  c1 a b^(1/4) X^(7/4) <= (nu/2) X^2 + c2 a^8 b^2
    is 7^7 c1^8 / (2^17 nu^7).
    """
    if nu <= 0:
        raise ConfigError("young_c2 requires nu > 0")
    return 7**7 * c1**8 / (2**17 * nu**7)


# ---------------------------------------------------------------------------
# empirical constant estimation
# ---------------------------------------------------------------------------

@dataclass
class ConstantEstimate:
    """Empirical lower bounds for the trilinear-form inequality constants.

    ``c`` merges the two direction-specific constants by max.  ``c2`` is the
    Young image of ``c1`` at reference viscosity nu = 1; rescale with
    ``young_c2(est.c1, nu)`` for other viscosities.  All values are sample
    maxima of scale-invariant ratios, hence lower bounds of the true
    constants; downstream checks add a safety factor.
    """

    c_b1: float
    c_b2: float
    c: float
    c1: float
    c2: float
    samples: int
    seed: int

    def __post_init__(self):
        vals = (self.c_b1, self.c_b2, self.c, self.c1, self.c2)
        if any(v < 0 for v in vals):
            raise ConfigError("constant estimates must be nonnegative")
        if abs(self.c - max(self.c_b1, self.c_b2)) > 1e-12 * max(1.0, self.c):
            raise ConfigError("c must equal max(c_b1, c_b2)")

    def to_json(self) -> str:
        return json.dumps(
            {
                "c_b1": self.c_b1,
                "c_b2": self.c_b2,
                "c": self.c,
                "c1": self.c1,
                "c2": self.c2,
                "samples": self.samples,
                "seed": self.seed,
            },
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "ConstantEstimate":
        d = json.loads(text)
        return cls(
            c_b1=d["c_b1"], c_b2=d["c_b2"], c=d["c"], c1=d["c1"], c2=d["c2"],
            samples=int(d["samples"]), seed=int(d["seed"]),
        )


def _random_raw(mode_set: ModeSet, rng: np.random.Generator, decay: float) -> np.ndarray:
    raw = rng.standard_normal((mode_set.n_modes, 3)) + 1j * rng.standard_normal(
        (mode_set.n_modes, 3)
    )
    raw *= (mode_set.k_sq ** (-decay / 2.0))[:, None]
    raw = 0.5 * (raw + np.conj(raw[mode_set.conj_perm]))
    return project_raw(mode_set, raw)


def _sample_ratios(mode_set: ModeSet, seed: int, index: int, decay: float):
    """Ratios (r_b1, r_b2, r_c1) for one random triple, or None if degenerate.

    Each sample derives its own generator from (seed, index), so results are
    independent of evaluation order and of the total sample count.
    """
    rng = np.random.default_rng([seed, index])
    u = _random_raw(mode_set, rng, decay)
    v = _random_raw(mode_set, rng, decay)
    w = _random_raw(mode_set, rng, decay)
    Buv = advect_project_raw(mode_set, u, v)
    b_uvw = inner_raw(Buv, w)
    b_uvAv = inner_raw(Buv, apply_A_raw(mode_set, v))
    _, u_V, u_DA = norms_raw(mode_set, u)
    _, v_V, v_DA = norms_raw(mode_set, v)
    w_H, _, _ = norms_raw(mode_set, w)
    u_L4 = norm_l4_raw(mode_set, u)
    den_b1 = u_V * v_V**0.5 * v_DA**0.5 * w_H
    den_b2 = u_DA**0.75 * u_V**0.25 * v_V * w_H
    den_c1 = u_L4 * v_V**0.25 * v_DA**1.75
    if min(den_b1, den_b2, den_c1) <= 0.0:
        return None
    return (abs(b_uvw) / den_b1, abs(b_uvw) / den_b2, abs(b_uvAv) / den_c1)


def estimate_constants(
    mode_set: ModeSet,
    samples: int,
    seed: int,
    decay: float = 2.0,
    threads: int = 1,
) -> ConstantEstimate:
    """Sample maxima of the inequality ratios over random field triples.

    Reproducible for a fixed seed; nondecreasing in ``samples`` because each
    sample's generator depends only on (seed, index).  Degenerate draws with
    a vanishing denominator are skipped; if every draw degenerates an
    EstimationError is raised.
    """
    if samples < 1:
        raise ConfigError("samples must be >= 1")
    indices = range(samples)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda i: _sample_ratios(mode_set, seed, i, decay), indices))
    else:
        results = [_sample_ratios(mode_set, seed, i, decay) for i in indices]
    valid = [r for r in results if r is not None]
    if not valid:
        raise EstimationError("all sample draws were degenerate")
    arr = np.asarray(valid)
    c_b1 = float(np.max(arr[:, 0]))
    c_b2 = float(np.max(arr[:, 1]))
    c1 = float(np.max(arr[:, 2]))
    return ConstantEstimate(
        c_b1=c_b1,
        c_b2=c_b2,
        c=max(c_b1, c_b2),
        c1=c1,
        c2=young_c2(c1, 1.0),
        samples=samples,
        seed=seed,
    )
