"""Divergence-free periodic velocity fields stored as truncated Fourier amplitudes.

Conventions
-----------
The domain is the torus [0, 2pi]^3 with the measure normalised to unit total
mass, so spatial integrals are plain averages and Parseval carries no volume
factor.  A field is

    y(x) = sum_k y_k exp(i k . x)

over integer wavevectors k with 0 < max(|k1|, |k2|, |k3|) <= K.  The zero mode
is excluded (mean-free fields), coefficients satisfy y_{-k} = conj(y_k)
(real-valued fields) and k . y_k = 0 (incompressibility).

Norms, all exact for truncated fields:

    ``norm_H``   = sqrt(sum |y_k|^2)           the L^2 norm
    ``norm_V``   = sqrt(sum |k|^2 |y_k|^2)     the H^1 (gradient) norm
    ``norm_DA``  = sqrt(sum |k|^4 |y_k|^2)     norm of the Stokes image, ||A y||
    ``norm_L4``  : exact trigonometric quadrature of |y|^4 on a physical grid
                   with at least 4K+1 points per axis.

Since every retained mode has |k| >= 1, the chain
``norm_H <= norm_V <= norm_DA`` holds exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ConfigError, FieldInvariantError

# Per-mode tolerance scale is max(1, |y_k|): absolute for unit-size amplitudes,
# relative for large ones, so states near a blow-up cap still validate.
REALITY_TOL = 1e-12
DIVERGENCE_TOL = 1e-12


class ModeSet:
    """Ordered set of retained wavevectors k in Z^3 with 0 < max|k_i| <= K.

    Modes are stored in lexicographic order over (k1, k2, k3).  The set is
    closed under negation and excludes the zero vector, so every represented
    field is mean-free by construction.
    """

    def __init__(self, cutoff: int):
        cutoff = int(cutoff)
        if cutoff < 1:
            raise ConfigError(f"mode cutoff must be >= 1, got {cutoff}")
        self.K = cutoff
        axis = np.arange(-cutoff, cutoff + 1)
        grid = np.stack(np.meshgrid(axis, axis, axis, indexing="ij"), axis=-1)
        grid = grid.reshape(-1, 3)
        self.modes = np.ascontiguousarray(grid[np.any(grid != 0, axis=1)])
        self.n_modes = self.modes.shape[0]
        self.modes_f = self.modes.astype(float)
        self.k_sq = np.einsum("ij,ij->i", self.modes_f, self.modes_f)
        self.conj_perm = self._linear_lookup(-self.modes)
        self._conv_table = None

    # -- indexing ---------------------------------------------------------

    def _linear_lookup(self, ks: np.ndarray) -> np.ndarray:
        K, side = self.K, 2 * self.K + 1
        lin = ((ks[:, 0] + K) * side + (ks[:, 1] + K)) * side + (ks[:, 2] + K)
        table = np.full(side**3, -1, dtype=np.int64)
        own = ((self.modes[:, 0] + K) * side + (self.modes[:, 1] + K)) * side + (
            self.modes[:, 2] + K
        )
        table[own] = np.arange(self.n_modes)
        return table[lin]

    def index_of(self, k) -> int:
        """Index of wavevector ``k`` in the ordered mode list."""
        k = np.asarray(k, dtype=int).reshape(1, 3)
        if np.max(np.abs(k)) > self.K or not np.any(k):
            raise ConfigError(f"wavevector {tuple(k[0])} not in mode set K={self.K}")
        return int(self._linear_lookup(k)[0])

    # -- derived grids ----------------------------------------------------

    @property
    def l4_grid(self) -> int:
        """Smallest odd per-axis grid size with exact quadrature of |y|^4."""
        return 4 * self.K + 1  # 4K+1 is already odd

    @property
    def dealias_grid(self) -> int:
        """Smallest per-axis grid on which quadratic products are alias-free."""
        return 3 * self.K + 1

    def convolution_table(self):
        """Index arrays (a, b, c, q) for the direct mode-pair convolution sum.

        For every pair of retained modes (p_a, q_b) whose sum lies in the set,
        c points at the target mode p_a + q_b and q holds q_b as floats.
        """
        if self._conv_table is None:
            s = self.modes[:, None, :] + self.modes[None, :, :]
            inside = np.all(np.abs(s) <= self.K, axis=2) & np.any(s != 0, axis=2)
            a_idx, b_idx = np.nonzero(inside)
            c_idx = self._linear_lookup(s[inside])
            q = self.modes_f[b_idx]
            self._conv_table = (
                a_idx.astype(np.int64),
                b_idx.astype(np.int64),
                c_idx.astype(np.int64),
                q,
            )
        return self._conv_table

    def __eq__(self, other):
        return isinstance(other, ModeSet) and other.K == self.K

    def __hash__(self):
        return hash(("ModeSet", self.K))

    def __repr__(self):
        return f"ModeSet(K={self.K}, n_modes={self.n_modes})"


@lru_cache(maxsize=None)
def get_mode_set(cutoff: int) -> ModeSet:
    """Shared ModeSet instance per cutoff (convolution tables built once)."""
    return ModeSet(cutoff)


# ---------------------------------------------------------------------------
# validation helpers (shared with Trajectory, which validates state batches)
# ---------------------------------------------------------------------------

def validate_coeffs(mode_set: ModeSet, coeffs: np.ndarray, what: str = "field") -> None:
    """Check reality symmetry and incompressibility of raw coefficients.

    ``coeffs`` may be (n, 3) or batched (..., n, 3); every slice is checked.
    Raises FieldInvariantError on the first violated invariant.
    """
    coeffs = np.asarray(coeffs)
    if coeffs.shape[-2:] != (mode_set.n_modes, 3):
        raise FieldInvariantError(
            f"{what}: coefficient shape {coeffs.shape} does not match "
            f"mode set with {mode_set.n_modes} modes"
        )
    amp = np.sqrt(np.einsum("...ij,...ij->...i", coeffs, np.conj(coeffs)).real)
    scale = np.maximum(1.0, amp)
    sym = np.abs(coeffs[..., mode_set.conj_perm, :] - np.conj(coeffs))
    sym_scale = np.maximum(scale, scale[..., mode_set.conj_perm])
    worst = np.max(sym / sym_scale[..., None], initial=0.0)
    if worst > REALITY_TOL:
        raise FieldInvariantError(
            f"{what}: conjugate symmetry violated (worst deviation {worst:.3e})"
        )
    div = np.abs(np.einsum("ij,...ij->...i", mode_set.modes_f, coeffs))
    worst = np.max(div / scale, initial=0.0)
    if worst > DIVERGENCE_TOL:
        raise FieldInvariantError(
            f"{what}: incompressibility violated (worst k.y_k = {worst:.3e})"
        )


def check_reality(mode_set: ModeSet, coeffs: np.ndarray, what: str = "input") -> None:
    """Reality-symmetry check alone, for data that is not yet divergence-free."""
    coeffs = np.asarray(coeffs)
    if coeffs.shape != (mode_set.n_modes, 3):
        raise FieldInvariantError(
            f"{what}: expected shape {(mode_set.n_modes, 3)}, got {coeffs.shape}"
        )
    amp = np.sqrt(np.einsum("ij,ij->i", coeffs, np.conj(coeffs)).real)
    scale = np.maximum(1.0, amp)
    sym = np.abs(coeffs[mode_set.conj_perm] - np.conj(coeffs))
    sym_scale = np.maximum(scale, scale[mode_set.conj_perm])
    worst = np.max(sym / sym_scale[:, None], initial=0.0)
    if worst > REALITY_TOL:
        raise FieldInvariantError(
            f"{what}: conjugate symmetry violated (worst deviation {worst:.3e})"
        )


def project_raw(mode_set: ModeSet, coeffs: np.ndarray) -> np.ndarray:
    """Per-mode tangential projection P_k = I - k k^T / |k|^2 on raw arrays."""
    m = mode_set.modes_f
    dots = np.einsum("ij,...ij->...i", m, coeffs) / mode_set.k_sq
    return coeffs - dots[..., None] * m


class SpectralField:
    """Immutable divergence-free field: one complex 3-vector per retained mode.

    Construction validates the reality and incompressibility invariants, so
    every operation that returns a SpectralField re-checks them.
    """

    __slots__ = ("mode_set", "coeffs")

    def __init__(self, mode_set: ModeSet, coeffs: np.ndarray):
        coeffs = np.array(coeffs, dtype=complex)
        validate_coeffs(mode_set, coeffs)
        coeffs.setflags(write=False)
        object.__setattr__(self, "mode_set", mode_set)
        object.__setattr__(self, "coeffs", coeffs)

    def __setattr__(self, name, value):
        raise AttributeError("SpectralField is immutable")

    # -- norms --------------------------------------------------------------

    def _weighted_norm(self, power: int) -> float:
        w = self.mode_set.k_sq**power if power else 1.0
        return float(
            np.sqrt(np.sum(w * np.einsum("ij,ij->i", self.coeffs, np.conj(self.coeffs)).real))
        )

    def norm_H(self) -> float:
        return self._weighted_norm(0)

    def norm_V(self) -> float:
        return self._weighted_norm(1)

    def norm_DA(self) -> float:
        return self._weighted_norm(2)

    def norm_L4(self, grid: int | None = None) -> float:
        """Spatial L^4 norm by exact trigonometric quadrature.

        The integrand |y|^4 is a trigonometric polynomial of per-axis degree
        at most 4K, so any grid with more than 4K points per axis integrates
        it exactly.  Grids below 4K+1 are rejected.
        """
        ms = self.mode_set
        if grid is None:
            grid = ms.l4_grid
        if grid < ms.l4_grid:
            raise ConfigError(
                f"L4 quadrature grid {grid} below exactness threshold {ms.l4_grid}"
            )
        y = eval_on_grid(ms, self.coeffs, grid)
        sq = np.einsum("...i,...i->...", y, y)
        return float(np.mean(sq**2) ** 0.25)

    # -- algebra --------------------------------------------------------------

    def _require_same_modes(self, other: "SpectralField") -> None:
        if self.mode_set != other.mode_set:
            raise ConfigError("fields live on different mode sets")

    def __add__(self, other):
        self._require_same_modes(other)
        return SpectralField(self.mode_set, self.coeffs + other.coeffs)

    def __sub__(self, other):
        self._require_same_modes(other)
        return SpectralField(self.mode_set, self.coeffs - other.coeffs)

    def __mul__(self, scalar):
        return SpectralField(self.mode_set, self.coeffs * float(scalar))

    __rmul__ = __mul__

    def __neg__(self):
        return SpectralField(self.mode_set, -self.coeffs)

    def is_zero(self, tol: float = 0.0) -> bool:
        return bool(np.max(np.abs(self.coeffs), initial=0.0) <= tol)

    def __repr__(self):
        return (
            f"SpectralField(K={self.mode_set.K}, "
            f"norm_H={self.norm_H():.6g}, norm_V={self.norm_V():.6g})"
        )


def inner_H(u: SpectralField, v: SpectralField) -> float:
    """L^2 inner product <u, v> = sum_k u_k . conj(v_k) (real by symmetry)."""
    if u.mode_set != v.mode_set:
        raise ConfigError("fields live on different mode sets")
    return float(np.sum(u.coeffs * np.conj(v.coeffs)).real)


def zero_field(mode_set: ModeSet) -> SpectralField:
    return SpectralField(mode_set, np.zeros((mode_set.n_modes, 3), dtype=complex))


def leray_project(mode_set: ModeSet, raw_coeffs: np.ndarray) -> SpectralField:
    """Project raw per-mode amplitudes onto the divergence-free subspace.

    The input must already satisfy the reality symmetry; asymmetric input is
    rejected with FieldInvariantError.  The projection P_k = I - k k^T/|k|^2
    is idempotent and leaves tangent (k-orthogonal) amplitudes unchanged.
    """
    raw = np.array(raw_coeffs, dtype=complex)
    check_reality(mode_set, raw)
    return SpectralField(mode_set, project_raw(mode_set, raw))


def random_field(
    mode_set: ModeSet,
    seed: int | None = None,
    decay_exponent: float = 2.0,
    *,
    rng: np.random.Generator | None = None,
) -> SpectralField:
    """Reproducible random divergence-free field with |y_k| ~ |k|^-decay.

    Normalised to unit H norm.  Deterministic for a fixed seed.
    """
    if decay_exponent < 0:
        raise ConfigError(f"decay_exponent must be >= 0, got {decay_exponent}")
    if rng is None:
        rng = np.random.default_rng(seed)
    n = mode_set.n_modes
    raw = rng.standard_normal((n, 3)) + 1j * rng.standard_normal((n, 3))
    raw *= (mode_set.k_sq ** (-decay_exponent / 2.0))[:, None]
    raw = 0.5 * (raw + np.conj(raw[mode_set.conj_perm]))
    coeffs = project_raw(mode_set, raw)
    norm = np.sqrt(np.sum(np.abs(coeffs) ** 2))
    return SpectralField(mode_set, coeffs / norm)


# ---------------------------------------------------------------------------
# physical-grid evaluation (exact for band-limited fields)
# ---------------------------------------------------------------------------

def eval_on_grid(mode_set: ModeSet, coeffs: np.ndarray, grid: int) -> np.ndarray:
    """Evaluate sum_k y_k exp(i k.x) on the uniform grid x_j = 2 pi j / grid.

    Returns a real array of shape (grid, grid, grid, 3).  Exact whenever
    grid >= 2K+1 (no index collisions under the modular embedding).
    """
    if grid < 2 * mode_set.K + 1:
        raise ConfigError(f"grid {grid} cannot hold modes up to K={mode_set.K}")
    spec = np.zeros((grid, grid, grid, 3), dtype=complex)
    idx = np.mod(mode_set.modes, grid)
    spec[idx[:, 0], idx[:, 1], idx[:, 2], :] = coeffs
    phys = np.fft.ifftn(spec, axes=(0, 1, 2)) * grid**3
    return np.ascontiguousarray(phys.real)


def coeffs_from_grid(mode_set: ModeSet, values: np.ndarray) -> np.ndarray:
    """Fourier amplitudes of grid samples, restricted to the mode set.

    ``values`` has shape (M, M, M, c).  Exact for band-limited data with
    max|k_i| <= K on any grid with M >= 2K+1; callers are responsible for
    choosing M large enough to avoid aliasing of products.
    """
    grid = values.shape[0]
    spec = np.fft.fftn(values, axes=(0, 1, 2)) / grid**3
    idx = np.mod(mode_set.modes, grid)
    return np.ascontiguousarray(spec[idx[:, 0], idx[:, 1], idx[:, 2]])


def field_from_function(mode_set: ModeSet, fn, grid: int | None = None) -> SpectralField:
    """Leray projection of the band-limited part of a real vector field.

    ``fn(X, Y, Z)`` must return the three velocity components on the given
    coordinate arrays.  Sampling uses 4K+1 points per axis by default, which
    captures modes up to max|k_i| = 2K alias-free into the retained set.
    """
    if grid is None:
        grid = mode_set.l4_grid
    x = 2.0 * np.pi * np.arange(grid) / grid
    X, Y, Z = np.meshgrid(x, x, x, indexing="ij")
    comps = fn(X, Y, Z)
    values = np.stack([np.broadcast_to(c, X.shape) for c in comps], axis=-1)
    raw = coeffs_from_grid(mode_set, values.astype(float))
    raw = 0.5 * (raw + np.conj(raw[mode_set.conj_perm]))  # exact symmetrisation
    return SpectralField(mode_set, project_raw(mode_set, raw))


def taylor_green(mode_set: ModeSet, amplitude: float = 1.0) -> SpectralField:
    """Classic steady-shape vortex array (sin x1 cos x2, -cos x1 sin x2, 0).

    Its self-advection is a pure gradient, so under Leray projection the
    exact solution of the unforced equations is amplitude * exp(-2 nu t)
    times the initial shape.
    """
    field = field_from_function(
        mode_set,
        lambda X, Y, Z: (np.sin(X) * np.cos(Y), -np.cos(X) * np.sin(Y), 0.0 * Z),
    )
    return field * amplitude


def single_mode(
    mode_set: ModeSet,
    k,
    direction=None,
    amplitude: float = 1.0,
) -> SpectralField:
    """Conjugate mode pair y = 2 a cos(k.x) d with d a unit vector, d . k = 0.

    ``amplitude`` is the per-mode coefficient magnitude |y_k| = a.  A supplied
    direction is projected orthogonal to k and normalised; the default picks
    an arbitrary perpendicular direction.
    """
    k = np.asarray(k, dtype=int)
    i = mode_set.index_of(k)
    j = mode_set.index_of(-k)
    kf = k.astype(float)
    if direction is None:
        trial = np.array([0.0, 0.0, 1.0]) if (k[0] or k[1]) else np.array([1.0, 0.0, 0.0])
        direction = np.cross(kf, np.cross(trial, kf))
    d = np.asarray(direction, dtype=float)
    d = d - kf * (kf @ d) / (kf @ kf)
    norm = np.linalg.norm(d)
    if norm < 1e-14:
        raise ConfigError("direction is parallel to the wavevector")
    coeffs = np.zeros((mode_set.n_modes, 3), dtype=complex)
    coeffs[i] = coeffs[j] = amplitude * d / norm
    return SpectralField(mode_set, coeffs)


# ---------------------------------------------------------------------------
# per-time norm bookkeeping
# ---------------------------------------------------------------------------

@dataclass
class NormTrace:
    """Per-time norms of a trajectory plus cumulative trapezoid integrals.

    ``int_V2`` accumulates ||y||_V^2, ``int_f_y`` accumulates <f, y>, and
    ``int_L4_8`` accumulates ||y||_L4^8 (the integrand of the Serrin norm).
    """

    times: np.ndarray
    norm_H: np.ndarray
    norm_V: np.ndarray
    norm_DA: np.ndarray
    norm_L4: np.ndarray
    int_V2: np.ndarray
    int_f_y: np.ndarray
    int_L4_8: np.ndarray

    COLUMNS = ("t", "norm_H", "norm_V", "norm_DA", "norm_L4", "int_V2", "int_f_y", "int_L4_8")

    def __post_init__(self):
        cols = [self.times, self.norm_H, self.norm_V, self.norm_DA,
                self.norm_L4, self.int_V2, self.int_f_y, self.int_L4_8]
        n = len(self.times)
        if any(len(c) != n for c in cols):
            raise ConfigError("norm trace columns have unequal lengths")

    def as_columns(self):
        return (self.times, self.norm_H, self.norm_V, self.norm_DA,
                self.norm_L4, self.int_V2, self.int_f_y, self.int_L4_8)


def cumulative_trapezoid(values: np.ndarray, times: np.ndarray) -> np.ndarray:
    """Cumulative trapezoid rule with a leading zero, aligned to ``times``."""
    values = np.asarray(values, dtype=float)
    times = np.asarray(times, dtype=float)
    out = np.zeros_like(values)
    if len(times) > 1:
        increments = 0.5 * np.diff(times) * (values[1:] + values[:-1])
        out[1:] = np.cumsum(increments)
    return out


def trapezoid(values: np.ndarray, times: np.ndarray) -> float:
    """Trapezoid-rule integral over the full grid."""
    values = np.asarray(values, dtype=float)
    times = np.asarray(times, dtype=float)
    if len(times) < 2:
        return 0.0
    return float(np.sum(0.5 * np.diff(times) * (values[1:] + values[:-1])))


# ---------------------------------------------------------------------------
# CSV serialization: header kx,ky,kz,re1,im1,re2,im2,re3,im3
# ---------------------------------------------------------------------------

FIELD_CSV_HEADER = "kx,ky,kz,re1,im1,re2,im2,re3,im3"


def _fmt(x: float) -> str:
    return repr(float(x))


def field_to_csv_text(field: SpectralField) -> str:
    lines = [FIELD_CSV_HEADER]
    for k, c in zip(field.mode_set.modes, field.coeffs):
        parts = [str(int(k[0])), str(int(k[1])), str(int(k[2]))]
        for comp in c:
            parts.append(_fmt(comp.real))
            parts.append(_fmt(comp.imag))
        lines.append(",".join(parts))
    return "\n".join(lines) + "\n"


def write_field_csv(field: SpectralField, path) -> None:
    """Write one row per mode, modes in lexicographic order, floats via repr."""
    with open(path, "w", newline="") as fh:
        fh.write(field_to_csv_text(field))


def read_field_csv(path, mode_set: ModeSet | None = None) -> SpectralField:
    """Load a field CSV, verifying layout and both field invariants."""
    with open(path, newline="") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or lines[0] != FIELD_CSV_HEADER:
        raise FieldInvariantError(f"{path}: missing or malformed header")
    rows = []
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) != 9:
            raise FieldInvariantError(f"{path}: expected 9 columns, got {len(parts)}")
        rows.append(parts)
    if not rows:
        raise FieldInvariantError(f"{path}: no mode rows")
    ks = np.array([[int(p[0]), int(p[1]), int(p[2])] for p in rows], dtype=int)
    if mode_set is None:
        mode_set = get_mode_set(int(np.max(np.abs(ks))))
    if ks.shape != mode_set.modes.shape or not np.array_equal(ks, mode_set.modes):
        raise FieldInvariantError(
            f"{path}: mode rows do not match the lexicographic mode set K={mode_set.K}"
        )
    vals = np.array([[float(v) for v in p[3:]] for p in rows])
    coeffs = vals[:, 0::2] + 1j * vals[:, 1::2]
    return SpectralField(mode_set, coeffs)
