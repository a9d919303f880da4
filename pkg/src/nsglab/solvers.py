"""Time integration of the three evolution problems on the mode set.

All three systems share the stiff diagonal part nu |k|^2 and differ only in
the non-stiff right-hand side G:

    full equations        dy/dt + nu A y + B(y, y)                       = f
    controlled system     dy/dt + nu A y + B(z, y)                       = f
    perturbation system   de/dt + nu A e + B(e,e) + B(y,e) + B(e,y)      = g - f

The integrator treats the viscous part exactly with the integrating factor
exp(-nu |k|^2 t) and advances the transformed variable with classical RK4
(or Heun's method for the second-order cross-check scheme) at fixed dt.
Integration stops with BlowUpDetected when the V-norm exceeds the configured
cap; the exception carries the partial trajectory, since a blow-up flag is a
scientific outcome rather than an operational failure.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import AdvectiveStabilityWarning, BlowUpDetected, ConfigError
from .fields import (
    ModeSet,
    NormTrace,
    SpectralField,
    cumulative_trapezoid,
    get_mode_set,
    validate_coeffs,
)
from .operators import advect_project_raw, norm_l4_raw

SCHEMES = ("rk4", "rk2")


@dataclass(frozen=True)
class SolverConfig:
    """Fixed-step integration parameters.

    ``blowup_threshold`` caps ||y||_V; crossing it stops the run.  ``scheme``
    selects the Runge-Kutta order on the integrating-factor variable.
    """

    nu: float
    T: float
    dt: float
    K: int
    blowup_threshold: float = 1e6
    interpolation: str = "linear"
    scheme: str = "rk4"

    def __post_init__(self):
        if self.nu < 0:
            raise ConfigError(f"nu must be >= 0, got {self.nu}")
        if self.T <= 0:
            raise ConfigError(f"T must be > 0, got {self.T}")
        if not 0 < self.dt <= self.T:
            raise ConfigError(f"need 0 < dt <= T, got dt={self.dt}, T={self.T}")
        if self.K < 1:
            raise ConfigError(f"K must be >= 1, got {self.K}")
        if self.blowup_threshold <= 0:
            raise ConfigError("blowup_threshold must be > 0")
        if self.interpolation != "linear":
            raise ConfigError(f"unsupported interpolation {self.interpolation!r}")
        if self.scheme not in SCHEMES:
            raise ConfigError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")

    def mode_set(self) -> ModeSet:
        return get_mode_set(self.K)

    def time_grid(self) -> np.ndarray:
        """Uniform grid 0 = t_0 < ... < t_N = T, final step possibly partial."""
        n_full = int(np.floor(self.T / self.dt + 1e-9))
        times = self.dt * np.arange(n_full + 1)
        if self.T - times[-1] > 1e-9 * max(self.T, self.dt):
            times = np.append(times, self.T)
        else:
            times[-1] = self.T
        return times

    def replace(self, **kw) -> "SolverConfig":
        data = {k: getattr(self, k) for k in
                ("nu", "T", "dt", "K", "blowup_threshold", "interpolation", "scheme")}
        data.update(kw)
        return SolverConfig(**data)


class ForcingSpec:
    """Forcing f in L^2(0,T;H): constant in time, or time samples with
    linear interpolation in the spectral coefficients."""

    def __init__(self, mode_set: ModeSet, constant=None, times=None, samples=None):
        self.mode_set = mode_set
        if constant is not None:
            if times is not None or samples is not None:
                raise ConfigError("forcing is either constant or sampled, not both")
            validate_coeffs(mode_set, constant, "forcing")
            self._constant = np.array(constant, dtype=complex)
            self._times = None
            self._samples = None
        else:
            if times is None or samples is None:
                raise ConfigError("sampled forcing needs both times and samples")
            times = np.asarray(times, dtype=float)
            samples = np.asarray(samples, dtype=complex)
            if times.ndim != 1 or len(times) < 2 or np.any(np.diff(times) <= 0):
                raise ConfigError("forcing sample times must be strictly increasing")
            if samples.shape != (len(times), mode_set.n_modes, 3):
                raise ConfigError("forcing samples do not match times / mode set")
            validate_coeffs(mode_set, samples, "forcing sample")
            self._constant = None
            self._times = times
            self._samples = samples

    @classmethod
    def zero(cls, mode_set: ModeSet) -> "ForcingSpec":
        return cls(mode_set, constant=np.zeros((mode_set.n_modes, 3), dtype=complex))

    @classmethod
    def constant(cls, field: SpectralField) -> "ForcingSpec":
        return cls(field.mode_set, constant=field.coeffs)

    @classmethod
    def sampled(cls, times, fields) -> "ForcingSpec":
        fields = list(fields)
        ms = fields[0].mode_set
        return cls(ms, times=times, samples=np.stack([f.coeffs for f in fields]))

    @property
    def is_constant(self) -> bool:
        return self._constant is not None

    def is_zero(self) -> bool:
        if self.is_constant:
            return not np.any(self._constant)
        return not np.any(self._samples)

    def at(self, t: float) -> np.ndarray:
        """Raw coefficients at time t (clamped to the sampled span)."""
        if self.is_constant:
            return self._constant
        ts = self._times
        t = min(max(t, ts[0]), ts[-1])
        j = int(np.searchsorted(ts, t, side="right") - 1)
        j = min(j, len(ts) - 2)
        w = (t - ts[j]) / (ts[j + 1] - ts[j])
        return (1.0 - w) * self._samples[j] + w * self._samples[j + 1]

    def field_at(self, t: float) -> SpectralField:
        return SpectralField(self.mode_set, self.at(t))


class Trajectory:
    """Time-sampled solution: one state per grid time plus its norm trace."""

    def __init__(
        self,
        config: SolverConfig,
        mode_set: ModeSet,
        times: np.ndarray,
        coeffs: np.ndarray,
        norm_trace: NormTrace,
        status: str = "completed",
        t_star: float | None = None,
        validate: bool = True,
    ):
        times = np.asarray(times, dtype=float)
        coeffs = np.asarray(coeffs, dtype=complex)
        if coeffs.shape != (len(times), mode_set.n_modes, 3):
            raise ConfigError("trajectory state array does not match times / mode set")
        if validate:
            validate_coeffs(mode_set, coeffs, "trajectory state")
        self.config = config
        self.mode_set = mode_set
        self.times = times
        self.coeffs = coeffs
        self.norm_trace = norm_trace
        self.status = status
        self.t_star = t_star

    @property
    def n_times(self) -> int:
        return len(self.times)

    def state(self, i: int) -> SpectralField:
        return SpectralField(self.mode_set, self.coeffs[i])

    @property
    def initial(self) -> SpectralField:
        return self.state(0)

    @property
    def final(self) -> SpectralField:
        return self.state(-1)

    def states(self):
        for i in range(self.n_times):
            yield self.state(i)

    @property
    def sup_V(self) -> float:
        return float(np.max(self.norm_trace.norm_V))

    def interp_raw(self, t: float) -> np.ndarray:
        """Linear interpolation of coefficients at time t (clamped to span)."""
        ts = self.times
        t = min(max(t, ts[0]), ts[-1])
        j = int(np.searchsorted(ts, t, side="right") - 1)
        j = min(j, len(ts) - 2)
        w = (t - ts[j]) / (ts[j + 1] - ts[j])
        return (1.0 - w) * self.coeffs[j] + w * self.coeffs[j + 1]


def build_norm_trace(
    mode_set: ModeSet,
    times: np.ndarray,
    coeffs: np.ndarray,
    forcing: ForcingSpec | None,
) -> NormTrace:
    power = np.einsum("tij,tij->ti", coeffs, np.conj(coeffs)).real
    norm_H = np.sqrt(power.sum(axis=1))
    norm_V = np.sqrt((power * mode_set.k_sq).sum(axis=1))
    norm_DA = np.sqrt((power * mode_set.k_sq**2).sum(axis=1))
    norm_L4 = np.array([norm_l4_raw(mode_set, c) for c in coeffs])
    if forcing is None:
        f_y = np.zeros(len(times))
    else:
        f_y = np.array(
            [float(np.sum(forcing.at(t) * np.conj(c)).real) for t, c in zip(times, coeffs)]
        )
    return NormTrace(
        times=np.asarray(times, dtype=float),
        norm_H=norm_H,
        norm_V=norm_V,
        norm_DA=norm_DA,
        norm_L4=norm_L4,
        int_V2=cumulative_trapezoid(norm_V**2, times),
        int_f_y=cumulative_trapezoid(f_y, times),
        int_L4_8=cumulative_trapezoid(norm_L4**8, times),
    )


def zero_trajectory(config: SolverConfig, mode_set: ModeSet | None = None) -> Trajectory:
    """The identically-zero trajectory on the config's time grid."""
    ms = mode_set or config.mode_set()
    times = config.time_grid()
    coeffs = np.zeros((len(times), ms.n_modes, 3), dtype=complex)
    trace = build_norm_trace(ms, times, coeffs, None)
    return Trajectory(config, ms, times, coeffs, trace, validate=False)


# ---------------------------------------------------------------------------
# integrating-factor Runge-Kutta core
# ---------------------------------------------------------------------------

def _integrate(config: SolverConfig, mode_set: ModeSet, y0: np.ndarray, rhs):
    """March the system dy/dt = -nu A y + G(t, y) across the time grid.

    ``rhs(t, c)`` returns the non-stiff part G.  Returns (times, states,
    status, t_star); on a V-norm cap crossing the arrays are truncated at the
    offending state.
    """
    times = config.time_grid()
    n_states = len(times)
    states = np.empty((n_states, mode_set.n_modes, 3), dtype=complex)
    states[0] = y0
    cap_sq = config.blowup_threshold**2
    k_sq = mode_set.k_sq[:, None]
    half_factors: dict[float, np.ndarray] = {}
    status, t_star = "completed", None
    for n in range(n_states - 1):
        h = times[n + 1] - times[n]
        E = half_factors.get(h)
        if E is None:
            E = np.exp(-config.nu * k_sq * (h / 2.0))
            half_factors[h] = E
        E2 = E * E
        t, y = times[n], states[n]
        if config.scheme == "rk4":
            k1 = rhs(t, y)
            k2 = rhs(t + h / 2.0, E * (y + (h / 2.0) * k1))
            k3 = rhs(t + h / 2.0, E * y + (h / 2.0) * k2)
            k4 = rhs(t + h, E2 * y + h * (E * k3))
            y_new = E2 * y + (h / 6.0) * (E2 * k1 + 2.0 * E * (k2 + k3) + k4)
        else:  # rk2 (Heun on the transformed variable)
            k1 = rhs(t, y)
            k2 = rhs(t + h, E2 * (y + h * k1))
            y_new = E2 * y + (h / 2.0) * (E2 * k1 + k2)
        states[n + 1] = y_new
        v_sq = float(np.sum(mode_set.k_sq * np.einsum("ij,ij->i", y_new, np.conj(y_new)).real))
        if v_sq > cap_sq:
            status, t_star = "blowup", float(times[n + 1])
            times = times[: n + 2]
            states = states[: n + 2]
            break
    return times, states, status, t_star


def _advective_check(config: SolverConfig, trace: NormTrace) -> None:
    load = config.dt * config.K * float(np.max(trace.norm_V, initial=0.0))
    if load > 0.5:
        warnings.warn(
            f"dt * K * sup||y||_V = {load:.3g} > 0.5; explicit advection may be "
            "under-resolved, reduce dt",
            AdvectiveStabilityWarning,
            stacklevel=3,
        )


def _finalize(config, mode_set, times, states, status, t_star, forcing) -> Trajectory:
    trace = build_norm_trace(mode_set, times, states, forcing)
    traj = Trajectory(config, mode_set, times, states, trace, status=status, t_star=t_star)
    _advective_check(config, trace)
    if status == "blowup":
        raise BlowUpDetected(t_star, traj)
    return traj


def _check_inputs(config: SolverConfig, y0: SpectralField, f: ForcingSpec) -> ModeSet:
    ms = config.mode_set()
    if y0.mode_set != ms:
        raise ConfigError(f"initial field on K={y0.mode_set.K}, solver expects K={config.K}")
    if f.mode_set != ms:
        raise ConfigError(f"forcing on K={f.mode_set.K}, solver expects K={config.K}")
    return ms


def solve_nse(y0: SpectralField, f: ForcingSpec, config: SolverConfig) -> Trajectory:
    """Integrate dy/dt + nu A y + B(y, y) = f from y(0) = y0.

    Raises BlowUpDetected (with the partial trajectory attached) if the
    V-norm crosses the configured cap.
    """
    ms = _check_inputs(config, y0, f)

    def rhs(t, c):
        return f.at(t) - advect_project_raw(ms, c, c)

    times, states, status, t_star = _integrate(config, ms, y0.coeffs, rhs)
    return _finalize(config, ms, times, states, status, t_star, f)


def solve_controlled(
    z: Trajectory, y0: SpectralField, f: ForcingSpec, config: SolverConfig
) -> Trajectory:
    """Integrate the linear controlled system dy/dt + nu A y + B(z(t), y) = f.

    The control z is read from its own grid with linear interpolation; the
    solution map is linear in the pair (y0, f) for fixed z.
    """
    ms = _check_inputs(config, y0, f)
    if z.mode_set != ms:
        raise ConfigError("control trajectory lives on a different mode set")
    if z.times[-1] < config.T - 1e-9 * config.T:
        raise ConfigError("control trajectory does not span [0, T]")

    def rhs(t, c):
        return f.at(t) - advect_project_raw(ms, z.interp_raw(t), c)

    times, states, status, t_star = _integrate(config, ms, y0.coeffs, rhs)
    return _finalize(config, ms, times, states, status, t_star, f)


def solve_perturbation(
    y: Trajectory, eta0: SpectralField, g_minus_f: ForcingSpec, config: SolverConfig
) -> Trajectory:
    """Integrate the difference system around a base trajectory y:

        de/dt + nu A e + B(e, e) + B(y, e) + B(e, y) = g - f,  e(0) = z0 - y0.

    Whenever the directly perturbed problem is solvable, y + e matches its
    solution up to cross-solver tolerance.
    """
    ms = _check_inputs(config, eta0, g_minus_f)
    if y.mode_set != ms:
        raise ConfigError("base trajectory lives on a different mode set")
    if y.times[-1] < config.T - 1e-9 * config.T:
        raise ConfigError("base trajectory does not span [0, T]")

    def rhs(t, c):
        yb = y.interp_raw(t)
        return (
            g_minus_f.at(t)
            - advect_project_raw(ms, c, c)
            - advect_project_raw(ms, yb, c)
            - advect_project_raw(ms, c, yb)
        )

    times, states, status, t_star = _integrate(config, ms, eta0.coeffs, rhs)
    return _finalize(config, ms, times, states, status, t_star, g_minus_f)


def trajectory_sup_V_distance(a: Trajectory, b: Trajectory) -> float:
    """sup over shared grid times of ||a(t) - b(t)||_V; grids must match."""
    if a.mode_set != b.mode_set:
        raise ConfigError("trajectories live on different mode sets")
    if len(a.times) != len(b.times) or np.max(np.abs(a.times - b.times)) > 1e-12:
        raise ConfigError("trajectories sampled on different grids")
    d = a.coeffs - b.coeffs
    v_sq = (np.einsum("tij,tij->ti", d, np.conj(d)).real * a.mode_set.k_sq).sum(axis=1)
    return float(np.sqrt(np.max(v_sq, initial=0.0)))
