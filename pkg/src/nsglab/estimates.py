"""Energy functional, explicit stability constants and inequality verification.

Every verifier evaluates both sides of a displayed inequality along computed
trajectories and reports (name, lhs, rhs, margin, passed) rows; failures are
reported, never thrown.  Checks carry a relative slack of RELATIVE_SLACK
times the comparison scale on top of any stated tolerance, so rounding noise
cannot flip a genuinely satisfied bound.

Empirical constants are lower bounds of the true inequality constants, so
verifiers that consume them apply an explicit safety factor (default 2),
recorded in the report context.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import ConfigError
from .fields import SpectralField, cumulative_trapezoid, trapezoid
from .operators import advect_project_raw, apply_A_raw, inner_raw
from .solvers import ForcingSpec, SolverConfig, Trajectory, solve_nse

RELATIVE_SLACK = 1e-9


# ---------------------------------------------------------------------------
# report plumbing
# ---------------------------------------------------------------------------

@dataclass
class Check:
    name: str
    lhs: float
    rhs: float
    margin: float
    passed: bool


@dataclass
class VerificationReport:
    checks: list[Check] = dc_field(default_factory=list)
    context: dict = dc_field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, name: str, lhs: float, rhs: float, tol: float = 0.0,
            scale: float | None = None) -> Check:
        """Record lhs <= rhs with slack tol * scale (scale defaults to |rhs|)."""
        lhs, rhs = float(lhs), float(rhs)
        if scale is None:
            scale = max(abs(rhs), 1.0) if math.isfinite(rhs) else 1.0
        slack = (tol + RELATIVE_SLACK) * scale
        margin = rhs - lhs
        passed = bool(rhs == math.inf or margin >= -slack)
        check = Check(name=name, lhs=lhs, rhs=rhs, margin=margin, passed=passed)
        self.checks.append(check)
        return check

    def find(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_json_dict(self) -> dict:
        def safe(x):
            return x if isinstance(x, (int, float)) and math.isfinite(x) else str(x)

        return {
            "passed": self.passed,
            "context": {k: safe(v) if isinstance(v, float) else v
                        for k, v in self.context.items()},
            "checks": [
                {"name": c.name, "lhs": safe(c.lhs), "rhs": safe(c.rhs),
                 "margin": safe(c.margin), "passed": c.passed}
                for c in self.checks
            ],
        }


# ---------------------------------------------------------------------------
# energy functional and Serrin norm
# ---------------------------------------------------------------------------

def energy_functional(traj: Trajectory, f: ForcingSpec) -> np.ndarray:
    """V(y)(t) = 1/2 ||y(t)||_H^2 + nu int_0^t ||y||_V^2 - int_0^t <f, y>.

    Time integrals use the trapezoid rule on the trajectory grid.  For
    Galerkin solutions with exact time integration the sequence is constant;
    physically it is nonincreasing.
    """
    tr = traj.norm_trace
    f_y = np.array(
        [float(np.sum(f.at(t) * np.conj(c)).real) for t, c in zip(traj.times, traj.coeffs)]
    )
    return (
        0.5 * tr.norm_H**2
        + traj.config.nu * cumulative_trapezoid(tr.norm_V**2, traj.times)
        - cumulative_trapezoid(f_y, traj.times)
    )


def check_energy_inequality(
    traj: Trajectory, f: ForcingSpec, tol: float = 1e-6
) -> VerificationReport:
    """Verify V(t) <= V(s) + tol * (1 + |V(0)|) over all grid pairs s <= t."""
    V = energy_functional(traj, f)
    running_min = np.minimum.accumulate(V)
    violation = V - running_min
    worst = int(np.argmax(violation))
    report = VerificationReport(context={
        "tol": tol,
        "worst_t": float(traj.times[worst]),
        "V0": float(V[0]),
    })
    report.add(
        "energy_nonincreasing",
        lhs=float(violation[worst]),
        rhs=tol * (1.0 + abs(float(V[0]))),
        scale=1.0 + abs(float(V[0])),
    )
    return report


def serrin_norm(traj: Trajectory) -> float:
    """(int_0^T ||y(t)||_L4^8 dt)^(1/8) by the trapezoid rule on the grid."""
    tr = traj.norm_trace
    return float(tr.int_L4_8[-1] ** 0.125)


# ---------------------------------------------------------------------------
# explicit perturbation constants
# ---------------------------------------------------------------------------

@dataclass
class StabilityConstants:
    """The constants governing the perturbation ball around a base solution:

        C     = max(27 c^4 / (2 nu^3), 7^8 c^8 / (2^12 nu^7)) (sup_V^4 + 1)^2
        delta = min(1, nu/4) exp(-2 T C)
        L     = 1 / delta

    ``vacuous`` flags the case where exp(-2TC) underflows to zero: delta is
    reported as 0 and L is omitted, and no perturbation ball exists at this
    floating-point precision.
    """

    nu: float
    T: float
    c: float
    y_V_sup: float
    C: float
    delta: float
    L: float | None
    vacuous: bool

    def to_json_dict(self) -> dict:
        return {
            "nu": self.nu, "T": self.T, "c": self.c, "y_V_sup": self.y_V_sup,
            "C": self.C, "delta": self.delta, "L": self.L, "vacuous": self.vacuous,
        }


def compute_constants(
    c: float,
    nu: float,
    T: float,
    y_traj: Trajectory | None = None,
    y_V_sup: float | None = None,
) -> StabilityConstants:
    """Evaluate the perturbation constants for a given trilinear constant c.

    ``y_V_sup`` is the sup over the base-trajectory grid of the V-norm;
    supply it directly or via ``y_traj``.  T = 0 is accepted (the exponential
    factor is then one).
    """
    if c <= 0:
        raise ConfigError("c must be > 0")
    if nu <= 0:
        raise ConfigError("nu must be > 0")
    if T < 0:
        raise ConfigError("T must be >= 0")
    if (y_traj is None) == (y_V_sup is None):
        raise ConfigError("provide exactly one of y_traj / y_V_sup")
    if y_traj is not None:
        y_V_sup = y_traj.sup_V
    y_V_sup = float(y_V_sup)
    C = max(27.0 * c**4 / (2.0 * nu**3), 7.0**8 * c**8 / (2.0**12 * nu**7))
    C *= (y_V_sup**4 + 1.0) ** 2
    delta = min(1.0, nu / 4.0) * math.exp(-2.0 * T * C) if 2.0 * T * C < 745.0 else 0.0
    vacuous = delta == 0.0
    L = None if vacuous else 1.0 / delta
    return StabilityConstants(
        nu=nu, T=T, c=c, y_V_sup=y_V_sup, C=C, delta=delta, L=L, vacuous=vacuous
    )


# ---------------------------------------------------------------------------
# forcing norms and grid agreement
# ---------------------------------------------------------------------------

def forcing_l2_H_sq(g: ForcingSpec, f: ForcingSpec, times: np.ndarray) -> float:
    """||g - f||^2 over L^2(0,T;H), trapezoid rule on the given grid."""
    sq = np.array([float(np.sum(np.abs(g.at(t) - f.at(t)) ** 2)) for t in times])
    return trapezoid(sq, times)


def _require_matching_grids(a: Trajectory, b: Trajectory) -> None:
    if a.mode_set != b.mode_set:
        raise ConfigError("trajectories live on different mode sets")
    if len(a.times) != len(b.times) or np.max(np.abs(a.times - b.times)) > 1e-12:
        raise ConfigError("trajectories sampled on different grids")


# ---------------------------------------------------------------------------
# perturbation (Lipschitz) bound
# ---------------------------------------------------------------------------

def verify_lipschitz(
    y_traj: Trajectory,
    z_traj: Trajectory,
    constants: StabilityConstants,
    z0: SpectralField,
    g: ForcingSpec,
    y0: SpectralField,
    f: ForcingSpec,
    tol: float = 1e-9,
    context: dict | None = None,
) -> VerificationReport:
    """Check the continuous-dependence bound for a perturbation pair:

        sup_t ||z-y||_V^2 + (nu/2) int_0^T ||z-y||_DA^2  <=  L * data,
        data = ||z0-y0||_V^2 + ||g-f||^2_{L^2(0,T;H)}.

    The data must lie inside the delta-ball; if not (or if the ball is
    vacuous) the report records the precondition violation and the main
    inequality is not asserted.
    """
    _require_matching_grids(y_traj, z_traj)
    ms = y_traj.mode_set
    report = VerificationReport(context=dict(context or {}))
    data = float(
        np.sum(ms.k_sq * np.einsum("ij,ij->i", z0.coeffs - y0.coeffs,
                                   np.conj(z0.coeffs - y0.coeffs)).real)
    ) + forcing_l2_H_sq(g, f, y_traj.times)
    report.context["data"] = data
    report.context["delta"] = constants.delta
    pre = report.add("delta_ball_precondition", lhs=data, rhs=constants.delta,
                     scale=max(constants.delta, 1e-300))
    # strict inequality required; equality counts as outside
    pre.passed = bool(data < constants.delta)
    if not pre.passed or constants.vacuous:
        report.context["inequality_asserted"] = False
        return report
    d = z_traj.coeffs - y_traj.coeffs
    power = np.einsum("tij,tij->ti", d, np.conj(d)).real
    v_sq = (power * ms.k_sq).sum(axis=1)
    da_sq = (power * ms.k_sq**2).sum(axis=1)
    lhs = float(np.max(v_sq)) + 0.5 * constants.nu * trapezoid(da_sq, y_traj.times)
    rhs = constants.L * data
    report.context["inequality_asserted"] = True
    report.add("lipschitz_bound", lhs=lhs, rhs=rhs, tol=tol, scale=max(rhs, 1e-300))
    return report


# ---------------------------------------------------------------------------
# a-priori control bounds for the controlled system
# ---------------------------------------------------------------------------

def verify_gronwall(
    y_traj: Trajectory,
    z_traj: Trajectory,
    c2: float,
    nu: float | None = None,
    safety: float = 2.0,
    f: ForcingSpec | None = None,
    tol: float = 1e-9,
) -> VerificationReport:
    """Check the two a-priori bounds for the homogeneous controlled system:

        ||y(t)||_V^2          <= ||y0||_V^2 exp(2 c2 int_0^t ||z||_L4^8)
        nu int_0^T ||y||_DA^2 <= ||y0||_V^2 (1 + 2 c2 exp(2 c2 S) S),

    with S = int_0^T ||z||_L4^8.  ``c2`` is multiplied by ``safety`` before
    use.  With a nonzero forcing the bounds do not apply; the check is then
    skipped and reported as such.
    """
    _require_matching_grids(y_traj, z_traj)
    if nu is None:
        nu = y_traj.config.nu
    c2s = safety * c2
    report = VerificationReport(context={"c2": c2, "safety": safety, "nu": nu})
    if f is not None and not f.is_zero():
        report.context["skipped"] = "nonzero forcing; homogeneous bound not applicable"
        return report
    tr_y, tr_z = y_traj.norm_trace, z_traj.norm_trace
    S_cum = cumulative_trapezoid(tr_z.norm_L4**8, z_traj.times)
    v0_sq = float(tr_y.norm_V[0] ** 2)
    v_sq = tr_y.norm_V**2
    expo = 2.0 * c2s * S_cum
    growth = np.where(expo < 709.0, np.exp(np.minimum(expo, 709.0)), np.inf)
    bound1 = v0_sq * growth if v0_sq > 0.0 else np.zeros_like(growth)
    deficit = np.where(np.isfinite(bound1), v_sq - bound1, -np.inf)
    worst = int(np.argmax(deficit))
    report.context["worst_t"] = float(y_traj.times[worst])
    report.add("controlled_V_bound", lhs=float(v_sq[worst]), rhs=float(bound1[worst]),
               tol=tol)
    S = float(S_cum[-1])
    lhs2 = nu * trapezoid(tr_y.norm_DA**2, y_traj.times)
    if v0_sq == 0.0:
        rhs2 = 0.0
    elif 2.0 * c2s * S < 709.0:
        rhs2 = v0_sq * (1.0 + 2.0 * c2s * math.exp(2.0 * c2s * S) * S)
    else:
        rhs2 = math.inf
    report.add("controlled_DA_bound", lhs=lhs2, rhs=rhs2, tol=tol)
    return report


# ---------------------------------------------------------------------------
# the four viscosity-split estimates and the capped Gronwall inequality
# ---------------------------------------------------------------------------

def verify_proof_estimates(
    eta_traj: Trajectory,
    y_traj: Trajectory,
    g_minus_f: ForcingSpec,
    c: float,
    nu: float,
    constants: StabilityConstants,
    safety: float = 2.0,
    tol: float = 1e-9,
) -> VerificationReport:
    """Check, at every grid time, the four Young-split estimates

        2 <g-f, A eta>      <= (nu/4) ||eta||_DA^2 + (4/nu) ||g-f||_H^2
        -2 b(eta, eta, A eta) <= (nu/2) ||eta||_DA^2 + (27 c^4 / 2 nu^3) ||eta||_V^6
        -2 b(y, eta, A eta)   <= (nu/2) ||eta||_DA^2 + (27 c^4 / 2 nu^3) Ysup^4 ||eta||_V^2
        -2 b(eta, y, A eta)   <= (nu/2) ||eta||_DA^2 + (7^8 c^8 / 2^12 nu^7) Ysup^8 ||eta||_V^2

    and the integrated inequality for phi = min(||eta||_V^2, 1):

        phi(t) <= phi(0) exp(2Ct) + (4/nu) int_0^t exp(2C(t-s)) ||g-f||_H^2 ds.

    ``c`` is multiplied by ``safety``; C is taken from ``constants``.  Each
    bound is reported at its worst grid time.
    """
    _require_matching_grids(eta_traj, y_traj)
    ms = eta_traj.mode_set
    cs = safety * c
    y_sup = y_traj.sup_V
    report = VerificationReport(context={
        "c": c, "safety": safety, "nu": nu, "C": constants.C, "y_V_sup": y_sup,
    })
    coef_cube = 27.0 * cs**4 / (2.0 * nu**3)
    coef_high = 7.0**8 * cs**8 / (2.0**12 * nu**7)
    n = eta_traj.n_times
    lhs = np.zeros((4, n))
    rhs = np.zeros((4, n))
    tr = eta_traj.norm_trace
    for i in range(n):
        e = eta_traj.coeffs[i]
        yb = y_traj.coeffs[i]
        Ae = apply_A_raw(ms, e)
        da_sq = tr.norm_DA[i] ** 2
        v_sq = tr.norm_V[i] ** 2
        gf = g_minus_f.at(eta_traj.times[i])
        lhs[0, i] = 2.0 * inner_raw(gf, Ae)
        rhs[0, i] = (nu / 4.0) * da_sq + (4.0 / nu) * float(np.sum(np.abs(gf) ** 2))
        lhs[1, i] = -2.0 * inner_raw(advect_project_raw(ms, e, e), Ae)
        rhs[1, i] = (nu / 2.0) * da_sq + coef_cube * v_sq**3
        lhs[2, i] = -2.0 * inner_raw(advect_project_raw(ms, yb, e), Ae)
        rhs[2, i] = (nu / 2.0) * da_sq + coef_cube * y_sup**4 * v_sq
        lhs[3, i] = -2.0 * inner_raw(advect_project_raw(ms, e, yb), Ae)
        rhs[3, i] = (nu / 2.0) * da_sq + coef_high * y_sup**8 * v_sq
    names = ("forcing_split", "self_advection_split", "base_carries_eta_split",
             "eta_carries_base_split")
    for j, name in enumerate(names):
        deficits = lhs[j] - rhs[j]
        worst = int(np.argmax(deficits))
        scale = max(abs(rhs[j, worst]), abs(lhs[j, worst]), 1.0)
        report.add(name, lhs=float(lhs[j, worst]), rhs=float(rhs[j, worst]),
                   tol=tol, scale=scale)
    # integrated bound on phi with exact exponential kernel between grid nodes
    phi = np.minimum(tr.norm_V**2, 1.0)
    h = (4.0 / nu) * np.array(
        [float(np.sum(np.abs(g_minus_f.at(t)) ** 2)) for t in eta_traj.times]
    )
    twoC = 2.0 * constants.C
    R = np.empty(n)
    R[0] = phi[0]
    with np.errstate(over="ignore"):
        for i in range(n - 1):
            step = eta_traj.times[i + 1] - eta_traj.times[i]
            grow = math.exp(twoC * step) if twoC * step < 745.0 else math.inf
            R[i + 1] = grow * (R[i] + 0.5 * step * h[i]) + 0.5 * step * h[i + 1]
    deficits = phi - R
    worst = int(np.argmax(deficits))
    report.add("phi_gronwall", lhs=float(phi[worst]), rhs=float(R[worst]),
               tol=tol, scale=max(float(R[worst]) if math.isfinite(R[worst]) else 1.0, 1.0))
    return report


# ---------------------------------------------------------------------------
# uniqueness proxy: scheme and step-size agreement
# ---------------------------------------------------------------------------

def cross_integrator_uniqueness(
    y0: SpectralField,
    f: ForcingSpec,
    config: SolverConfig,
    tol: float = 1e-5,
) -> VerificationReport:
    """Numerical single-solution proxy: two schemes and two step sizes.

    Solves with RK4 and the second-order scheme at dt and dt/2 and compares
    every pair in sup-V on the coarse grid.  Tolerances scale with the
    expected dominant error order: the cross-scheme pair at dt/2 gets a
    quarter of the base tolerance.  BlowUpDetected propagates to the caller.
    """
    runs = {}
    for scheme in ("rk4", "rk2"):
        for halved in (False, True):
            cfg = config.replace(scheme=scheme, dt=config.dt * 0.5 if halved else config.dt)
            runs[(scheme, halved)] = solve_nse(y0, f, cfg)
    report = VerificationReport(context={"tol": tol, "dt": config.dt})

    def sup_v_on_coarse(a: Trajectory, b: Trajectory) -> float:
        # coarse times are every second fine time by construction (j*dt == 2j*(dt/2))
        ca = a.coeffs if len(a.times) <= len(b.times) else a.coeffs[::2]
        cb = b.coeffs if len(b.times) <= len(a.times) else b.coeffs[::2]
        m = min(len(ca), len(cb))
        d = ca[:m] - cb[:m]
        v_sq = (np.einsum("tij,tij->ti", d, np.conj(d)).real * a.mode_set.k_sq).sum(axis=1)
        return float(np.sqrt(np.max(v_sq, initial=0.0)))

    pairs = [
        (("rk4", False), ("rk2", False), 1.0),
        (("rk4", True), ("rk2", True), 0.25),
        (("rk4", False), ("rk4", True), 1.0),
        (("rk2", False), ("rk2", True), 1.0),
        (("rk4", False), ("rk2", True), 1.0),
        (("rk2", False), ("rk4", True), 1.0),
    ]
    for a_key, b_key, factor in pairs:
        dist = sup_v_on_coarse(runs[a_key], runs[b_key])
        name = "{}_dt{}__vs__{}_dt{}".format(
            a_key[0], "/2" if a_key[1] else "", b_key[0], "/2" if b_key[1] else ""
        )
        report.add(name, lhs=dist, rhs=tol * factor, scale=tol * factor)
    return report


def consistency_with_direct_solve(
    traj: Trajectory, y0: SpectralField, f: ForcingSpec, config: SolverConfig
) -> float:
    """sup-V distance between a trajectory and a direct solve of the same data."""
    direct = solve_nse(y0, f, config)
    d = traj.coeffs - direct.coeffs
    v_sq = (np.einsum("tij,tij->ti", d, np.conj(d)).real * traj.mode_set.k_sq).sum(axis=1)
    return float(np.sqrt(np.max(v_sq, initial=0.0)))
