"""Tail-coefficient formulas: forcing average, c(omega), c0, d(omega), d_X.

A smooth switch chi(t_*) converts the initial value problem into a forcing
problem Box(chi phi) = f with

    f = chi a phi^p - 2 chi' (rho Q + g00 d_t) phi - chi'' g00 phi ,

and the time average fhat0 = int f dt_* expands near scri as
c(omega) rho^3 + d(omega) rho^4 + O(rho^5).  The leading tail coefficients
are then

    c0  = (1/4pi) int_S2 ( int_0^inf a0 rad1^3 dt - 2 c2 - gtilde d1 ) domega
    d_X = (m/pi) int_X (fhat0 - Boxhat0(ctilde rho)) |dg_X|
          - (1/2pi) int_S2 d(omega) domega ,

with ctilde the harmonic inversion of c(omega) by 1/(k(k+1)), k >= 1 (the
hypothesis being that c(omega) has vanishing average).  All final numbers
are independent of the choice of cutoff; the two-window evaluation is kept
as a numerical consistency check.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .angular import AngularField, SphereGrid, sphere_average
from .geometry import NonIntegrableError, volume_integral
from .radiation import (RadiationSeries, cumulative_integral, integral,
                        rad2_from_recursion, time_derivative, _eval_time_map,
                        _angular_laplacian_series)


class TruncationError(RuntimeError):
    """A time quadrature was cut before its tail converged."""

    def __init__(self, msg, t_required=None):
        super().__init__(msg)
        self.t_required = t_required


class MeanNotZeroError(ValueError):
    """c(omega) violates the vanishing-average hypothesis."""


# ---------------------------------------------------------------------------
# cutoff switches
# ---------------------------------------------------------------------------

def _smoothstep7(x):
    """C^3 polynomial step: 0 at x<=0, 1 at x>=1 (7th order)."""
    x = np.clip(x, 0.0, 1.0)
    return x ** 4 * (35.0 - 84.0 * x + 70.0 * x ** 2 - 20.0 * x ** 3)


def _smoothstep7_d(x):
    inside = (x > 0.0) & (x < 1.0)
    x = np.clip(x, 0.0, 1.0)
    return np.where(inside, 140.0 * x ** 3 * (1.0 - x) ** 3, 0.0)


def _smoothstep7_dd(x):
    inside = (x > 0.0) & (x < 1.0)
    x = np.clip(x, 0.0, 1.0)
    return np.where(inside, 420.0 * x ** 2 * (1.0 - x) ** 2 * (1.0 - 2.0 * x), 0.0)


@dataclass(frozen=True)
class CutoffSpec:
    """Smooth switch chi: 0 for t <= t0, 1 for t >= t1 (7th-order smoothstep)."""

    t0: float = 0.5
    t1: float = 1.0

    def __post_init__(self):
        if not (0.0 < self.t0 < self.t1):
            raise ValueError("cutoff needs 0 < t0 < t1")

    def chi(self, t):
        return _smoothstep7((np.asarray(t, dtype=float) - self.t0) / (self.t1 - self.t0))

    def chi_prime(self, t):
        x = (np.asarray(t, dtype=float) - self.t0) / (self.t1 - self.t0)
        return _smoothstep7_d(x) / (self.t1 - self.t0)

    def chi_double_prime(self, t):
        x = (np.asarray(t, dtype=float) - self.t0) / (self.t1 - self.t0)
        return _smoothstep7_dd(x) / (self.t1 - self.t0) ** 2

    def label(self):
        return f"{self.t0:g}:{self.t1:g}"


# ---------------------------------------------------------------------------
# angular coefficient c(omega) and the constant c0
# ---------------------------------------------------------------------------

def _series_coverage_check(series, cutoff):
    t = series.times
    if t[0] > 1e-9 or t[-1] < cutoff.t1:
        raise ValueError(f"series does not cover the cutoff window "
                         f"[{cutoff.t0}, {cutoff.t1}]")


def c_angular(rad1, rad2, gtilde, cutoff, a0=None):
    """c(omega) = int (chi a0 rad1^3 - 2 chi' rad2 - chi' gtilde d_t rad1) dt.

    ``rad1``/``rad2`` may be the same RadiationSeries carrying both fields.
    Passing a0=None drops the cubic term (the p >= 4 variant).  Returns an
    AngularField (constant on the sphere for spherically symmetric runs).
    """
    series = rad1
    _series_coverage_check(series, cutoff)
    t = series.times
    R1 = series.rad1
    R2 = rad2.rad2 if isinstance(rad2, RadiationSeries) else np.asarray(rad2)
    if R2 is None:
        raise ValueError("rad2 values missing")
    sphere = series.sphere or SphereGrid(2)
    gt = gtilde.values if isinstance(gtilde, AngularField) and R1.ndim > 1 \
        else (gtilde.average() if isinstance(gtilde, AngularField) else float(gtilde))
    dR1 = time_derivative(t, R1)
    chip = cutoff.chi_prime(t)
    shape = (-1,) + (1,) * (R1.ndim - 1)
    chip = chip.reshape(shape)
    integrand = -2.0 * chip * R2 - chip * gt * dR1
    if a0 is not None:
        a0v = _eval_time_map(a0, t, R1, sphere)
        integrand = integrand + cutoff.chi(t).reshape(shape) * a0v * R1 ** 3
    vals = integral(t, integrand)
    if np.ndim(vals) == 0:
        return AngularField.constant(float(vals), sphere)
    return AngularField(sphere, vals)


def c_scale(rad1, rad2, gtilde, cutoff, a0=None):
    """Magnitude of the pieces whose cancellation produces c(omega).

    Used as the reference scale for 'vanishing average' checks when the run
    is spherically symmetric and c(omega) itself cancels to zero.
    """
    series = rad1
    t = series.times
    R1 = series.rad1
    R2 = rad2.rad2 if isinstance(rad2, RadiationSeries) else np.asarray(rad2)
    sphere = series.sphere or SphereGrid(2)
    gt = gtilde.average() if isinstance(gtilde, AngularField) else float(gtilde)
    dR1 = time_derivative(t, R1)
    chip = np.abs(cutoff.chi_prime(t))
    shape = (-1,) + (1,) * (R1.ndim - 1)
    chip = chip.reshape(shape)
    integrand = 2.0 * chip * np.abs(R2) + chip * abs(np.max(np.abs(np.atleast_1d(gt)))) * np.abs(dR1)
    if a0 is not None:
        a0v = _eval_time_map(a0, t, R1, sphere)
        integrand = integrand + np.abs(cutoff.chi(t).reshape(shape) * a0v * R1 ** 3)
    vals = integral(t, integrand)
    return float(np.max(np.atleast_1d(vals)))


@dataclass
class C0Result:
    value: float
    uncertainty: float
    tail_remainder: float
    alternates: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def __float__(self):
        return self.value


def _tail_remainder_power(t, g, expected_power=3.0):
    """Bound int_T^inf g dt for g ~ C t^-q by fitting the late samples."""
    sel = t > 0.5 * t[-1]
    if np.count_nonzero(sel) < 5 or np.max(np.abs(g[sel])) == 0.0:
        return 0.0, expected_power
    gs = np.abs(g[sel])
    pos = gs > 0
    if np.count_nonzero(pos) < 5:
        return 0.0, expected_power
    q, logc = np.polyfit(np.log(t[sel][pos]), np.log(gs[pos]), 1)
    q = -q
    if q <= 1.01:
        return math.inf, q
    C = math.exp(logc)
    return C * t[-1] ** (1.0 - q) / (q - 1.0), q


def c0(rad1, a0, c2=0.0, d1=0.0, gtilde=-1.0,
       cutoffs=(CutoffSpec(0.5, 1.0), CutoffSpec(2.0, 4.0)), rtol=0.05):
    """Leading tail coefficient for cubic nonlinearities.

    Direct formula: (1/4pi) int_S2 (int_0^inf a0 rad1^3 dt - 2 c2
    - gtilde d1) domega, with the truncated time integral's remainder bound
    (integrand ~ t^-3) reported as the uncertainty.  For each cutoff in
    ``cutoffs`` the alternate route (1/4pi) int c(omega) is evaluated via
    the rad2 recursion; agreement is the cutoff-independence check.
    """
    t = rad1.times
    R1 = rad1.rad1
    sphere = rad1.sphere or SphereGrid(2)
    a0v = _eval_time_map(a0, t, R1, sphere)
    integrand = a0v * R1 ** 3
    if R1.ndim > 1:
        avg_int = np.tensordot(integrand, sphere.weights,
                               axes=([1, 2], [0, 1])) / (4.0 * math.pi)
    else:
        avg_int = integrand
    time_int = integral(t, avg_int)
    remainder, q_fit = _tail_remainder_power(t, avg_int)
    c2a = c2.average() if isinstance(c2, AngularField) else float(c2)
    gd = sphere_average(gtilde * d1) if isinstance(gtilde, AngularField) \
        and isinstance(d1, AngularField) else (
        (gtilde.average() if isinstance(gtilde, AngularField) else float(gtilde))
        * (d1.average() if isinstance(d1, AngularField) else float(d1)))
    value = time_int - 2.0 * c2a - gd
    scale = max(abs(value), np.max(np.abs(avg_int)) * max(t[-1], 1.0) * 1e-3, 1e-300)
    if not math.isfinite(remainder) or remainder > rtol * scale:
        t_req = None
        if math.isfinite(remainder) and q_fit > 1.01:
            t_req = t[-1] * (remainder / (rtol * scale)) ** (1.0 / (q_fit - 1.0))
        raise TruncationError(
            f"time-integral tail remainder {remainder:.3g} exceeds "
            f"tolerance {rtol * scale:.3g}; extend the run to T ~ {t_req}",
            t_required=t_req)
    alternates = {}
    series2 = rad2_from_recursion(rad1, c2=c2, d1=d1, gtilde=gtilde, a0=a0)
    for co in cutoffs:
        cfield = c_angular(series2, series2, gtilde, co, a0=a0)
        alternates[co.label()] = cfield.average()
    return C0Result(value=float(value), uncertainty=float(remainder),
                    tail_remainder=float(remainder),
                    alternates=alternates,
                    meta={"tail_exponent_fit": q_fit,
                          "T": float(t[-1])})


# ---------------------------------------------------------------------------
# d(omega), harmonic inversion, d_X
# ---------------------------------------------------------------------------

def d_angular(rad1, rad2, rad3, decomp, b0, p, cutoff):
    """d(omega) = int (chi F_p - 4 chi' rad3 - 2 chi' Qt1 rad1
    - chi' gtilde d_t rad2 - chi' g3 d_t rad1) dt,  F_p = b0 rad1^4 iff p=4.
    """
    if p < 4:
        raise ValueError("d(omega) is defined for p >= 4 only")
    series = rad3 if rad3.rad3 is not None else None
    if series is None:
        raise ValueError("rad3 values missing")
    _series_coverage_check(series, cutoff)
    t = series.times
    R1 = rad1.rad1
    R2 = rad2.rad2
    R3 = series.rad3
    sphere = series.sphere or SphereGrid(2)
    spherical = R1.ndim == 1
    gt = decomp.gtilde.average() if spherical else decomp.gtilde.values
    g3 = decomp.g3.average() if spherical else decomp.g3.values
    chip = cutoff.chi_prime(t)
    chi = cutoff.chi(t)
    shape = (-1,) + (1,) * (R1.ndim - 1)
    chip = chip.reshape(shape)
    chi = chi.reshape(shape)
    dR1 = time_derivative(t, R1)
    dR2 = time_derivative(t, R2)
    qt1R1 = decomp.qtilde1_scri_coeff * R1
    Fp = _eval_time_map(b0, t, R1, sphere) * R1 ** 4 if p == 4 else np.zeros_like(R1)
    integrand = (chi * Fp - 4.0 * chip * R3 - 2.0 * chip * qt1R1
                 - chip * gt * dR2 - chip * g3 * dR1)
    vals = integral(t, integrand)
    if np.ndim(vals) == 0:
        return AngularField.constant(float(vals), sphere)
    return AngularField(sphere, vals)


def tilde_c(c, mean_tol=None):
    """Invert L0 on the rho^1 level: divide the (k, m) coefficient by k(k+1).

    Requires the spherical average of c to vanish (within ``mean_tol``,
    default 1e-6 of the field's sup norm); the k = 0 coefficient is dropped.
    """
    mean = c.average()
    scale = max(c.norm_inf(), 1e-300)
    tol = mean_tol if mean_tol is not None else 1e-6 * scale
    if abs(mean) > tol:
        raise MeanNotZeroError(
            f"c(omega) has nonvanishing average {mean:.3g} "
            f"(tolerance {tol:.3g}); the harmonic inversion requires mean 0")
    coeffs = c.coefficients().copy()
    ells = c.grid.ell_of_mode()
    coeffs[ells == 0] = 0.0
    nz = ells > 0
    coeffs[nz] = coeffs[nz] / (ells[nz] * (ells[nz] + 1.0))
    return AngularField(c.grid, c.grid.synthesize(coeffs))


@dataclass
class DXResult:
    value: float
    volume_term: float
    sphere_term: float
    meta: dict = field(default_factory=dict)

    def __float__(self):
        return self.value


def box0_of_ctilde_rho(c_tilde, grid, mass):
    """Boxhat0(ctilde * rho) on a radial x angular layout, analytically.

    Boxhat0(ctilde rho) = rho^3 Lap_omega ctilde + 2 m rho^4 ctilde for the
    metric family used here (L2 = 0).
    """
    lap = c_tilde.laplacian().values
    rho = grid.rho.copy()
    if grid.s_min == 0.0:
        rho[0] = 0.0  # the center value is irrelevant (weight r^2 -> 0)
    return (rho[:, None, None] ** 3 * lap[None, :, :]
            + 2.0 * mass * rho[:, None, None] ** 4 * c_tilde.values[None, :, :])


def dX(forcing, c_tilde, d, metric, decomp):
    """d_X = (m/pi) int_X (fhat0 - Boxhat0(ctilde rho)) |dg_X|
    - (1/2pi) int_S2 d(omega) domega.

    The volume term is skipped for massless backgrounds.  Raises
    NonIntegrableError when the subtraction fails to reach the rho^3.5
    integrability threshold (wrong ctilde or under-resolved expansion).
    """
    sphere_term = -d.integral() / (2.0 * math.pi)
    volume_term = 0.0
    if metric.mass != 0.0:
        grid = forcing.grid
        fv = forcing.fhat0
        if fv.ndim == 1:
            lap_avg = sphere_average(c_tilde.laplacian())
            ct_avg = c_tilde.average()
            rho = grid.rho.copy()
            if grid.s_min == 0.0:
                rho[0] = 0.0
            w = fv - (rho ** 3 * lap_avg + 2.0 * metric.mass * rho ** 4 * ct_avg)
        else:
            w = fv - box0_of_ctilde_rho(c_tilde, grid, metric.mass)
            w = np.tensordot(w, forcing.sphere.weights, axes=([1, 2], [0, 1])) \
                / (4.0 * math.pi)
        vol = volume_integral(metric, w, grid=grid)
        volume_term = metric.mass / math.pi * vol
    value = volume_term + sphere_term
    return DXResult(value=value, volume_term=volume_term,
                    sphere_term=sphere_term,
                    meta={"mass": metric.mass})


# ---------------------------------------------------------------------------
# forcing assembly from a trajectory
# ---------------------------------------------------------------------------

@dataclass
class ForcingProfile:
    """Time-averaged forcing fhat0 with its fitted scri expansion."""

    fhat0: np.ndarray           # (n,) or (n, ntheta, nphi) on grid
    grid: object
    c_fit: AngularField
    d_fit: AngularField
    fit_noise: float
    fit_residual_norm: float
    sphere: SphereGrid = None
    cutoff: CutoffSpec = None
    meta: dict = field(default_factory=dict)

    def tail_exponent(self):
        rho = self.grid.rho
        f = self.fhat0 if self.fhat0.ndim == 1 else np.tensordot(
            self.fhat0, self.sphere.weights, axes=([1, 2], [0, 1]))
        sel = (rho > 1e-3) & (rho < 0.1) & (np.abs(f) > 0)
        if np.count_nonzero(sel) < 4:
            return math.inf
        q, _ = np.polyfit(np.log(rho[sel]), np.log(np.abs(f[sel])), 1)
        return float(q)


def _fd_s_derivative(vals, ds):
    """4th-order d/ds with one-sided closures, along axis 0."""
    n = vals.shape[0]
    out = np.empty_like(vals)
    out[2:-2] = (vals[:-4] - 8.0 * vals[1:-3] + 8.0 * vals[3:-1]
                 - vals[4:]) / (12.0 * ds)
    out[0] = (-25.0 * vals[0] + 48.0 * vals[1] - 36.0 * vals[2]
              + 16.0 * vals[3] - 3.0 * vals[4]) / (12.0 * ds)
    out[1] = (-3.0 * vals[0] - 10.0 * vals[1] + 18.0 * vals[2]
              - 6.0 * vals[3] + vals[4]) / (12.0 * ds)
    out[-2] = (3.0 * vals[-1] + 10.0 * vals[-2] - 18.0 * vals[-3]
               + 6.0 * vals[-4] - vals[-5]) / (12.0 * ds)
    out[-1] = (25.0 * vals[-1] - 48.0 * vals[-2] + 36.0 * vals[-3]
               - 16.0 * vals[-4] + 3.0 * vals[-5]) / (12.0 * ds)
    return out


def forcing_snapshot(state, metric, grid, spec, cutoff):
    """f(t, x) = chi a phi^p - 2 chi'(rho Q + g00 d_t) phi - chi'' g00 phi."""
    t = state.t_star
    chi = float(cutoff.chi(t))
    chip = float(cutoff.chi_prime(t))
    chipp = float(cutoff.chi_double_prime(t))
    rho = grid.rho.copy()
    if grid.s_min == 0.0:
        rho[0] = 0.0  # phi = rho*Phi at the pinned center is 0
    phi = rho * state.Phi
    if grid.s_min == 0.0:
        phi[0] = _center_value(grid, state.Phi)
    dtphi = rho * state.Pi
    if grid.s_min == 0.0:
        dtphi[0] = _center_value(grid, state.Pi)
    out = np.zeros_like(phi)
    if chi != 0.0 and not spec.linear:
        a = np.empty(grid.n)
        a[:-1] = spec.nonlin.spatial(grid.r[:-1])
        a[-1] = spec.nonlin.spatial_scri()
        out += chi * spec.nonlin.tfac(t) * a * phi ** spec.power
    if chip != 0.0 or chipp != 0.0:
        k = np.empty(grid.n)
        k[:-1] = metric.k_of_r(grid.r[:-1])
        k[-1] = 1.0
        kp = np.empty(grid.n)
        kp[:-1] = metric.kprime_of_r(grid.r[:-1])
        kp[-1] = 0.0
        two_k_over_r = 2.0 * k * rho
        if grid.s_min == 0.0:
            # k/r -> k'(0) at the regular center
            two_k_over_r[0] = 2.0 * metric.kprime_of_r(np.array([0.0]))[0]
        dphidr = grid.ds_dr * _fd_s_derivative(phi, grid.ds)
        g00 = np.empty(grid.n)
        g00[:-1] = metric.g00_profile(grid.r[:-1])
        g00[-1] = 0.0
        rhoQphi = -k * dphidr - 0.5 * (kp + two_k_over_r) * phi
        out += -2.0 * chip * (rhoQphi + g00 * dtphi) - chipp * g00 * phi
    return out


def _center_value(grid, Phi):
    """phi(0) = lim Phi/r by one-sided 4th-order extrapolation of Phi/r."""
    vals = Phi[1:5] / grid.r[1:5]
    # Lagrange extrapolation to s = 0 from nodes 1..4
    return 4.0 * vals[0] - 6.0 * vals[1] + 4.0 * vals[2] - vals[3]


def assemble_forcing(traj, spec, cutoff, rtol=1e-3, fit_rho_max=0.1):
    """Time-average the forcing over the run and fit its scri expansion.

    Uses the trajectory snapshots; they must sample [0, t1] densely and
    extend far enough that the nonlinear tail of the time integral is
    below ``rtol`` (otherwise TruncationError reports the needed T).
    """
    snaps = traj.snapshots
    if len(snaps) < 8:
        raise ValueError("trajectory carries too few snapshots for forcing "
                         "assembly; plan snapshots densely over the cutoff")
    times = np.array([s.t_star for s in snaps])
    if times[0] > 1e-9 or times[-1] < cutoff.t1:
        raise ValueError("snapshots do not cover the cutoff window")
    metric_kind = traj.spec_info.get("metric")
    if metric_kind == "normal_form":
        raise ValueError("no forcing on normal_form models")
    metric = spec.metric
    grid = traj.grid
    rows = np.empty((len(snaps), grid.n))
    for i, st in enumerate(snaps):
        rows[i] = forcing_snapshot(st, metric, grid, spec, cutoff)
    fhat0 = integral(times, rows)
    # remainder of the chi a phi^p tail beyond the last snapshot
    if not spec.linear:
        sup = np.max(np.abs(rows), axis=1)
        rem, q = _tail_remainder_power(times, sup)
        scale = max(float(np.max(np.abs(fhat0))), 1e-300)
        if not math.isfinite(rem) or rem > rtol * scale:
            t_req = None
            if math.isfinite(rem) and q > 1.01:
                t_req = times[-1] * (rem / (rtol * scale)) ** (1.0 / (q - 1.0))
            raise TruncationError(
                f"forcing tail remainder {rem:.3g} above tolerance; "
                f"snapshots should extend to T ~ {t_req}", t_required=t_req)
    else:
        rem = 0.0
    # weighted fit of fhat0 ~ c rho^3 + d rho^4 near scri:
    # fit y = fhat0/rho^3 against {1, rho} on a plateau-selected window
    rho = grid.rho
    best = None
    for rho_min in (2e-3, 4e-3, 8e-3, 1.6e-2, 3.2e-2):
        sel = (rho >= rho_min) & (rho <= fit_rho_max)
        if np.count_nonzero(sel) < 8:
            continue
        y = fhat0[sel] / rho[sel] ** 3
        Amat = np.vstack([np.ones(np.count_nonzero(sel)), rho[sel]]).T
        coef, res, _, _ = np.linalg.lstsq(Amat, y, rcond=None)
        pred = Amat @ coef
        resid = float(np.sqrt(np.mean((y - pred) ** 2)))
        rel = resid / max(np.max(np.abs(y)), 1e-300)
        if best is None or rel < best[0]:
            best = (rel, coef, resid, rho_min)
    if best is None:
        raise ValueError("no usable fit window near scri")
    rel, coef, resid, rho_min = best
    sphere = metric.sphere
    c_fit = AngularField.constant(coef[0], sphere)
    d_fit = AngularField.constant(coef[1], sphere)
    return ForcingProfile(
        fhat0=fhat0, grid=grid, c_fit=c_fit, d_fit=d_fit,
        fit_noise=rel, fit_residual_norm=resid, sphere=sphere, cutoff=cutoff,
        meta={"rho_min": rho_min, "tail_remainder": float(rem),
              "snapshots": len(snaps), "t_last": float(times[-1])})
