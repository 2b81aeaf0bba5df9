"""Stationary asymptotically flat backgrounds on hyperboloidal slices.

A background is specified by its dual metric in (t_*, r, omega) coordinates,

    g^-1 = g00 dt_*^2-part + 2 g0r dt_* dr-part + grr dr^2-part + rho^2 (sphere),

subject to the asymptotic-flatness structure: g00 = O(rho^2) and negative
(the slicing stays timelike all the way to null infinity), g0r = -1 + O(rho^2)
(asymptotically outgoing-null), grr = 1 - 2*m*rho.  Three model kinds:

* ``minkowski_hyperboloidal`` -- exact Minkowski sliced by t_* = t - h(r),
  default height h(r) = sqrt(L^2 + r^2) - L with L = 1.
* ``mass_deformed`` -- grr = 1 - 2*m*rho with the same asymptotically null
  slicing; the domain is restricted to r >= 3*m (no horizon treatment), with
  a sponge layer at the inner edge during evolution.  The slicing height has
  h'(r) = k(r)/(1 - 2m/r), which matches the tortoise-coordinate rate
  dr_*/dr as r -> infinity and is smooth on the restricted domain.
* ``normal_form`` -- test-only operator family: the radial operator pieces
  are prescribed exactly (L2 = Qtilde = 0, g00 = gtilde0 * rho^2) without
  claiming a genuine metric.  Evolution refuses to run on it.

Both genuine metrics have 2x2 (t_*, r) metric-block determinant -1, so the
spatial volume density is exactly |dg_X| = r^2 dr domega.

The wave operator splits as  Box = Boxhat0 - g00 d_t^2 - 2 rho d_t Q  with
rho^-2 Boxhat0 = L0 + rho L1 + rho^2 L2, L0 = -(rho d_rho)^2 + rho d_rho
+ Lap_omega (positive spherical Laplacian) and L1 = 2 m (rho d_rho)^2.  For
the models here L2 = 0 identically and Q = Q0 + rho^2 Qtilde with
Q0 = rho d_rho - 1 and Qtilde = q1(rho) * rho d_rho - (q1 + q2)(rho),
q1 = (k - 1)/rho^2, q2 = L^2 / (2 (1 + L^2 rho^2)^(3/2)).

The radial compactification is s in [0, 1] with r = 2 s / (1 - s); the grid
is uniform in s, putting the regular center at s = 0 and scri at s = 1.
Expansion coefficients of numeric profiles are obtained by Richardson
extrapolation in rho rather than symbolically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import simpson

from .angular import AngularField, SphereGrid

MODEL_KINDS = ("minkowski_hyperboloidal", "mass_deformed", "normal_form")


class SlicingError(ValueError):
    """Raised when a height function does not give a timelike slicing."""


class NonIntegrableError(ValueError):
    """Raised when a volume integrand decays too slowly near scri."""


def tortoise(r, m):
    """Tortoise radial coordinate r + 2m log(r - 2m) (domain r > 2m)."""
    r = np.asarray(r, dtype=float)
    m = float(m)
    if m < 0:
        raise ValueError("mass must be nonnegative")
    if m > 0 and np.any(r <= 2.0 * m):
        raise ValueError("tortoise coordinate requires r > 2m")
    if m == 0:
        out = r.copy()
    else:
        out = r + 2.0 * m * np.log(r - 2.0 * m)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class HeightFunction:
    """Slicing height t_* = t - h(r).

    The default family is h(r) = sqrt(scale^2 + r^2) - scale: smooth,
    h ~ r^2/(2 scale) near the center, h - r -> -scale at infinity.
    A custom (h, dh, d2h) triple may be supplied for flat backgrounds.
    """

    scale: float = 1.0
    custom: tuple = None  # (h, dh, d2h) callables

    def describe(self):
        if self.custom is not None:
            return "custom"
        return f"sqrt({self.scale}^2+r^2)-{self.scale}"

    def h(self, r):
        if self.custom is not None:
            return self.custom[0](r)
        L = self.scale
        return np.sqrt(L * L + np.asarray(r, dtype=float) ** 2) - L

    def dh(self, r):
        if self.custom is not None:
            return self.custom[1](r)
        L = self.scale
        r = np.asarray(r, dtype=float)
        return r / np.sqrt(L * L + r * r)

    def d2h(self, r):
        if self.custom is not None:
            return self.custom[2](r)
        L = self.scale
        r = np.asarray(r, dtype=float)
        return L * L / (L * L + r * r) ** 1.5


class RadialGrid:
    """Uniform grid in the compactified coordinate s, r = 2s/(1-s)."""

    def __init__(self, n, s_min=0.0):
        if n < 16:
            raise ValueError("radial grid needs at least 16 points")
        self.n = int(n)
        self.s_min = float(s_min)
        self.s = np.linspace(self.s_min, 1.0, self.n)
        self.ds = self.s[1] - self.s[0]
        with np.errstate(divide="ignore"):
            self.r = 2.0 * self.s / (1.0 - self.s)        # r = inf at s = 1
            self.rho = (1.0 - self.s) / (2.0 * self.s)    # rho = inf at s = 0
        # Jacobians of the compactification, finite on (0, 1]
        self.ds_dr = 0.5 * (1.0 - self.s) ** 2
        self.d2s_dr2 = -0.5 * (1.0 - self.s) ** 3

    def index_of_r(self, r):
        s = r / (r + 2.0)
        return (s - self.s_min) / self.ds

    def interp_weights(self, r):
        """4-point Lagrange interpolation stencil for radius r -> (i0, w[4])."""
        x = self.index_of_r(r)
        i0 = int(np.clip(np.floor(x) - 1, 0, self.n - 4))
        t = x - i0
        w = np.empty(4)
        for j in range(4):
            num = 1.0
            for k in range(4):
                if k != j:
                    num *= (t - k) / (j - k)
            w[j] = num
        return i0, w


def _derivative_matrix_logrho(x):
    """4th-order FD matrix for d/dx on a uniform grid x = log(rho)."""
    n = x.size
    dx = x[1] - x[0]
    D = np.zeros((n, n))
    c = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / (12.0 * dx)
    for i in range(2, n - 2):
        D[i, i - 2:i + 3] = c
    # one-sided 4th-order closures
    e0 = np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / (12.0 * dx)
    e1 = np.array([-3.0, -10.0, 18.0, -6.0, 1.0]) / (12.0 * dx)
    D[0, :5] = e0
    D[1, :5] = e1
    D[n - 1, -5:] = -e0[::-1]
    D[n - 2, -5:] = -e1[::-1]
    return D


class OperatorDecomposition:
    """Numeric realizations of the operator pieces of the wave operator.

    Profiles handed to the actions live on a log-spaced rho grid (uniform in
    x = log rho), optionally with trailing angular axes matching ``sphere``.
    """

    def __init__(self, mass, gtilde, g3, height_scale=1.0, normal_form=False,
                 sphere=None, rho_grid=None):
        self.mass = float(mass)
        self.sphere = sphere or SphereGrid(8)
        if isinstance(gtilde, (int, float)):
            gtilde = AngularField.constant(gtilde, self.sphere)
        if isinstance(g3, (int, float)):
            g3 = AngularField.constant(g3, self.sphere)
        self.gtilde = gtilde
        self.g3 = g3
        self.height_scale = float(height_scale)
        self.normal_form = bool(normal_form)
        if rho_grid is None:
            rho_grid = np.exp(np.linspace(math.log(1e-4), 0.0, 1025))
        self.rho = np.asarray(rho_grid, dtype=float)
        self._x = np.log(self.rho)
        self._D = _derivative_matrix_logrho(self._x)

    # -- b-derivative rho d_rho = d/d(log rho) ------------------------------
    def bderiv(self, u):
        u = np.asarray(u, dtype=float)
        return np.tensordot(self._D, u, axes=(1, 0))

    def _q1(self, rho):
        L = self.height_scale
        root = np.sqrt(1.0 + (L * rho) ** 2)
        return -L * L / (root * (1.0 + root))

    def _q2(self, rho):
        L = self.height_scale
        return L * L / (2.0 * (1.0 + (L * rho) ** 2) ** 1.5)

    def qtilde_action(self, u):
        """Qtilde = q1 * (rho d_rho - 1) - q2, zero for normal-form models."""
        if self.normal_form:
            return np.zeros_like(np.asarray(u, dtype=float))
        q1 = self._q1(self.rho)
        q2 = self._q2(self.rho)
        shape = (-1,) + (1,) * (np.asarray(u).ndim - 1)
        return q1.reshape(shape) * (self.bderiv(u) - u) - q2.reshape(shape) * u

    def qtilde1_action(self, u):
        """Qtilde1 = rho^-1 o Qtilde o rho = q1 * rho d_rho - q2."""
        if self.normal_form:
            return np.zeros_like(np.asarray(u, dtype=float))
        q1 = self._q1(self.rho)
        q2 = self._q2(self.rho)
        shape = (-1,) + (1,) * (np.asarray(u).ndim - 1)
        return q1.reshape(shape) * self.bderiv(u) - q2.reshape(shape) * u

    @property
    def qtilde1_scri_coeff(self):
        """Qtilde1 restricted to scri acts on (t, omega)-functions as this factor."""
        if self.normal_form:
            return 0.0
        return -float(self._q2(0.0))

    def l2_action(self, u):
        """L2 vanishes identically for every model built here."""
        return np.zeros_like(np.asarray(u, dtype=float))

    def _angular_laplacian(self, u):
        if u.ndim == 1:
            return np.zeros_like(u)
        flat = u.reshape(u.shape[0], -1)
        out = np.empty_like(flat)
        g = self.sphere
        ll = g.ell_of_mode() * (g.ell_of_mode() + 1)
        for i in range(flat.shape[0]):
            c = g.analyze(flat[i].reshape(g.shape)) * ll
            out[i] = g.synthesize(c).ravel()
        return out.reshape(u.shape)

    def box0_action(self, u):
        """u -> Boxhat0 u = rho^2 (L0 + rho L1 + rho^2 L2) u on the rho grid."""
        u = np.asarray(u, dtype=float)
        Du = self.bderiv(u)
        D2u = self.bderiv(Du)
        L0u = -D2u + Du + self._angular_laplacian(u)
        shape = (-1,) + (1,) * (u.ndim - 1)
        rho = self.rho.reshape(shape)
        out = rho ** 2 * L0u
        if self.mass != 0.0:
            out += rho ** 3 * (2.0 * self.mass) * D2u
        return out


def apply_box_zero(decomp, u):
    """Apply the zero-frequency wave operator Boxhat0 to a profile."""
    return decomp.box0_action(u)


class MetricModel:
    """A stationary asymptotically flat background with extracted expansion data."""

    def __init__(self, kind, mass, height, sphere=None, gtilde0=-1.0):
        if kind not in MODEL_KINDS:
            raise ValueError(f"unknown metric kind {kind!r}")
        self.kind = kind
        self.mass = float(mass)
        self.height = height
        self.sphere = sphere or SphereGrid(8)
        self._gtilde0 = float(gtilde0)
        L = height.scale if height.custom is None else None
        if kind == "normal_form":
            self.gtilde = AngularField.constant(gtilde0, self.sphere)
            self.g3 = AngularField.constant(0.0, self.sphere)
        elif height.custom is None:
            self.gtilde = AngularField.constant(-L * L, self.sphere)
            self.g3 = AngularField.constant(-2.0 * self.mass * L * L, self.sphere)
        else:
            gt, g3 = self._fit_expansion()
            self.gtilde = AngularField.constant(gt, self.sphere)
            self.g3 = AngularField.constant(g3, self.sphere)

    # -- dual metric coefficient profiles -----------------------------------
    def grr_profile(self, r):
        r = np.asarray(r, dtype=float)
        with np.errstate(divide="ignore"):
            rho = np.where(r > 0, 1.0 / r, np.inf)
        return 1.0 - 2.0 * self.mass * rho

    def g0X_profile(self, r):
        """Coefficient of d_r in g^{0X} (the whole vector is this * d_r)."""
        if self.kind == "normal_form":
            raise ValueError("normal_form carries no metric profiles")
        return -self.k_of_r(r)

    def slicing_dh(self, r):
        """h'(r) of the slicing; k/grr for mass-deformed, plain h' for flat."""
        if self.kind == "mass_deformed":
            return self.k_of_r(r) / self.grr_profile(r)
        return self.height.dh(r)

    def g00_profile(self, r, omega=None):
        """g^{t_* t_*}(r); omega is accepted for interface uniformity."""
        r = np.asarray(r, dtype=float)
        if self.kind == "normal_form":
            with np.errstate(divide="ignore"):
                return self._gtilde0 / r ** 2
        if self.kind == "minkowski_hyperboloidal":
            hp = self.height.dh(r)
            return -(1.0 - hp * hp)
        # mass_deformed: g00 = (k^2 - 1)/f with slicing rate h' = k/f
        k = self.k_of_r(r)
        f = self.grr_profile(r)
        return (k * k - 1.0) / f

    def sqrt_det(self, r, omega=None):
        """|dg_X| = sqrt_det * dr * domega; equals r^2 for these models."""
        return np.asarray(r, dtype=float) ** 2

    # -- slicing internals used by the evolution ----------------------------
    def k_of_r(self, r):
        """-g^{0r}; equals h'(r) for flat and f h'(r) for mass-deformed."""
        if self.kind == "mass_deformed":
            L = self.height.scale
            r = np.asarray(r, dtype=float)
            return r / np.sqrt(L * L + r * r)
        return self.height.dh(r)

    def k_of_rho(self, rho):
        if self.height.custom is not None:
            with np.errstate(divide="ignore"):
                return self.height.dh(1.0 / np.asarray(rho, dtype=float))
        L = self.height.scale
        return 1.0 / np.sqrt(1.0 + (L * np.asarray(rho, dtype=float)) ** 2)

    def kprime_of_r(self, r):
        if self.kind == "mass_deformed" or self.height.custom is None:
            L = self.height.scale
            r = np.asarray(r, dtype=float)
            return L * L / (L * L + r * r) ** 1.5
        return self.height.d2h(r)

    def domain_s_min(self):
        if self.kind == "mass_deformed" and self.mass > 0:
            r_in = 3.0 * self.mass
            return r_in / (r_in + 2.0)
        return 0.0

    def grid(self, n):
        return RadialGrid(n, s_min=self.domain_s_min())

    def decomposition(self, sphere=None, rho_grid=None):
        hs = self.height.scale if self.height.custom is None else 1.0
        return OperatorDecomposition(
            self.mass, self.gtilde, self.g3, height_scale=hs,
            normal_form=(self.kind == "normal_form"),
            sphere=sphere or self.sphere, rho_grid=rho_grid)

    # -- construction-time validation ---------------------------------------
    def _sample_radii(self):
        s = np.linspace(0.02, 0.999, 400)
        r = 2.0 * s / (1.0 - s)
        if self.kind == "mass_deformed" and self.mass > 0:
            r = r[r >= 3.0 * self.mass]
        return r

    def _fit_expansion(self):
        # Richardson extrapolation of rho^-2 g00 on a refinement sequence
        rho = 2.0 ** -np.arange(4, 14, dtype=float)
        vals = self.g00_profile(1.0 / rho) / rho ** 2
        # vals ~ gtilde + g3 rho + O(rho^2): eliminate the linear term pairwise
        gt = 2.0 * vals[1:] - vals[:-1]
        gtilde = float(gt[-1])
        g3 = float((vals[-2] - gtilde) / rho[-2])
        return gtilde, g3

    def validate(self):
        if self.kind == "normal_form":
            return
        r = self._sample_radii()
        g00 = self.g00_profile(r)
        if np.any(g00 >= 0.0):
            bad = r[np.argmax(g00 >= 0.0)]
            raise SlicingError(
                f"dt_* fails to be timelike: g00 >= 0 at r ~ {bad:.3g}")
        # membership conditions of the metric definition near scri
        rho = 2.0 ** -np.arange(4, 16, dtype=float)
        rr = 1.0 / rho
        m1 = self.g00_profile(rr) / rho ** 2
        m2 = (self.g0X_profile(rr) + 1.0) / rho ** 2
        m3 = (self.grr_profile(rr) - (1.0 - 2.0 * self.mass * rho)) / rho ** 2
        for name, vals in (("rho^-2 g00", m1), ("rho^-2 (g0X + d_r)", m2),
                           ("rho^-2 (gXX - (1-2m rho))", m3)):
            if not np.all(np.isfinite(vals)) or np.max(np.abs(vals)) > 1e3:
                raise SlicingError(f"asymptotic-flatness condition fails for {name}")
        gt_fit = float(2.0 * m1[-1] - m1[-2])
        if abs(gt_fit - self.gtilde.average()) > 1e-6 * max(1.0, abs(gt_fit)):
            raise SlicingError("rho^2 coefficient of g00 disagrees with gtilde")


def build_metric(kind, mass, height_params=None):
    """Construct and validate a background model.

    ``height_params`` accepts ``{"scale": L}`` for the default height family,
    ``{"h": f, "dh": f, "d2h": f}`` for a custom flat slicing, and
    ``{"gtilde0": value}`` for normal-form models.  Raises SlicingError when
    the requested slicing is not everywhere timelike.
    """
    hp = dict(height_params or {})
    mass = float(mass)
    if mass < 0:
        raise ValueError("mass must be nonnegative")
    gtilde0 = hp.pop("gtilde0", -1.0)
    if "h" in hp:
        if kind != "minkowski_hyperboloidal":
            raise ValueError("custom heights are supported for flat models only")
        height = HeightFunction(custom=(hp["h"], hp["dh"], hp["d2h"]))
    else:
        height = HeightFunction(scale=float(hp.pop("scale", 1.0)))
    if kind == "minkowski_hyperboloidal" and mass != 0.0:
        raise ValueError("minkowski_hyperboloidal requires mass 0; "
                         "use mass_deformed")
    model = MetricModel(kind, mass, height, gtilde0=gtilde0)
    model.validate()
    return model


def volume_integral(metric, values, grid=None, sphere=None, tail_rho=0.05):
    """Integrate a profile over X against |dg_X| = r^2 dr domega.

    ``values`` is sampled on ``grid`` (shape (n,) for spherically symmetric
    profiles, or (n, n_theta, n_phi)).  The part of the integral inside
    rho < tail_rho is replaced by an analytic power-law continuation fitted
    near scri; the fit also gates integrability (tail exponent >= 3.5).
    """
    if grid is None:
        grid = metric.grid(801)
    values = np.asarray(values, dtype=float)
    spherical = values.ndim == 1
    if not spherical:
        sphere = sphere or metric.sphere
        radial = np.tensordot(values, sphere.weights, axes=([1, 2], [0, 1]))
    else:
        radial = values * 4.0 * math.pi
    # fit |radial| ~ c rho^p on the last grid decade before scri
    rho = grid.rho
    sel = (rho < 4.0 * tail_rho) & (rho > tail_rho / 4.0) & (np.abs(radial) > 0)
    p_fit, c_fit = np.inf, 0.0
    if np.count_nonzero(sel) >= 4:
        lr = np.log(rho[sel])
        lv = np.log(np.abs(radial[sel]))
        p_fit, logc = np.polyfit(lr, lv, 1)
        scale = np.max(np.abs(radial[rho < 1.0])) if np.any(rho < 1.0) else 0.0
        if (scale > 0 and np.max(np.abs(radial[sel])) < 1e-13 * scale) or p_fit > 20:
            p_fit, c_fit = np.inf, 0.0  # numerically negligible tail
        else:
            c_fit = math.exp(logc) * np.sign(radial[sel][-1])
    if p_fit < 3.5:
        raise NonIntegrableError(
            f"tail exponent {p_fit:.2f} < 3.5: volume integral diverges")
    # integral of radial(r) r^2 dr, core on the grid + fitted analytic tail
    mask = rho > tail_rho
    drds = 2.0 / (1.0 - grid.s[mask]) ** 2
    integrand = radial[mask] * grid.r[mask] ** 2 * drds
    core = float(simpson(integrand, x=grid.s[mask]))
    tail = 0.0
    if np.isfinite(p_fit) and c_fit != 0.0:
        tail = c_fit * tail_rho ** (p_fit - 3.0) / (p_fit - 3.0)
    return core + tail
