"""Radiation fields at null infinity and their expansion recursions.

The first radiation field is read off directly: with Phi = r*phi evolved on
the compactified grid, rad1(t_*, omega) = Phi(t_*, s=1, omega), with no
extrapolation error.  The second and third fields are then reconstructed
from rad1 by explicit recursions:

    rad2 = c2 + (1/2) gtilde (d1 - d_t rad1)
           + (1/2) int_0^t (Lap_omega rad1 - a0 rad1^3) ds

    rad3 = -(1/2) Qt1 rad1 - (1/4) g3 d_t rad1 - (1/4) gtilde d_t rad2
           + (1/4) int_0^t ((Lap_omega - 2) rad2 + 2 m rad1 - b0 rad1^4) ds

where Qt1 is the conjugated subleading transport operator restricted to
scri and the b0 term is present only for quartic nonlinearities (p = 4; it
drops for p >= 5).  The rad3 recursion assumes rad2 was built with
c2 = d1 = a0 = 0 (compactly supported data); mixing it with expanded-data
rad2 is flagged in the provenance rather than silently accepted.

Time derivatives are 4th-order finite differences with weights generated
for the actual (possibly geometric) sample grid; integrals are composite
trapezoid with an endpoint-derivative correction, which is exact for
cubics on nonuniform grids.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .angular import AngularField, SphereGrid


class RecursionInputError(ValueError):
    pass


# ---------------------------------------------------------------------------
# calculus on (possibly nonuniform) time grids
# ---------------------------------------------------------------------------

def fd_weights(x, x0, m):
    """Finite-difference weights for the m-th derivative at x0 on nodes x.

    Fornberg's recursion; exact for polynomials of degree len(x)-1.
    """
    n = len(x)
    c = np.zeros((n, m + 1))
    c[0, 0] = 1.0
    c1 = 1.0
    c4 = x[0] - x0
    for i in range(1, n):
        mn = min(i, m)
        c2 = 1.0
        c5 = c4
        c4 = x[i] - x0
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c[:, m]


def time_derivative(t, y, width=5):
    """d/dt of samples y(t) by sliding local polynomial fit (4th order)."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    n = t.size
    if n < width:
        raise ValueError("series too short to differentiate")
    half = width // 2
    out = np.empty_like(y)
    for i in range(n):
        j0 = min(max(i - half, 0), n - width)
        w = fd_weights(t[j0:j0 + width], t[i], 1)
        out[i] = np.tensordot(w, y[j0:j0 + width], axes=(0, 0))
    return out


def cumulative_integral(t, y):
    """Cumulative integral from t[0], corrected trapezoid (exact for cubics)."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    dy = time_derivative(t, y) if t.size >= 5 else np.gradient(y, t, axis=0)
    h = np.diff(t)
    shape = (-1,) + (1,) * (y.ndim - 1)
    h = h.reshape(shape)
    seg = 0.5 * h * (y[:-1] + y[1:]) - h * h / 12.0 * (dy[1:] - dy[:-1])
    out = np.zeros_like(y)
    out[1:] = np.cumsum(seg, axis=0)
    return out


def integral(t, y):
    return cumulative_integral(t, y)[-1]


def derivative_error_estimate(t, y):
    """Crude bound on the 4th-order differentiation error: |D4 - D2|."""
    d4 = time_derivative(t, y, width=5)
    d2 = time_derivative(t, y, width=3)
    return float(np.max(np.abs(d4 - d2)))


# ---------------------------------------------------------------------------
# radiation series container
# ---------------------------------------------------------------------------

@dataclass
class RadiationSeries:
    """Time series of radiation fields on the sphere (or spherical scalars).

    ``rad1`` etc. have shape (nt,) for spherically symmetric runs or
    (nt, n_theta, n_phi) on an angular grid.
    """

    times: np.ndarray
    rad1: np.ndarray
    rad2: np.ndarray = None
    rad3: np.ndarray = None
    sphere: SphereGrid = None
    rad1_err: np.ndarray = None
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")
        for name in ("rad1", "rad2", "rad3"):
            v = getattr(self, name)
            if v is not None and np.asarray(v).shape[0] != self.times.size:
                raise ValueError(f"{name} length mismatch")

    @property
    def spherical(self):
        return self.rad1.ndim == 1

    def field_at(self, which, t):
        """Nearest-sample AngularField (constant field for spherical runs)."""
        i = int(np.argmin(np.abs(self.times - t)))
        vals = getattr(self, which)[i]
        sphere = self.sphere or SphereGrid(2)
        if np.ndim(vals) == 0:
            return AngularField.constant(float(vals), sphere)
        return AngularField(sphere, vals)

    def restricted(self, t_max):
        sel = self.times <= t_max
        return RadiationSeries(
            self.times[sel], self.rad1[sel],
            None if self.rad2 is None else self.rad2[sel],
            None if self.rad3 is None else self.rad3[sel],
            self.sphere, None if self.rad1_err is None else self.rad1_err[sel],
            dict(self.provenance))


def extract_rad1(traj):
    """First radiation field from the scri trace of a trajectory.

    rad1 = Phi at s = 1; a Richardson-extrapolated variant built from the
    neighboring grid values is recorded as an error estimate.
    """
    if traj.scri is None or len(traj.scri) == 0:
        raise ValueError("trajectory has no scri trace")
    near = traj.scri_near  # Phi at s = 1, 1-ds, 1-2ds, 1-3ds
    # quadratic extrapolation from the three interior values to s = 1
    extrap = 3.0 * near[..., 1] - 3.0 * near[..., 2] + near[..., 3]
    err = np.abs(extrap - near[..., 0])
    if traj.modes is None:
        rad1 = traj.scri.copy()
        sphere = None
        rad1_err = err
    else:
        sphere = SphereGrid(max(ell for ell, _ in traj.modes))
        nt = traj.times.size
        rad1 = np.empty((nt,) + sphere.shape)
        coeffs = np.zeros((len(sphere.modes),))
        for i in range(nt):
            coeffs[:] = 0.0
            for j, mode in enumerate(traj.modes):
                coeffs[sphere.modes.index(mode)] = traj.scri[i, j]
            rad1[i] = sphere.synthesize(coeffs)
        rad1_err = np.max(err, axis=-1)
    return RadiationSeries(
        traj.times, rad1, sphere=sphere, rad1_err=rad1_err,
        provenance={"rad1": "scri-trace", "run": dict(traj.spec_info)})


def _as_values(x, sphere, like):
    """Coerce scalars/AngularFields to the series' value layout."""
    if isinstance(x, AngularField):
        if like.ndim == 1:
            return x.average()
        return x.values
    return float(x)


def _angular_laplacian_series(vals, sphere):
    if vals.ndim == 1:
        return np.zeros_like(vals)
    ll = sphere.ell_of_mode() * (sphere.ell_of_mode() + 1)
    out = np.empty_like(vals)
    for i in range(vals.shape[0]):
        out[i] = sphere.synthesize(sphere.analyze(vals[i]) * ll)
    return out


def _eval_time_map(fn, times, like, sphere):
    """Evaluate a0/b0-style maps (t, omega) -> value on the series layout."""
    if fn is None:
        return np.zeros_like(like)
    if isinstance(fn, AngularField):
        return np.broadcast_to(fn.values, like.shape).copy() if like.ndim > 1 \
            else np.full_like(like, fn.average())
    if not callable(fn):
        return np.full_like(like, float(fn))
    out = np.empty_like(like)
    spherical = like.ndim == 1
    for i, t in enumerate(times):
        v = fn(t)
        if isinstance(v, AngularField):
            out[i] = v.average() if spherical else v.values
        else:
            out[i] = v
    return out


def rad2_from_recursion(rad1, c2=0.0, d1=0.0, gtilde=-1.0, a0=None,
                        coarse_warn=0.05):
    """Second radiation field from the explicit recursion.

    ``a0`` may be None (dropped), a constant, or a callable t -> value
    (AngularField allowed for angular runs).  Emits a warning when the
    sampling looks too coarse for the time derivative.
    """
    t = rad1.times
    R1 = rad1.rad1
    sphere = rad1.sphere
    gt = _as_values(gtilde, sphere, R1[0] if R1.ndim > 1 else R1)
    c2v = _as_values(c2, sphere, R1[0] if R1.ndim > 1 else R1)
    d1v = _as_values(d1, sphere, R1[0] if R1.ndim > 1 else R1)
    dR1 = time_derivative(t, R1)
    est = derivative_error_estimate(t, R1)
    scale = float(np.max(np.abs(dR1))) or 1.0
    if est > coarse_warn * scale:
        warnings.warn(
            f"rad1 sampling may be too coarse for differentiation "
            f"(error estimate {est:.2g} vs scale {scale:.2g})",
            RuntimeWarning, stacklevel=2)
    a0v = _eval_time_map(a0, t, R1, sphere)
    integrand = _angular_laplacian_series(R1, sphere) - a0v * R1 ** 3
    acc = cumulative_integral(t, integrand)
    R2 = c2v + 0.5 * gt * (d1v - dR1) + 0.5 * acc
    prov = dict(rad1.provenance)
    expanded = (np.max(np.abs(np.atleast_1d(c2v))) != 0.0
                or np.max(np.abs(np.atleast_1d(d1v))) != 0.0
                or a0 is not None)
    prov["rad2"] = "recursion-initial-value" if expanded else "recursion-compact"
    return RadiationSeries(t, R1, rad2=R2, sphere=sphere,
                           rad1_err=rad1.rad1_err, provenance=prov)


def rad3_from_recursion(rad1, rad2, decomp, b0=None, p=4):
    """Third radiation field; valid for p >= 4 only.

    ``rad1`` and ``rad2`` may be the same RadiationSeries (with .rad2 set).
    The quartic source b0*rad1^4 enters only at p = 4.
    """
    if p < 4:
        raise RecursionInputError(
            "third radiation field recursion requires p >= 4")
    t = rad1.times
    R1 = rad1.rad1
    R2 = rad2.rad2 if rad2.rad2 is not None else rad2.rad1
    if R2 is None or R2.shape != R1.shape:
        raise RecursionInputError("rad2 series shape mismatch")
    prov = dict(rad1.provenance)
    prov.update({k: v for k, v in rad2.provenance.items() if k == "rad2"})
    if rad2.provenance.get("rad2") not in (None, "recursion-compact"):
        warnings.warn("rad3 recursion assumes compact-data rad2 "
                      "(c2 = d1 = a0 = 0); result flagged as mixed",
                      RuntimeWarning, stacklevel=2)
        prov["mixed_data"] = True
    sphere = rad1.sphere
    gt = decomp.gtilde.average() if R1.ndim == 1 else decomp.gtilde.values
    g3 = decomp.g3.average() if R1.ndim == 1 else decomp.g3.values
    dR1 = time_derivative(t, R1)
    dR2 = time_derivative(t, R2)
    qt1R1 = decomp.qtilde1_scri_coeff * R1
    b0v = _eval_time_map(b0, t, R1, sphere) if p == 4 else np.zeros_like(R1)
    integrand = (_angular_laplacian_series(R2, sphere) - 2.0 * R2
                 + 2.0 * decomp.mass * R1 - b0v * R1 ** 4)
    acc = cumulative_integral(t, integrand)
    R3 = -0.5 * qt1R1 - 0.25 * g3 * dR1 - 0.25 * gt * dR2 + 0.25 * acc
    prov["rad3"] = f"recursion-p{p}"
    return RadiationSeries(t, R1, rad2=R2, rad3=R3, sphere=sphere,
                           rad1_err=rad1.rad1_err, provenance=prov)
