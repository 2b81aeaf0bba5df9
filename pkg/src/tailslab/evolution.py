"""Semi-discrete evolution of Box_g phi = a(t_*, x) phi^p on hyperboloidal slices.

The evolved unknown is Phi = r*phi together with Pi = d_t Phi, on the
compactified radial grid of the background metric.  Multiplying the wave
equation by r and dividing by the (degenerate) factor -g00 gives

    Pi_t = cPs*Pi_s + cP*Pi + cFss*Phi_ss + cFs*Phi_s
           + [cF0 + l(l+1)*cFl]*Phi + a * cN * Phi^p ,

where every coefficient profile has a finite limit at scri (the products
are assembled in closed form; near scri the update degenerates to the
outgoing transport relation, so no boundary condition is imposed there).
At the regular center Phi = Pi = 0 is pinned.

Nonlinear runs are restricted to spherical symmetry; linear runs support a
band of angular modes evolved diagonally.  Time stepping is classical RK4
with fixed dt = CFL * ds (CFL default 0.5, matched to the outgoing
characteristic speed 4 of the r = 2s/(1-s) compactification) plus
Kreiss-Oliger dissipation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad

from . import _kernels
from .angular import AngularField, SphereGrid
from .geometry import MetricModel, RadialGrid


class BlowupError(RuntimeError):
    """Evolution overflowed; carries the first bad time and the partial run."""

    def __init__(self, t_blow, trajectory=None):
        super().__init__(f"field overflow (blowup?) at t_* ~ {t_blow:.6g}")
        self.t_blow = t_blow
        self.trajectory = trajectory


# ---------------------------------------------------------------------------
# nonlinearity and initial data
# ---------------------------------------------------------------------------

class NonlinearCoefficient:
    """Coefficient a(t_*, r, omega) = time_factor(t_*) * spatial(r).

    ``spatial`` must extend smoothly to rho = 0; its scri value is the
    angular part a0 (constant here: nonlinear runs are spherical).  The
    symbol estimate |d_t^k a| <~ <t>^-k is spot-checked by symbol_check().
    """

    def __init__(self, spatial=1.0, time_factor=None, name=None):
        if callable(spatial):
            self._spatial = spatial
        else:
            val = float(spatial)
            self._spatial = lambda r: np.full_like(np.asarray(r, dtype=float), val)
        self.time_factor = time_factor
        self.name = name or ("constant" if not callable(spatial) else "custom")

    def spatial(self, r):
        return np.asarray(self._spatial(np.asarray(r, dtype=float)), dtype=float)

    def spatial_scri(self):
        return float(self._spatial(np.asarray(1e14)))

    def tfac(self, t):
        return 1.0 if self.time_factor is None else float(self.time_factor(t))

    def a0(self, t):
        """Leading angular factor at scri (spherical: a scalar)."""
        return self.tfac(t) * self.spatial_scri()

    def symbol_check(self, times=(1.0, 3.0, 10.0, 30.0, 100.0), c=50.0):
        """True when |d_t^k a| <= c <t>^-k holds at sample points, k <= 2."""
        if self.time_factor is None:
            return True
        for t in times:
            h = 1e-3 * (1.0 + t)
            f = [self.tfac(t + j * h) for j in (-2, -1, 0, 1, 2)]
            d1 = (f[3] - f[1]) / (2 * h)
            d2 = (f[3] - 2 * f[2] + f[1]) / h ** 2
            if abs(f[2]) > c or abs(d1) > c / (1 + t) or abs(d2) > c / (1 + t) ** 2:
                return False
        return True


class InitialData:
    """Cauchy data (u0, u1) on the t_* = 0 slice, spherically symmetric.

    The scri expansion factors are u0 ~ c1*rho + c2*rho^2, u1 ~ d1*rho;
    compactly supported data has c1 = c2 = d1 = 0.  Subclasses provide
    Phi = r*u0 and Pi = r*u1 directly on the grid so that the s = 1 node
    (r = infinite) is evaluated from the tail coefficients, not from r*u0.
    """

    c1 = 0.0
    c2 = 0.0
    d1 = 0.0

    def u0(self, r):
        raise NotImplementedError

    def u1(self, r):
        return np.zeros_like(np.asarray(r, dtype=float))

    def phi0_times_r(self, grid):
        out = np.zeros(grid.n)
        out[1:-1] = grid.r[1:-1] * self.u0(grid.r[1:-1])
        if grid.s_min > 0:
            out[0] = grid.r[0] * self.u0(grid.r[0])
        out[-1] = self.c1
        return out

    def pi0_times_r(self, grid):
        out = np.zeros(grid.n)
        out[1:-1] = grid.r[1:-1] * self.u1(grid.r[1:-1])
        if grid.s_min > 0:
            out[0] = grid.r[0] * self.u1(grid.r[0])
        out[-1] = self.d1
        return out

    def describe(self):
        return type(self).__name__


@dataclass
class GaussianBump(InitialData):
    """u0 = amplitude * exp(-((r - center)/width)^2), u1 = 0 (or a second bump)."""

    amplitude: float = 0.1
    width: float = 0.5
    center: float = 0.0
    amplitude1: float = 0.0

    def u0(self, r):
        r = np.asarray(r, dtype=float)
        return self.amplitude * np.exp(-((r - self.center) / self.width) ** 2)

    def du0(self, r):
        r = np.asarray(r, dtype=float)
        return self.u0(r) * (-2.0 * (r - self.center) / self.width ** 2)

    def u1(self, r):
        r = np.asarray(r, dtype=float)
        return self.amplitude1 * np.exp(-((r - self.center) / self.width) ** 2)

    def describe(self):
        return (f"gaussian(amp={self.amplitude},w={self.width},"
                f"c={self.center},amp1={self.amplitude1})")


@dataclass
class ExpandedTailData(InitialData):
    """Data with prescribed scri expansion u0 ~ c1 rho + c2 rho^2, u1 ~ d1 rho.

    The tail is switched on smoothly outside r0 to keep the center regular;
    an optional Gaussian bump supplies a compact core.
    """

    c1: float = 0.0
    c2: float = 0.0
    d1: float = 0.0
    r0: float = 4.0
    bump: GaussianBump = None

    def _switch(self, r):
        x = np.clip((np.asarray(r, dtype=float) - self.r0) / self.r0, 0.0, 1.0)
        return x ** 4 * (35.0 - 84.0 * x + 70.0 * x ** 2 - 20.0 * x ** 3)

    def u0(self, r):
        r = np.asarray(r, dtype=float)
        with np.errstate(divide="ignore"):
            tail = self.c1 / r + self.c2 / r ** 2
        out = self._switch(r) * np.where(r > 0, tail, 0.0)
        if self.bump is not None:
            out = out + self.bump.u0(r)
        return out

    def u1(self, r):
        r = np.asarray(r, dtype=float)
        with np.errstate(divide="ignore"):
            tail = self.d1 / r
        out = self._switch(r) * np.where(r > 0, tail, 0.0)
        if self.bump is not None:
            out = out + self.bump.u1(r)
        return out

    def describe(self):
        return f"expanded(c1={self.c1},c2={self.c2},d1={self.d1},r0={self.r0})"


class ArrayData(InitialData):
    """Raw (Phi, Pi) arrays on a known grid (used for oracle-sampled data)."""

    def __init__(self, grid, phi, pi, describe="array"):
        self.grid = grid
        self._phi = np.asarray(phi, dtype=float)
        self._pi = np.asarray(pi, dtype=float)
        self._describe = describe

    def phi0_times_r(self, grid):
        if grid.n != self.grid.n or grid.s_min != self.grid.s_min:
            raise ValueError("ArrayData grid mismatch")
        return self._phi.copy()

    def pi0_times_r(self, grid):
        return self._pi.copy()

    def describe(self):
        return self._describe


# ---------------------------------------------------------------------------
# problem specification and output planning
# ---------------------------------------------------------------------------

@dataclass
class ProblemSpec:
    """What to evolve: background, nonlinearity, data, angular content."""

    metric: MetricModel
    power: int = 3
    nonlin: NonlinearCoefficient = field(default_factory=lambda: NonlinearCoefficient(0.0))
    data: InitialData = field(default_factory=GaussianBump)
    symmetry: str = "spherical"   # or "banded"
    lmax: int = 0
    mode_data: dict = None        # banded: {(ell, m): InitialData}

    def __post_init__(self):
        if self.power < 3:
            raise ValueError("power must be >= 3 (linear runs use a == 0)")
        self.linear = (not callable(self.nonlin._spatial)
                       and self.nonlin.spatial_scri() == 0.0
                       and self.nonlin.time_factor is None)
        if self.symmetry == "banded" and not self.linear:
            raise ValueError("nonlinear mode coupling unsupported: banded runs "
                             "must be linear (run nonlinear powers in "
                             "spherical symmetry)")
        if self.symmetry not in ("spherical", "banded"):
            raise ValueError(f"unknown symmetry {self.symmetry!r}")

    def describe(self):
        return {
            "metric": self.metric.kind,
            "mass": self.metric.mass,
            "height": self.metric.height.describe(),
            "power": self.power,
            "nonlin": self.nonlin.name,
            "data": self.data.describe() if self.data else "modes",
            "symmetry": self.symmetry,
            "lmax": self.lmax,
        }


@dataclass
class OutputPlan:
    """Sampling cadences: dense early trace, coarse late trace, snapshots."""

    n: int = 400
    cfl: float = 0.5
    dissipation: float = 0.02
    probe_radii: tuple = (1.0, 5.0, 20.0)
    trace_dt: float = 0.02
    t_dense: float = 120.0
    trace_dt_coarse: float = 1.0
    snapshot_times: tuple = ()
    snapshot_dt: float = 0.25
    snapshot_until: float = 0.0

    def sample_steps(self, dt, nsteps):
        t_end = nsteps * dt
        stride1 = max(1, int(round(self.trace_dt / dt)))
        stride2 = max(stride1, int(round(self.trace_dt_coarse / dt)))
        k_dense = min(nsteps, int(math.ceil(self.t_dense / dt)))
        steps = list(range(0, k_dense, stride1))
        steps += list(range(k_dense, nsteps + 1, stride2))
        if steps[-1] != nsteps:
            steps.append(nsteps)
        return np.unique(np.asarray(steps, dtype=np.int64))

    def snapshot_steps(self, dt, nsteps):
        times = list(self.snapshot_times)
        if self.snapshot_until > 0:
            k = self.snapshot_dt
            times += list(np.arange(0.0, min(self.snapshot_until, nsteps * dt) + k / 2, k))
        steps = sorted({min(nsteps, int(round(t / dt))) for t in times})
        return np.asarray(steps, dtype=np.int64)


@dataclass
class EvolutionState:
    t_star: float
    Phi: np.ndarray
    Pi: np.ndarray


@dataclass
class ProbeSeries:
    r: float
    phi: np.ndarray
    dphi_dt: np.ndarray


@dataclass
class Trajectory:
    """Full run record: scri trace, interior probes, snapshots, monitors."""

    spec_info: dict
    grid: RadialGrid
    times: np.ndarray           # sample times
    scri: np.ndarray            # Phi at s=1: (ns,) or (ns, nmodes)
    scri_near: np.ndarray       # Phi at the last 4 nodes
    probes: list
    snapshots: list             # list[EvolutionState]
    energy: np.ndarray = None
    apriori: np.ndarray = None
    modes: list = None          # banded: [(ell, m)]
    blowup_time: float = None
    meta: dict = field(default_factory=dict)

    def probe(self, r):
        for p in self.probes:
            if abs(p.r - r) < 1e-12:
                return p
        raise KeyError(f"no probe at r={r}")

    @property
    def out_of_hypothesis(self):
        return self.blowup_time is not None


# ---------------------------------------------------------------------------
# coefficient assembly
# ---------------------------------------------------------------------------

def _coef_profiles(metric, grid, power):
    """Closed-form RHS coefficient profiles; finite on the whole grid."""
    n = grid.n
    s = grid.s
    m = metric.mass
    if metric.kind == "normal_form":
        raise ValueError("evolution refuses to run on normal_form models")
    custom = metric.height.custom is not None
    L = metric.height.scale if not custom else None
    cPs = np.empty(n); cP = np.empty(n); cFss = np.empty(n); cFs = np.empty(n)
    cF0 = np.empty(n); cFl = np.empty(n); cN = np.empty(n)
    inner = s <= 0.6
    outer = ~inner
    r = grid.r
    rho = grid.rho

    if custom:
        ri = r[:-1]
        dh = metric.height.dh(ri)
        d2h = metric.height.d2h(ri)
        A = 1.0 - dh * dh
        if np.any(A <= 0):
            raise ValueError("custom height is not everywhere timelike")
        dsdr = 2.0 / (ri + 2.0) ** 2
        d2sdr2 = -4.0 / (ri + 2.0) ** 3
        cPs[:-1] = -2.0 * dh * dsdr / A
        cP[:-1] = -d2h / A
        cFss[:-1] = dsdr ** 2 / A
        cFs[:-1] = d2sdr2 / A
        cF0[:-1] = 0.0
        with np.errstate(divide="ignore"):
            cFl[:-1] = np.where(ri > 0, -1.0 / (A * ri ** 2), 0.0)
            cN[:-1] = np.where(ri > 0, 1.0 / (A * ri ** (power - 1)), 0.0)
        gt = metric.gtilde.average()
        cPs[-1] = 4.0 / gt
        cP[-1] = 0.0
        cFss[-1] = 0.0
        cFs[-1] = 0.0
        cF0[-1] = 0.0
        cFl[-1] = 1.0 / gt
        cN[-1] = -1.0 / gt if power == 3 else 0.0
    else:
        # inner region in r-form
        ri = r[inner]
        f = 1.0 - 2.0 * m / ri if m > 0 else np.ones_like(ri)
        root = np.sqrt(L * L + ri * ri)
        invA = f * (ri * ri + L * L) / (L * L)
        k = ri / root
        dsdr = 2.0 / (ri + 2.0) ** 2
        d2sdr2 = -4.0 / (ri + 2.0) ** 3
        cPs[inner] = -2.0 * k * invA * dsdr
        cP[inner] = -f / root
        cFss[inner] = f * invA * dsdr ** 2
        fprime = np.zeros_like(ri) if m == 0 else 2.0 * m / ri ** 2
        cFs[inner] = invA * (f * d2sdr2 + fprime * dsdr)
        with np.errstate(divide="ignore", invalid="ignore"):
            cF0[inner] = np.where(ri > 0, -invA * fprime / ri, 0.0)
            cFl[inner] = np.where(ri > 0, -invA / ri ** 2, 0.0)
            cN[inner] = np.where(ri > 0, invA / ri ** (power - 1), 0.0)
        # outer region in rho-form
        ro = rho[outer]
        f = 1.0 - 2.0 * m * ro
        q = 1.0 + (L * ro) ** 2
        root = np.sqrt(q)
        k = 1.0 / root
        opr = 1.0 + 2.0 * ro
        cPs[outer] = -4.0 * k * q * f / (L * L * opr ** 2)
        cP[outer] = -f * ro / root
        cFss[outer] = 4.0 * q * f * f * ro ** 2 / (L * L * opr ** 4)
        cFs[outer] = (q * f / (L * L)) * (-4.0 * f * ro / opr ** 3
                                          + 4.0 * m * ro ** 2 / opr ** 2)
        cF0[outer] = -2.0 * m * q * f * ro / (L * L)
        cFl[outer] = -q * f / (L * L)
        cN[outer] = q * f * ro ** (power - 3) / (L * L)
    if grid.s_min == 0.0:
        for arr in (cF0, cFl, cN):
            arr[0] = 0.0
    # sponge layer at a restricted inner boundary
    csp = np.zeros(n)
    if grid.s_min > 0.0:
        width = 40.0 * grid.ds
        x = np.clip((grid.s_min + width - s) / width, 0.0, 1.0)
        csp = 2.0 * x ** 4 * (35.0 - 84.0 * x + 70.0 * x ** 2 - 20.0 * x ** 3)
    return cPs, cP, cFss, cFs, cF0, cFl, cN, csp


def rhs_coefficients(metric, grid, ell=0, power=3, nonlin=None, linear=False):
    """Stacked coefficient rows for the compiled kernel (single mode)."""
    cPs, cP, cFss, cFs, cF0, cFl, cN, csp = _coef_profiles(metric, grid, power)
    cF = cF0 + ell * (ell + 1) * cFl
    if linear or nonlin is None:
        cN_row = np.zeros(grid.n)
    else:
        a_spatial = np.empty(grid.n)
        a_spatial[:-1] = nonlin.spatial(grid.r[:-1])
        a_spatial[-1] = nonlin.spatial_scri()
        if grid.s_min == 0.0 and not np.isfinite(a_spatial[0]):
            a_spatial[0] = 0.0
        cN_row = cN * a_spatial
    return np.vstack([cPs, cP, cFss, cFs, cF, cN_row, csp])


def derive_system(spec, n=400, cfl=0.5, dissipation=0.02):
    """Build the semi-discrete right-hand side for (Phi, Pi).

    Returns an object whose ``__call__(state) -> (dPhi, dPi)`` evaluates the
    update; ``grid``, ``dt`` and the coefficient table are exposed for the
    integrator and for convergence tests.
    """
    grid = spec.metric.grid(n)
    if spec.symmetry == "banded" and spec.lmax > 0 and not spec.linear:
        raise ValueError("nonlinear banded evolution unsupported")
    coef = rhs_coefficients(spec.metric, grid, ell=0, power=spec.power,
                            nonlin=spec.nonlin, linear=spec.linear)
    return SemiDiscreteRHS(spec, grid, coef, cfl, dissipation)


class SemiDiscreteRHS:
    def __init__(self, spec, grid, coef, cfl, dissipation):
        self.spec = spec
        self.grid = grid
        self.coef = np.ascontiguousarray(coef)
        self.cfl = float(cfl)
        self.dissipation = float(dissipation)
        self.dt = self.cfl * grid.ds
        self.pin_center = grid.s_min == 0.0

    def __call__(self, state, dissipation=None):
        ko = self.dissipation if dissipation is None else dissipation
        af = self.spec.nonlin.tfac(state.t_star) if not self.spec.linear else 0.0
        p = self.spec.power if not self.spec.linear else 1
        dphi, dpi = _kernels.rhs_once(state.Phi, state.Pi, self.coef,
                                      self.grid.ds, p, ko, af, self.pin_center)
        return dphi, dpi


def step(state, rhs, dt):
    """One classical RK4 step; detects overflow and raises BlowupError."""
    if dt > rhs.cfl * rhs.grid.ds * (1.0 + 1e-12):
        raise ValueError(f"dt={dt} exceeds CFL*ds={rhs.cfl * rhs.grid.ds}")
    y = (state.Phi.copy(), state.Pi.copy())
    ks = []
    t = state.t_star
    for stage, c in enumerate((0.0,) + _kernels.RK_B):
        if stage == 0:
            yy = y
        else:
            b = _kernels.RK_B[stage - 1]
            yy = (y[0] + b * dt * ks[-1][0], y[1] + b * dt * ks[-1][1])
        st = EvolutionState(t + c * dt if stage > 0 else t, yy[0], yy[1])
        ks.append(rhs(st))
    phi = y[0] + dt / 6.0 * (ks[0][0] + 2 * ks[1][0] + 2 * ks[2][0] + ks[3][0])
    pi = y[1] + dt / 6.0 * (ks[0][1] + 2 * ks[1][1] + 2 * ks[2][1] + ks[3][1])
    if not (np.all(np.isfinite(phi)) and np.max(np.abs(phi)) < 1e12):
        raise BlowupError(t + dt)
    return EvolutionState(t + dt, phi, pi)


def _energy_weights(metric, grid):
    """Trapezoid weights for E = 1/2 int (A Pi^2 + Phi_r^2) dr on the s-grid."""
    n = grid.n
    s = grid.s
    rho = grid.rho.copy()
    rho[0] = rho[1] if grid.s_min == 0.0 else rho[0]
    if metric.height.custom is None:
        L = metric.height.scale
        f = 1.0 - 2.0 * metric.mass * rho
        A = (L * rho) ** 2 / ((1.0 + (L * rho) ** 2) * f)
        opr = 1.0 + 2.0 * rho
        A_drds = L * L * opr ** 2 / (2.0 * (1.0 + (L * rho) ** 2) * f)
    else:
        dh = metric.height.dh(grid.r)
        A = 1.0 - dh * dh
        with np.errstate(invalid="ignore"):
            A_drds = A * 2.0 / (1.0 - s) ** 2
        A_drds[-1] = -metric.gtilde.average() / 2.0
    w = np.full(n, grid.ds)
    w[0] = w[-1] = grid.ds / 2.0
    ew_a = A_drds * w
    ew_b = 0.5 * (1.0 - s) ** 2 * w
    return ew_a, ew_b


def evolve(spec, t_final, plan=None):
    """March the problem to t_final, recording the configured outputs.

    Raises BlowupError with the partial trajectory attached when the field
    overflows (focusing runs may genuinely blow up; such runs are labeled
    out-of-hypothesis rather than failures).
    """
    plan = plan or OutputPlan()
    if t_final <= 0:
        raise ValueError("t_final must be positive")
    if spec.metric.kind == "normal_form":
        raise ValueError("evolution refuses to run on normal_form models")
    grid = spec.metric.grid(plan.n)
    dt = plan.cfl * grid.ds
    nsteps = int(math.ceil(t_final / dt - 1e-12))
    sample_steps = plan.sample_steps(dt, nsteps)
    snap_steps = plan.snapshot_steps(dt, nsteps)
    probe_radii = [r for r in plan.probe_radii
                   if grid.r[0] <= r and r / (r + 2.0) < 1.0 - 4 * grid.ds]
    probe_i0 = np.empty(len(probe_radii), dtype=np.int64)
    probe_w = np.empty((len(probe_radii), 4))
    for q, r in enumerate(probe_radii):
        probe_i0[q], probe_w[q] = grid.interp_weights(r)
    rho_probe = 1.0 / np.asarray(probe_radii, dtype=float) \
        if probe_radii else np.empty(0)
    rho_mon = grid.rho.copy()
    rho_mon[0] = rho_mon[1] if grid.s_min == 0.0 else rho_mon[0]
    kappa = float(min(2, spec.power - 2)) if not spec.linear else 1.0
    ew_a, ew_b = _energy_weights(spec.metric, grid)

    ns = sample_steps.size
    nsnap = snap_steps.size
    if spec.symmetry == "banded":
        return _evolve_banded(spec, grid, dt, nsteps, plan, sample_steps,
                              snap_steps, probe_i0, probe_w, rho_probe,
                              probe_radii)

    coef = rhs_coefficients(spec.metric, grid, ell=0, power=spec.power,
                            nonlin=spec.nonlin, linear=spec.linear)
    p_eff = spec.power if not spec.linear else 1
    if spec.linear:
        afact = np.zeros(2 * nsteps + 2)
    elif spec.nonlin.time_factor is None:
        afact = np.ones(2 * nsteps + 2)
    else:
        th = 0.5 * dt * np.arange(2 * nsteps + 2)
        afact = np.array([spec.nonlin.tfac(t) for t in th])

    phi = spec.data.phi0_times_r(grid)
    pi = spec.data.pi0_times_r(grid)
    trace = np.zeros(ns)
    near = np.zeros((ns, 4))
    probe_out = np.zeros((ns, len(probe_radii)))
    dprobe_out = np.zeros((ns, len(probe_radii)))
    energy = np.zeros(ns)
    apriori = np.zeros(ns)
    sample_t = np.zeros(ns)
    snap_out = np.zeros((nsnap, 2, grid.n))

    done = _kernels.drive(
        phi, pi, np.ascontiguousarray(coef), nsteps, dt, grid.ds, p_eff,
        plan.dissipation, afact, grid.s_min == 0.0, sample_steps,
        probe_i0, probe_w, rho_probe, rho_mon, kappa, ew_a, ew_b,
        trace, near, probe_out, dprobe_out, energy, apriori, sample_t,
        snap_steps, snap_out, 256)

    keep = sample_steps <= done
    skeep = snap_steps <= done
    probes = [ProbeSeries(r, probe_out[keep, q], dprobe_out[keep, q])
              for q, r in enumerate(probe_radii)]
    snapshots = [EvolutionState(snap_steps[j] * dt, snap_out[j, 0].copy(),
                                snap_out[j, 1].copy())
                 for j in range(nsnap) if skeep[j]]
    traj = Trajectory(
        spec_info=spec.describe(), grid=grid, times=sample_t[keep],
        scri=trace[keep], scri_near=near[keep], probes=probes,
        snapshots=snapshots, energy=energy[keep], apriori=apriori[keep],
        blowup_time=None if done == nsteps else done * dt,
        meta={"n": grid.n, "cfl": plan.cfl, "dt": dt,
              "dissipation": plan.dissipation, "t_final": t_final,
              "kappa": kappa, "scri_coeffs": {
                  "gtilde": spec.metric.gtilde.average(),
                  "g3": spec.metric.g3.average(),
                  "a0_scri": (0.0 if spec.linear else spec.nonlin.spatial_scri()),
              }})
    if traj.blowup_time is not None:
        raise BlowupError(traj.blowup_time, traj)
    return traj


def _evolve_banded(spec, grid, dt, nsteps, plan, sample_steps, snap_steps,
                   probe_i0, probe_w, rho_probe, probe_radii):
    modes = sorted(spec.mode_data.keys()) if spec.mode_data else [(0, 0)]
    nm = len(modes)
    shared = None
    cF_modes = np.zeros((nm, grid.n))
    for j, (ell, _) in enumerate(modes):
        cPs, cP, cFss, cFs, cF0, cFl, cN, csp = _coef_profiles(
            spec.metric, grid, spec.power)
        if shared is None:
            shared = np.vstack([cPs, cP, cFss, cFs, csp])
        cF_modes[j] = cF0 + ell * (ell + 1) * cFl
    phi = np.zeros((nm, grid.n))
    pi = np.zeros((nm, grid.n))
    for j, mode in enumerate(modes):
        data = spec.mode_data[mode]
        phi[j] = data.phi0_times_r(grid)
        pi[j] = data.pi0_times_r(grid)
    ns = sample_steps.size
    nsnap = snap_steps.size
    trace = np.zeros((ns, nm))
    near = np.zeros((ns, nm, 4))
    probe_out = np.zeros((ns, nm, len(probe_radii)))
    dprobe_out = np.zeros((ns, nm, len(probe_radii)))
    sample_t = np.zeros(ns)
    snap_out = np.zeros((nsnap, 2, nm, grid.n))
    done = _kernels.drive_modes(
        phi, pi, np.ascontiguousarray(shared), cF_modes, nsteps, dt, grid.ds,
        plan.dissipation, grid.s_min == 0.0, sample_steps, probe_i0, probe_w,
        rho_probe, trace, near, probe_out, dprobe_out, sample_t, snap_steps,
        snap_out, 256)
    keep = sample_steps <= done
    probes = [ProbeSeries(r, probe_out[keep, :, q], dprobe_out[keep, :, q])
              for q, r in enumerate(probe_radii)]
    snapshots = [EvolutionState(snap_steps[j] * dt, snap_out[j, 0].copy(),
                                snap_out[j, 1].copy())
                 for j in range(nsnap) if snap_steps[j] <= done]
    traj = Trajectory(
        spec_info=spec.describe(), grid=grid, times=sample_t[keep],
        scri=trace[keep], scri_near=near[keep], probes=probes,
        snapshots=snapshots, modes=modes,
        blowup_time=None if done == nsteps else done * dt,
        meta={"n": grid.n, "cfl": plan.cfl, "dt": dt,
              "dissipation": plan.dissipation, "t_final": nsteps * dt})
    if traj.blowup_time is not None:
        raise BlowupError(traj.blowup_time, traj)
    return traj


# ---------------------------------------------------------------------------
# exact flat-space oracle
# ---------------------------------------------------------------------------

def flat_exact_oracle(data, t_star, r, height=None, derivative=False):
    """Exact spherically symmetric d'Alembert solution on flat space.

    Solves the linear wave equation with Cauchy data (u0, u1) posed on the
    slice t = 0 and evaluates at t = t_* + h(r):

        r phi(t, r) = [G0(t+r) - G0(t-r)]/2 + 1/2 int_{t-r}^{t+r} G1(s) ds,

    with G0(x) = x u0(|x|), G1(x) = x u1(|x|) odd extensions.  With the
    trivial height h = 0 this is the textbook solution; with a hyperboloidal
    height it gives the field on the t_* slices, exact wherever evaluated.
    ``derivative=True`` returns d(phi)/dt_* instead.
    """
    h = 0.0 if height is None else height.h(r)
    t = np.asarray(t_star, dtype=float) + h
    r = np.asarray(r, dtype=float)

    def G0(x):
        return x * data.u0(np.abs(x))

    def dG0(x):
        return data.u0(np.abs(x)) + x * np.sign(x) * data.du0(np.abs(x))

    def G1(x):
        return x * data.u1(np.abs(x))

    scalar = t.ndim == 0 and r.ndim == 0
    t, r = np.broadcast_arrays(np.atleast_1d(t), np.atleast_1d(r))
    out = np.empty(t.shape)
    for idx in np.ndindex(t.shape):
        tt, rr = float(t[idx]), float(r[idx])
        if derivative:
            if rr < 1e-8:
                # d/dt of the r -> 0 limit G0'(t) + G1(t), by central difference
                eps = 1e-5
                val = (dG0(tt + eps) - dG0(tt - eps)) / (2 * eps) + (
                    G1(tt + eps) - G1(tt - eps)) / (2 * eps)
            else:
                val = (dG0(tt + rr) - dG0(tt - rr)) / (2 * rr) + \
                    (G1(tt + rr) - G1(tt - rr)) / (2 * rr)
        else:
            if rr < 1e-8:
                val = dG0(tt) + G1(tt)
            else:
                quad_part = 0.0
                if np.any(data.u1(np.linspace(0, abs(tt) + rr, 7)) != 0.0):
                    quad_part = quad(G1, tt - rr, tt + rr, limit=200)[0]
                val = ((G0(tt + rr) - G0(tt - rr)) / 2.0 + quad_part / 2.0) / rr
        out[idx] = val
    return float(out.ravel()[0]) if scalar else out.reshape(np.shape(t))


def oracle_slice_data(data, grid, height):
    """Sample the oracle on the t_* = 0 slice -> ArrayData for evolve()."""
    r = grid.r[1:-1]
    phi = np.zeros(grid.n)
    pi = np.zeros(grid.n)
    phi[1:-1] = r * flat_exact_oracle(data, 0.0, r, height)
    pi[1:-1] = r * flat_exact_oracle(data, 0.0, r, height, derivative=True)
    return ArrayData(grid, phi, pi, describe=f"oracle-slice({data.describe()})")
