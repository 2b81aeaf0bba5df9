"""Functions on the unit sphere: quadrature grid and harmonic analysis.

Fields on S^2 are carried on a tensor-product grid, Gauss-Legendre in
cos(theta) times uniform in phi.  That grid integrates any polynomial of
degree <= 2*n_theta - 1 in cos(theta) exactly, so band-limited fields
(ell <= lmax) round-trip through their harmonic coefficients at machine
precision.  Harmonic analysis is done by direct projection against real
orthonormal spherical harmonics.

The Laplacian convention is the *positive* spherical Laplacian, i.e.
``laplacian`` multiplies the (ell, m) coefficient by +ell*(ell+1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import lpmv


def _real_harmonic(ell, m, cos_theta, phi):
    """Real orthonormal Y_{ell,m}: m>0 ~ cos(m phi), m<0 ~ sin(|m| phi)."""
    am = abs(m)
    # normalization for orthonormal real harmonics on S^2
    norm = math.sqrt((2 * ell + 1) / (4 * math.pi)
                     * math.factorial(ell - am) / math.factorial(ell + am))
    leg = lpmv(am, ell, cos_theta)
    if m == 0:
        return norm * leg * np.ones_like(phi)
    norm *= math.sqrt(2.0)
    if m > 0:
        return norm * leg * np.cos(am * phi)
    return norm * leg * np.sin(am * phi)


class SphereGrid:
    """Gauss-Legendre x uniform-longitude quadrature grid on S^2.

    Nodes are (theta_i, phi_j) with cos(theta_i) the Gauss-Legendre nodes.
    Weight of node (i, j) is w_i * (2 pi / n_phi); the weights sum to 4 pi.
    """

    def __init__(self, lmax=8, n_theta=None, n_phi=None):
        if lmax < 0:
            raise ValueError("lmax must be >= 0")
        self.lmax = int(lmax)
        self.n_theta = int(n_theta) if n_theta else self.lmax + 1
        self.n_phi = int(n_phi) if n_phi else max(2 * self.lmax + 1, 1)
        x, w = leggauss(self.n_theta)
        self.cos_theta = x  # ascending in cos(theta)
        self.theta_weights = w
        self.phi = 2.0 * math.pi * np.arange(self.n_phi) / self.n_phi
        ct = self.cos_theta[:, None] * np.ones(self.n_phi)[None, :]
        ph = np.ones(self.n_theta)[:, None] * self.phi[None, :]
        self.ct_nodes = ct
        self.phi_nodes = ph
        self.weights = (self.theta_weights[:, None]
                        * (2.0 * math.pi / self.n_phi) * np.ones(self.n_phi)[None, :])
        # modes as flat list [(ell, m)] and stacked basis evaluated on nodes
        self.modes = [(l, m) for l in range(self.lmax + 1) for m in range(-l, l + 1)]
        basis = np.empty((len(self.modes), self.n_theta, self.n_phi))
        for k, (l, m) in enumerate(self.modes):
            basis[k] = _real_harmonic(l, m, ct, ph)
        self._basis = basis
        self._proj = basis * self.weights[None, :, :]

    def __eq__(self, other):
        return (isinstance(other, SphereGrid) and self.lmax == other.lmax
                and self.n_theta == other.n_theta and self.n_phi == other.n_phi)

    def __hash__(self):
        return hash((self.lmax, self.n_theta, self.n_phi))

    @property
    def shape(self):
        return (self.n_theta, self.n_phi)

    def harmonic(self, ell, m):
        """Nodal values of the real orthonormal harmonic Y_{ell,m}."""
        return self._basis[self.modes.index((ell, m))].copy()

    def analyze(self, values):
        """Nodal values -> real harmonic coefficients (flat over self.modes)."""
        values = np.asarray(values)
        return np.tensordot(self._proj, values, axes=([1, 2], [0, 1]))

    def synthesize(self, coeffs):
        """Harmonic coefficients -> nodal values."""
        return np.tensordot(np.asarray(coeffs), self._basis, axes=(0, 0))

    def integrate(self, values):
        return float(np.sum(self.weights * values).real) if np.isrealobj(values) \
            else complex(np.sum(self.weights * values))

    def ell_of_mode(self):
        return np.array([l for l, _ in self.modes])


@dataclass
class AngularField:
    """A function on S^2: nodal values on a SphereGrid plus a harmonic view."""

    grid: SphereGrid
    values: np.ndarray = None
    _coeffs: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.values is None:
            self.values = np.zeros(self.grid.shape)
        self.values = np.asarray(self.values, dtype=float) \
            if np.isrealobj(self.values) else np.asarray(self.values)
        if self.values.shape != self.grid.shape:
            raise ValueError(f"values shape {self.values.shape} != grid {self.grid.shape}")

    @classmethod
    def constant(cls, value, grid=None, lmax=8):
        grid = grid or SphereGrid(lmax)
        return cls(grid, np.full(grid.shape, float(value)))

    @classmethod
    def from_harmonic(cls, ell, m, grid=None, lmax=None, amplitude=1.0):
        grid = grid or SphereGrid(max(lmax or 8, ell))
        return cls(grid, amplitude * grid.harmonic(ell, m))

    @classmethod
    def from_function(cls, fn, grid=None, lmax=8):
        """Sample fn(theta, phi) on the grid nodes."""
        grid = grid or SphereGrid(lmax)
        theta = np.arccos(grid.ct_nodes)
        return cls(grid, np.asarray(fn(theta, grid.phi_nodes), dtype=float))

    @property
    def lmax(self):
        return self.grid.lmax

    def coefficients(self):
        if self._coeffs is None:
            self._coeffs = self.grid.analyze(self.values)
        return self._coeffs

    def coefficient(self, ell, m):
        return self.coefficients()[self.grid.modes.index((ell, m))]

    def average(self):
        """(1/4pi) integral over S^2."""
        return self.grid.integrate(self.values) / (4.0 * math.pi)

    def integral(self):
        return self.grid.integrate(self.values)

    def laplacian(self):
        """Positive spherical Laplacian: coefficient-wise * ell(ell+1)."""
        c = self.coefficients() * self.grid.ell_of_mode() * (self.grid.ell_of_mode() + 1)
        return AngularField(self.grid, self.grid.synthesize(c))

    def norm_inf(self):
        return float(np.max(np.abs(self.values)))

    def __add__(self, other):
        ov = other.values if isinstance(other, AngularField) else other
        return AngularField(self.grid, self.values + ov)

    def __sub__(self, other):
        ov = other.values if isinstance(other, AngularField) else other
        return AngularField(self.grid, self.values - ov)

    def __mul__(self, other):
        ov = other.values if isinstance(other, AngularField) else other
        return AngularField(self.grid, self.values * ov)

    __rmul__ = __mul__


def sphere_average(g):
    """(1/4pi) * integral of g over S^2 by quadrature.

    Accepts an AngularField or bare nodal values paired with its grid.
    """
    if isinstance(g, AngularField):
        return g.average()
    raise TypeError("sphere_average expects an AngularField")
