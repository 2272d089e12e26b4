"""Screened elastic scattering kernel and its Legendre moments.

The per-atom differential cross section is

    sigma(E, mu0) = tau_lab(mu0) * 4 alpha^2 / (k(E)^2 * (1 - mu0 + chi)^q)

with the screening parameter chi = chi_0^2 (1.13 + 3.76 a^2),
chi_0 = 1.13 alpha Z^(1/3) m_e c / p(E), a = Z alpha / beta(E), and the
center-of-mass to lab conversion factor tau_lab built with the mass ratio
1/A. The denominator exponent q is 1 by default and kept configurable
(see the screened-exponent note in the README).

Angular moments g_l = 2 pi Int P_l(mu0) sigma dmu0 are near-singular at
mu0 = 1 (chi ~ 1e-10), so they are integrated with Gauss-Legendre nodes
after the substitution s = ln(1 - mu0 + chi), which flattens the peak.
A doubled-node evaluation guards convergence. Everything here is
per-atom [cm^2]; multiply by atomic densities N_i for macroscopic [1/cm].
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ..constants import ELECTRON_REST_MEV, ELEMENTS, FINE_STRUCTURE
from ..errors import NumericalError
from .kinematics import beta, momentum_mev_c, wave_number_inv_cm

DEFAULT_NODES = 256


@lru_cache(maxsize=16)
def _gauss_nodes(n):
    # leggauss eigensolves a companion matrix; cache it per node count
    return np.polynomial.legendre.leggauss(n)


def screening_parameters(element, e_mev):
    """(chi_0, a, chi_alpha) of one element at kinetic energy e_mev."""
    p = momentum_mev_c(e_mev)
    chi0 = 1.13 * FINE_STRUCTURE * element.z ** (1.0 / 3.0) * ELECTRON_REST_MEV / p
    a = element.z * FINE_STRUCTURE / beta(e_mev)
    chi_alpha = chi0**2 * (1.13 + 3.76 * a**2)
    return chi0, a, chi_alpha


def tau_lab(mu0, mass_ratio):
    """Center-of-mass -> lab frame factor; mass_ratio = m_p/m_target."""
    mu0 = np.asarray(mu0, dtype=float)
    num = (1.0 + 2.0 * mu0 * mass_ratio + mass_ratio**2) ** 1.5
    den = 1.0 + mu0 * mass_ratio
    # den -> 0 only for hydrogen at mu0 = -1, where the limit is 0
    return np.where(den > 0.0, num / np.where(den > 0.0, den, 1.0), 0.0)


def kernel_amplitude(element, e_mev):
    """Prefactor C = 4 alpha^2 / k^2 [cm^2] of the per-atom kernel."""
    k = wave_number_inv_cm(e_mev)
    return 4.0 * FINE_STRUCTURE**2 / k**2


def moliere_dcs(element, e_mev, mu0, n_i=1.0, exponent=1.0):
    """Differential cross section contribution of one element.

    Per-atom for n_i = 1 [cm^2]; pass n_i in atoms/cm^3 for the
    macroscopic contribution [1/cm]. mu0 may be an array in [-1, 1].
    """
    mu0 = np.asarray(mu0, dtype=float)
    if np.any(mu0 < -1.0) or np.any(mu0 > 1.0):
        raise ValueError("mu0 outside [-1, 1]")
    _, _, chi = screening_parameters(element, e_mev)
    c = kernel_amplitude(element, e_mev)
    tau = tau_lab(mu0, 1.0 / element.a)
    return n_i * tau * c / (1.0 - mu0 + chi) ** exponent


def _substitution_nodes(chi, n_nodes):
    """Quadrature nodes for Int_{-1}^{1} f(mu0) dmu0 of a peaked kernel.

    Two Gauss-Legendre pieces: mu0 in [0, 1] under s = ln(1 - mu0 + chi),
    which flattens the screening peak (1 - mu0 computed cancellation-free
    as chi * expm1(s - ln chi)), and mu0 in [-1, 0] under t = sqrt(1 + mu0),
    which absorbs the sqrt endpoint of the lab-frame factor for hydrogen.
    Returns (mu0, one_minus_mu0, jacobian_weights).
    """
    x, w = _gauss_nodes(n_nodes)

    s_lo, s_hi = np.log(chi), np.log(1.0 + chi)
    s = 0.5 * (s_hi - s_lo) * x + 0.5 * (s_hi + s_lo)
    jac_fwd = 0.5 * (s_hi - s_lo) * np.exp(s) * w
    omm_fwd = chi * np.expm1(s - s_lo)

    t = 0.5 * (x + 1.0)
    jac_bwd = 0.5 * 2.0 * t * w
    mu0_bwd = -1.0 + t * t

    mu0 = np.concatenate([1.0 - omm_fwd, mu0_bwd])
    one_minus_mu0 = np.concatenate([omm_fwd, 2.0 - t * t])
    jac = np.concatenate([jac_fwd, jac_bwd])
    return mu0, one_minus_mu0, jac


def moments_of_kernel(kernel, chi, max_degree, n_nodes=DEFAULT_NODES):
    """(g_0..g_max_degree, xi1) of a forward-peaked kernel.

    kernel(mu0, one_minus_mu0) must be vectorized; chi is the screening
    offset used for the de-peaking substitution. Moments carry the 2 pi
    azimuthal factor.
    """
    mu0, omm, jac = _substitution_nodes(chi, n_nodes)
    vals = kernel(mu0, omm) * jac
    p = np.polynomial.legendre.legvander(mu0, max_degree)   # (nodes, deg+1)
    g = 2.0 * np.pi * (vals @ p)
    xi1 = 2.0 * np.pi * np.dot(vals, omm)
    return g, xi1


def legendre_moments(
    element,
    e_mev,
    max_degree,
    n_nodes=DEFAULT_NODES,
    exponent=1.0,
    rtol=1e-9,
):
    """Per-atom moments (g_0..g_max_degree) [cm^2] and xi1 [cm^2].

    Uses the de-peaked quadrature with a doubled-node convergence check;
    raises NumericalError with the achieved error if it fails.
    """
    _, _, chi = screening_parameters(element, e_mev)
    c = kernel_amplitude(element, e_mev)
    ratio = 1.0 / element.a

    def kernel(mu0, one_minus_mu0):
        return tau_lab(mu0, ratio) * c / (one_minus_mu0 + chi) ** exponent

    g, xi1 = moments_of_kernel(kernel, chi, max_degree, n_nodes)
    g2, xi12 = moments_of_kernel(kernel, chi, max_degree, 2 * n_nodes)
    scale = max(abs(g2[0]), abs(xi12))
    err = max(np.max(np.abs(g - g2)), abs(xi1 - xi12)) / scale
    if err > rtol:
        raise NumericalError(
            f"moment quadrature for {element.symbol} at {e_mev:g} MeV did not "
            f"converge: achieved {err:.3e}, tolerance {rtol:.3e}"
        )
    return g2, xi12


@dataclass
class ScatteringMomentTable:
    """Per-element angular moments on an energy grid.

    g has shape (12, n_E, max_degree+1) and xi1 (12, n_E), both per-atom
    [cm^2]; macroscopic values follow by weighting with atomic densities.
    """

    energies: np.ndarray
    g: np.ndarray
    xi1: np.ndarray

    @classmethod
    def build(cls, energies, max_degree, n_nodes=DEFAULT_NODES, exponent=1.0):
        energies = np.asarray(energies, dtype=float)
        g = np.empty((len(ELEMENTS), energies.size, max_degree + 1))
        xi1 = np.empty((len(ELEMENTS), energies.size))
        for i, elem in enumerate(ELEMENTS):
            for j, e in enumerate(energies):
                g[i, j], xi1[i, j] = legendre_moments(
                    elem, e, max_degree, n_nodes=n_nodes, exponent=exponent
                )
        return cls(energies=energies, g=g, xi1=xi1)

    def validate(self, rtol=1e-8):
        """Invariants: g0 > 0, |g_l| <= g0, xi1 = g0 - g1."""
        g0 = self.g[..., 0]
        if np.any(g0 <= 0.0):
            raise NumericalError("non-positive g0 in moment table")
        if np.any(np.abs(self.g) > g0[..., None] * (1.0 + 1e-12)):
            raise NumericalError("moment bound |g_l| <= g0 violated")
        ident = np.abs(self.xi1 - (g0 - self.g[..., 1])) / np.abs(g0)
        if np.any(ident > rtol):
            raise NumericalError(
                f"xi1 = g0 - g1 identity violated: worst {ident.max():.3e}"
            )
