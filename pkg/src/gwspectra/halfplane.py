"""Upper half-plane primitives.

The open upper half-plane carries every resolvent-like quantity in this
package. This module provides the hyperbolic semi-metric gamma, the
semicircle and modified Kesten-McKay transforms with their limiting
densities, Euclidean conversion bounds, and the concentration statistics
(Q's, beta's, angles) used by the contraction laboratory.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "HalfPlanePoint",
    "SpectralStrip",
    "GammaStats",
    "require_halfplane",
    "gamma",
    "hyperbolic_distance",
    "semicircle_transform",
    "kesten_mckay_transform",
    "limiting_density",
    "hyperbolic_to_euclidean",
    "gamma_statistics",
    "cos_plus",
]


class HalfPlanePoint(complex):
    """A complex number constrained to have strictly positive imaginary part.

    Construction with Im <= 0 (or NaN) raises; there is deliberately no
    clamping, a non-positive imaginary part always indicates a bug upstream.
    """

    def __new__(cls, re, im=None):
        z = complex(re) if im is None else complex(re, im)
        if not z.imag > 0.0:
            raise ValueError(f"point {z} is not in the open upper half-plane")
        return super().__new__(cls, z.real, z.imag)


def require_halfplane(z) -> None:
    """Validate that z (scalar or array) lies in the open upper half-plane."""
    im = np.imag(z)
    if not np.all(im > 0.0):
        raise ValueError("argument must lie in the open upper half-plane (Im > 0)")


@dataclass(frozen=True)
class SpectralStrip:
    """Spectral window: either a symmetric strip of half-width E in (0,2),
    or a Borel window given by disjoint sorted real intervals. Im z <= max_im."""

    half_width: float | None = None
    borel_set: tuple[tuple[float, float], ...] | None = None
    max_im: float = 1.0

    def __post_init__(self):
        if (self.half_width is None) == (self.borel_set is None):
            raise ValueError("give exactly one of half_width or borel_set")
        if self.half_width is not None and not 0.0 < self.half_width < 2.0:
            raise ValueError("half_width must lie in (0, 2)")
        if self.borel_set is not None:
            prev_hi = -np.inf
            for lo, hi in self.borel_set:
                if not (lo < hi and lo >= prev_hi):
                    raise ValueError("borel_set intervals must be disjoint and sorted")
                prev_hi = hi

    def contains(self, z: complex) -> bool:
        if not 0.0 < z.imag <= self.max_im:
            return False
        x = z.real
        if self.half_width is not None:
            return -self.half_width < x < self.half_width
        return any(lo < x < hi for lo, hi in self.borel_set)

    def real_grid(self, n: int) -> np.ndarray:
        """n real points spread over the window (per-interval for Borel form)."""
        if self.half_width is not None:
            e = self.half_width
            return np.linspace(-e, e, n + 2)[1:-1]
        lengths = np.array([hi - lo for lo, hi in self.borel_set])
        shares = np.maximum(1, np.round(n * lengths / lengths.sum()).astype(int))
        pts = [np.linspace(lo, hi, k + 2)[1:-1] for (lo, hi), k in zip(self.borel_set, shares)]
        return np.concatenate(pts)


@dataclass(frozen=True)
class GammaStats:
    """Concentration statistics of a family (h_1..h_n, h_l) measured against a
    reference point, at exponent p. All Q's lie in [0,1] (0/0 = 0); beta_2 and
    beta_l are sqrt(1 - Q^2). cos_alpha[i, j] is the cosine of the angle between
    h_i - ref and h_j - ref (0 when either factor vanishes, the arg 0 = pi/2
    convention); cos_alpha_l[i] is the same angle against h_l - ref."""

    q_s: float
    q_2: float
    q_l: float
    beta_2: float
    beta_l: float
    gamma_s: float
    gamma_l: float
    gammas: np.ndarray
    weights: np.ndarray
    cos_alpha: np.ndarray
    cos_alpha_l: np.ndarray
    h_s: complex
    p: float


def gamma(g, h):
    """Hyperbolic semi-metric |g-h|^2 / (Im g Im h). Scalar or elementwise."""
    require_halfplane(g)
    require_halfplane(h)
    return _gamma_raw(g, h)


def _gamma_raw(g, h):
    d = np.asarray(g) - np.asarray(h)
    out = (d.real**2 + d.imag**2) / (np.imag(g) * np.imag(h))
    return float(out) if out.ndim == 0 else out


def hyperbolic_distance(g, h):
    """Poincare half-plane distance, arccosh(1 + gamma/2)."""
    return np.arccosh(1.0 + gamma(g, h) / 2.0)


def semicircle_transform(z):
    """Cauchy-Stieltjes transform of the semicircle law, the fixed point of
    h -> -(z + h)^(-1).

    Computed as (-z + sqrt(z-2)sqrt(z+2))/2, which equals the principal-branch
    formula (-z + sqrt(z^2-4))/2 on the strip |Re z| < 2 and selects the root
    lying in the upper half-plane for every z there.
    """
    require_halfplane(z)
    z = np.asarray(z, dtype=np.complex128)
    out = 0.5 * (-z + np.sqrt(z - 2.0) * np.sqrt(z + 2.0))
    return complex(out) if out.ndim == 0 else out


def kesten_mckay_transform(z, rho: float):
    """Transform of the modified Kesten-McKay law with ratio rho:
    -(z + rho * Gamma(z))^(-1)."""
    if rho <= 0:
        raise ValueError("rho must be positive")
    g = semicircle_transform(z)
    out = -1.0 / (np.asarray(z, dtype=np.complex128) + rho * g)
    return complex(out) if out.ndim == 0 else out


def limiting_density(x, rho: float = 1.0):
    """Density of the modified Kesten-McKay law with ratio rho at real x,
    obtained by evaluating the transform on its cut (no small-eta limit):
    (2 rho / pi) sqrt(4-x^2) / (rho^2 (4-x^2) + x^2 (2-rho)^2), zero off [-2,2].

    rho = 1 recovers the semicircle density."""
    if rho <= 0:
        raise ValueError("rho must be positive")
    x = np.asarray(x, dtype=np.float64)
    inside = np.abs(x) < 2.0
    x2 = np.where(inside, x * x, 0.0)
    s = np.sqrt(np.where(inside, 4.0 - x2, 0.0))
    # cut value of Gamma is (-x + i s)/2, so z + rho*Gamma = x(2-rho)/2 + i rho s/2
    a = x * (2.0 - rho) / 2.0
    b = rho * s / 2.0
    dens = np.where(inside, b / (np.pi * (a * a + b * b)), 0.0)
    return float(dens) if dens.ndim == 0 else dens


def hyperbolic_to_euclidean(g, h):
    """Euclidean bounds implied by gamma: returns (B1, B2) with
    |g-h|^2 <= B1 = |h|^2 (4 gamma^2 + 2 gamma) and
    1/Im g <= B2 = (4 gamma + 2)/Im h."""
    gm = gamma(g, h)
    b1 = np.abs(h) ** 2 * (4.0 * gm**2 + 2.0 * gm)
    b2 = (4.0 * gm + 2.0) / np.imag(h)
    return b1, b2


def cos_plus(c):
    """max(cos, 0) applied to an already-computed cosine."""
    return np.maximum(c, 0.0)


def _cos_angle(u: np.ndarray, w: np.ndarray) -> np.ndarray:
    """cos(arg(u * conj(w))) with the arg 0 = pi/2 convention (-> 0)."""
    prod = u * np.conj(w)
    mod = np.abs(prod)
    with np.errstate(invalid="ignore", divide="ignore"):
        c = np.where(mod > 0.0, prod.real / np.where(mod > 0.0, mod, 1.0), 0.0)
    return c


def gamma_statistics(h_list, h_l, gamma_ref, p: float = 2.0) -> GammaStats:
    """Concentration statistics of (h_1..h_n) and h_l against gamma_ref.

    q_s compares gamma of the barycenter to the mean gamma^(p/2);
    q_2 is the L^(p/2)/L^p moment ratio of the gammas;
    q_l measures how close gamma_l^p and the mean gamma^p are.
    All with the 0/0 = 0 convention.
    """
    h = np.asarray(h_list, dtype=np.complex128)
    if h.ndim != 1 or h.size == 0:
        raise ValueError("h_list must be a non-empty 1-d collection")
    require_halfplane(h)
    require_halfplane(h_l)
    require_halfplane(gamma_ref)
    if p < 2:
        raise ValueError("p must be >= 2")

    ref = complex(gamma_ref)
    gammas = _gamma_raw(h, ref)
    h_s = complex(h.mean())
    g_s = _gamma_raw(h_s, ref)
    g_l = _gamma_raw(complex(h_l), ref)

    mean_half = float(np.mean(gammas ** (p / 2.0)))
    mean_full = float(np.mean(gammas**p))

    def _ratio(num, den):
        return num / den if den > 0.0 else 0.0

    q_s = _ratio(g_s ** (p / 2.0), mean_half)
    q_2 = _ratio(mean_half, np.sqrt(mean_full))
    q_l = _ratio(2.0 * np.sqrt(g_l**p * mean_full), g_l**p + mean_full)

    beta_2 = float(np.sqrt(max(0.0, 1.0 - q_2**2)))
    beta_l = float(np.sqrt(max(0.0, 1.0 - q_l**2)))

    im = np.imag(h)
    weights = im / im.sum()
    diffs = h - ref
    cos_alpha = _cos_angle(diffs[:, None], diffs[None, :])
    cos_alpha_l = _cos_angle(diffs, np.asarray(complex(h_l) - ref))

    return GammaStats(
        q_s=float(q_s),
        q_2=float(q_2),
        q_l=float(q_l),
        beta_2=beta_2,
        beta_l=beta_l,
        gamma_s=float(g_s),
        gamma_l=float(g_l),
        gammas=gammas,
        weights=weights,
        cos_alpha=cos_alpha,
        cos_alpha_l=cos_alpha_l,
        h_s=h_s,
        p=float(p),
    )
