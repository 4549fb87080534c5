"""Moving weighted least-squares fits with parity-adapted polynomial bases.

Each fit is a local polynomial around a center (xi_c, eta_c) minimising
sum_i w_i (P(xi_i, eta_i) - f_i)^2 with Gaussian weights
w_i = exp(-r_i^2 / (2 b^2)).

For parity-constrained fits the basis is built from the local offset
u = xi - xi_c and the global variable s = eta^2 - eta_c^2:

    EVEN:  u^a s^j          (a + 2j <= degree)
    ODD:   u^a eta s^j      (a + 2j + 1 <= degree)
    NONE:  u^a (eta - eta_c)^b

Every EVEN (ODD) basis function is exactly even (odd) under eta -> -eta, and
at eta_c = 0 the bases reduce to the monomials u^a eta^b with b even (odd).
Using s instead of raw powers of eta keeps the fit well conditioned away
from the axis.  Fit results are always converted to Taylor coefficients in
the local offsets (u, eta - eta_c), which makes derivative extraction exact
differentiation of the fitted polynomial.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from math import comb, factorial

import numpy as np
from scipy.spatial import cKDTree

from .errors import InsufficientPoints, OrderTooHigh, SingularFit

COND_LIMIT = 1e10


class ParityClass(enum.Enum):
    EVEN_IN_ETA = "even"
    ODD_IN_ETA = "odd"
    NONE = "none"


EVEN = ParityClass.EVEN_IN_ETA
ODD = ParityClass.ODD_IN_ETA
NONE = ParityClass.NONE


def basis_terms(degree: int, parity: ParityClass) -> list:
    """Basis terms as (a, j) pairs; see the module docstring for meaning."""
    terms = []
    for total in range(degree + 1):
        for j in range(total + 1):
            a = total - j
            if parity is NONE:
                terms.append((a, j))
            elif parity is EVEN and j % 2 == 0:
                terms.append((a, j // 2))
            elif parity is ODD and j % 2 == 1:
                terms.append((a, (j - 1) // 2))
    return terms


def basis_size(degree: int, parity: ParityClass) -> int:
    return len(basis_terms(degree, parity))


def _design(u, eta, eta_c, degree, parity):
    """Basis values; u, eta have shape (..., k), eta_c shape (...)."""
    eta_c = np.asarray(eta_c)[..., None]
    terms = basis_terms(degree, parity)
    if parity is NONE:
        second = eta - eta_c
    else:
        second = eta * eta - eta_c * eta_c
    cols = []
    for a, j in terms:
        col = u**a * second**j
        if parity is ODD:
            col = col * eta
        cols.append(col)
    return np.stack(cols, axis=-1)


def _to_local_taylor(coef, eta_c, degree, parity):
    """Map basis coefficients (..., nb) to Taylor coefficients (..., d+1, d+1).

    Entry [a, b] multiplies u^a (eta - eta_c)^b.
    """
    eta_c = np.asarray(eta_c, dtype=float)
    out = np.zeros(coef.shape[:-1] + (degree + 1, degree + 1))
    for n, (a, j) in enumerate(basis_terms(degree, parity)):
        c = coef[..., n]
        if parity is NONE:
            out[..., a, j] += c
            continue
        # s^j = delta^j (2 eta_c + delta)^j
        for kk in range(j + 1):
            w = comb(j, kk) * np.power(2.0 * eta_c, j - kk) * c
            if parity is EVEN:
                out[..., a, j + kk] += w
            else:
                out[..., a, j + kk] += w * eta_c
                out[..., a, j + kk + 1] += w
    return out


@dataclass
class LocalFit:
    center: tuple
    coeffs: np.ndarray  # local Taylor coefficients, [a, b] -> u^a (eta-eta_c)^b
    parity: ParityClass
    degree: int
    condition: float

    def value(self) -> float:
        return float(self.coeffs[0, 0])

    def derivative(self, order) -> float:
        return eval_derivative(self, order)


def eval_derivative(fit: LocalFit, order) -> float:
    a, b = order
    if a < 0 or b < 0 or a + b > fit.degree:
        raise OrderTooHigh(f"derivative order {order} exceeds fit degree {fit.degree}")
    return float(factorial(a) * factorial(b) * fit.coeffs[a, b])


def _solve(design, values, weights):
    """Weighted least squares through the eigen-decomposition of the
    column-equilibrated normal matrix.

    Returns (coefficients, condition number of the weighted normal matrix).
    Directions with eigenvalue below 1e-14 of the largest are dropped.
    """
    sw = np.sqrt(weights)
    A = design * sw[..., None]
    y = values * sw
    norms = np.sqrt(np.einsum("...ki,...ki->...i", A, A))
    norms = np.where(norms > 0, norms, 1.0)
    A = A / norms[..., None, :]
    At = np.swapaxes(A, -1, -2)
    G = At @ A
    lam, V = np.linalg.eigh(G)
    lmax = lam[..., -1:]
    with np.errstate(divide="ignore", invalid="ignore"):
        cond = np.where(lam[..., 0] > 0, lam[..., -1] / lam[..., 0], np.inf)
    keep = lam > 1e-14 * lmax
    inv = np.where(keep, 1.0 / np.where(keep, lam, 1.0), 0.0)
    rhs = (At @ y[..., None])[..., 0]
    vt_rhs = (np.swapaxes(V, -1, -2) @ rhs[..., None])[..., 0]
    coef = (V @ (inv * vt_rhs)[..., None])[..., 0]
    return coef / norms, cond


def fit_local(values, points, center, degree, parity=NONE, bandwidth=1.0) -> LocalFit:
    """Fit one local polynomial to scattered samples.

    ``points`` is an (n, 2) array of (xi, eta); ``values`` the samples there.
    """
    points = np.asarray(points, dtype=float)
    values = np.asarray(values, dtype=float)
    parity = ParityClass(parity)
    nb = basis_size(degree, parity)
    if len(values) < nb:
        raise InsufficientPoints(f"{len(values)} samples for a {nb}-term basis")
    if not bandwidth > 0:
        raise ValueError("bandwidth must be positive")
    xc, ec = center
    u = points[:, 0] - xc
    eta = points[:, 1]
    r2 = u**2 + (eta - ec) ** 2
    w = np.exp(-r2 / (2.0 * bandwidth**2))
    coef, cond = _solve(_design(u, eta, ec, degree, parity), values, w)
    if not cond < COND_LIMIT:
        raise SingularFit(f"weighted normal system condition {cond:.3g}")
    taylor = _to_local_taylor(coef, ec, degree, parity)
    return LocalFit((float(xc), float(ec)), taylor, parity, degree, float(cond))


@dataclass
class BatchFit:
    """Local Taylor coefficients for many centers at once."""

    coeffs: np.ndarray  # (N, d+1, d+1)
    condition: np.ndarray  # (N,)
    degree: int
    parity: ParityClass

    @property
    def singular(self) -> np.ndarray:
        return ~(self.condition < COND_LIMIT)

    def derivative(self, order) -> np.ndarray:
        a, b = order
        if a + b > self.degree:
            raise OrderTooHigh(f"derivative order {order} exceeds fit degree {self.degree}")
        return factorial(a) * factorial(b) * self.coeffs[:, a, b]


class StencilIndex:
    """Nearest-neighbour stencils over a fixed cloud of points.

    Ordering within a stencil is by distance, then by cloud index.
    """

    def __init__(self, points):
        self.points = np.asarray(points, dtype=float)
        self.tree = cKDTree(self.points)

    def __len__(self):
        return len(self.points)

    def query(self, centers, n):
        centers = np.atleast_2d(np.asarray(centers, dtype=float))
        if n > len(self.points):
            raise InsufficientPoints(f"need {n} points, cloud has {len(self.points)}")
        k = min(n + 8, len(self.points))
        dist, idx = self.tree.query(centers, k=k)
        dist = dist.reshape(len(centers), k)
        idx = idx.reshape(len(centers), k)
        order = np.lexsort((idx, dist), axis=-1)
        idx = np.take_along_axis(idx, order, axis=-1)[:, :n]
        dist = np.take_along_axis(dist, order, axis=-1)[:, :n]
        return idx, dist


def select_stencil(points, idx: int, n_min: int, alive=None) -> list:
    """Indices of the ``n_min`` nearest alive points to point ``idx`` (itself included).

    ``points`` is an (n, 2) array or an ensemble, whose full grid is then
    flattened row-major and its own alive mask used.
    """
    if hasattr(points, "full"):
        full = points.full()
        if alive is None:
            alive = full.alive.ravel()
        points = np.column_stack([full.xi.ravel(), full.eta.ravel()])
    points = np.asarray(points, dtype=float)
    if alive is None:
        alive = np.ones(len(points), dtype=bool)
    live = np.flatnonzero(alive)
    if len(live) < n_min:
        raise InsufficientPoints(f"{len(live)} alive points, need {n_min}")
    d2 = np.sum((points[live] - points[idx]) ** 2, axis=1)
    order = np.lexsort((live, d2))
    return [int(i) for i in live[order[:n_min]]]


def local_spacing(dist) -> np.ndarray:
    """Typical neighbour spacing from sorted stencil distances (N, n)."""
    return np.mean(dist[:, 1:5], axis=1)


def fit_batch(
    cloud,
    values,
    centers,
    stencil,
    degree,
    parity,
    bandwidth,
    scale=(1.0, 1.0),
) -> BatchFit:
    """Fit every center against its stencil rows of ``cloud``.

    cloud: (M, 2); values: (M,); centers: (N, 2); stencil: (N, n) int;
    bandwidth: scalar or (N,).  Coordinates are divided by ``scale``
    before fitting (bandwidth is in scaled units); returned coefficients
    are in the original units.
    """
    parity = ParityClass(parity)
    sx, se = scale
    inv = np.array([1.0 / sx, 1.0 / se])
    centers = np.asarray(centers, dtype=float) * inv
    pts = cloud[stencil] * inv
    u = pts[..., 0] - centers[:, :1]
    eta = pts[..., 1]
    ec = centers[:, 1]
    r2 = u**2 + (eta - ec[:, None]) ** 2
    b = np.broadcast_to(np.asarray(bandwidth, dtype=float), (len(centers),))
    w = np.exp(-r2 / (2.0 * b[:, None] ** 2))
    coef, cond = _solve(_design(u, eta, ec, degree, parity), values[stencil], w)
    taylor = _to_local_taylor(coef, ec, degree, parity)
    a = np.arange(degree + 1)
    taylor /= (sx ** a[:, None]) * (se ** a[None, :])
    return BatchFit(taylor, cond, degree, parity)
