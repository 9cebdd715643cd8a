"""Exact densities and likelihood ratios for the shape distributions.

Each observed point is a surface draw plus isotropic Gaussian noise, so its
density is the noise kernel averaged over the surface parameter distribution.
For the unit shapes that average collapses to closed forms:

* sphere: the radial shell integral gives, with a = (r-R)^2/2s^2 and
  t = 2rR/s^2,  log p = -1.5 log(2 pi s^2) - a + log1p(-exp(-t)) - log t;
* cylinder barrel: the (x, y) part is a ring convolved with a 2D Gaussian,
  (1/(2 pi s^2)) exp(-(rho-R)^2/2s^2) I0(rho R / s^2), evaluated via the
  scaled Bessel function; the z part is a uniform band smeared by the noise,
  a difference of normal CDFs.

For the truncated shapes the radial parameter integrates out in closed form:
with u the projection of the observation onto the source direction,
|x - r0 s_hat|^2 = |x|^2 - 2 r0 u + r0^2, and a truncated-normal radial
density times the Gaussian kernel in r0 is again a (scaled, truncated)
Gaussian in u. What remains is Gauss-Legendre quadrature over the angular
parameters only: 2D (polar, azimuth) for the spherical patch, 1D (azimuth)
for the cylindrical patch, whose z factor is the closed-form band. Node
counts escalate through fixed levels until the result stabilises to a
relative tolerance; failure to stabilise raises NumericError carrying the
achieved figure. Each point's quadrature is restricted to the angular window
that can contribute (distance to the clipped nearest parameter point plus a
10 sigma margin); points are grouped into noise-scale cells so a group
shares one window and one vectorised grid.

Per-cloud scores are sums of per-point log densities; the likelihood ratio
score of a cloud is the class-1 minus class-0 log likelihood.
"""

from __future__ import annotations

import functools

import numpy as np
from scipy.special import i0e, log_ndtr, ndtr

from .errors import InputError, NumericError
from .shapes import (CYLINDER_HALF_HEIGHT, ShapeKind, ShapeSpec,
                     TRUNC_AZIMUTH_RANGE, TRUNC_POLAR_RANGE,
                     TRUNC_RADIAL_MEAN, TRUNC_RADIAL_RANGE, TRUNC_RADIAL_SD,
                     TRUNC_Z_RANGE, UNIT_RADIUS, scenario_specs)

QUAD_LEVELS_2D = (16, 24, 32, 48, 64, 96, 128)
QUAD_LEVELS_1D = (24, 32, 48, 64, 96, 128, 192)
TRUNC_QUAD_TOL = 1e-6
WINDOW_SIGMAS = 10.0
_CELL_SIGMAS = 1.0
# cap on gridpoints held at once: batch * nodes^dim
_EVAL_BUDGET = 4_000_000


# ---------------------------------------------------------------------------
# closed forms
# ---------------------------------------------------------------------------

def sphere_shell_logpdf(r, radius: float, sigma: float):
    """Log density at distance r from centre of a noisy uniform sphere."""
    s2 = sigma * sigma
    r = np.maximum(np.asarray(r, dtype=float), 1e-300)
    a = (r - radius) ** 2 / (2.0 * s2)
    t = 2.0 * r * radius / s2
    # log((1 - e^-t)/t) -> 0 as t -> 0; expm1 keeps the tiny-t branch
    # exact where 1 - e^-t would underflow
    corr = np.log(-np.expm1(-t)) - np.log(t)
    return -1.5 * np.log(2.0 * np.pi * s2) - a + corr


def ring_logpdf(rho, radius: float, sigma: float):
    """2D log density at axis distance rho of a noisy uniform circle."""
    s2 = sigma * sigma
    rho = np.asarray(rho, dtype=float)
    z = rho * radius / s2
    return (-np.log(2.0 * np.pi * s2) - (rho - radius) ** 2 / (2.0 * s2)
            + np.log(i0e(z)))


def _log_ndtr_diff(a, b):
    """log(Phi(b) - Phi(a)) for b >= a, stable in both tails."""
    a, b = np.broadcast_arrays(np.asarray(a, float), np.asarray(b, float))
    out = np.empty(a.shape)
    upper = (a + b) > 0
    # work per branch on gathered elements: the far tail of the dominant
    # term is the fallback where the CDF difference underflows
    for mask, lo_arg, hi_arg, fb in (
            (upper, -b[upper], -a[upper], -a[upper]),
            (~upper, a[~upper], b[~upper], b[~upper])):
        diff = ndtr(hi_arg) - ndtr(lo_arg)
        bad = diff <= 0
        with np.errstate(divide="ignore"):
            vals = np.log(diff)
        if bad.any():
            vals[bad] = log_ndtr(fb[bad])
        out[mask] = vals
    return out


def band_logpdf(z, lo: float, hi: float, sigma: float):
    """1D log density of U(lo, hi) convolved with N(0, sigma^2)."""
    z = np.asarray(z, dtype=float)
    return (_log_ndtr_diff((z - hi) / sigma, (z - lo) / sigma)
            - np.log(hi - lo))


@functools.lru_cache(maxsize=8)
def _smear_consts(sigma: float):
    s2 = sigma * sigma
    sd2 = TRUNC_RADIAL_SD ** 2
    lo, hi = TRUNC_RADIAL_RANGE
    mass = (ndtr((hi - TRUNC_RADIAL_MEAN) / TRUNC_RADIAL_SD)
            - ndtr((lo - TRUNC_RADIAL_MEAN) / TRUNC_RADIAL_SD))
    tot = sd2 + s2
    post_sd = np.sqrt(sd2 * s2 / tot)
    return sd2, tot, post_sd, 0.5 * np.log(s2 / tot) - np.log(mass)


def radial_smear_log(u, sigma: float):
    """log of int f_r(r0) exp(-(r0-u)^2 / 2 sigma^2) dr0 in closed form.

    f_r is the truncated-normal radial density shared by both truncated
    shapes; the integrand is a product of Gaussians in r0, so the integral
    is a Gaussian in u times a truncated-normal mass factor.
    """
    u = np.asarray(u, dtype=float)
    sd2, tot, post_sd, log_c = _smear_consts(float(sigma))
    s2 = sigma * sigma
    lo, hi = TRUNC_RADIAL_RANGE
    post_mean = (TRUNC_RADIAL_MEAN * s2 + u * sd2) / tot
    return (log_c - (u - TRUNC_RADIAL_MEAN) ** 2 / (2.0 * tot)
            + _log_ndtr_diff((lo - post_mean) / post_sd,
                             (hi - post_mean) / post_sd))


# ---------------------------------------------------------------------------
# quadrature plumbing
# ---------------------------------------------------------------------------

@functools.lru_cache(maxsize=None)
def _leggauss(n: int):
    return np.polynomial.legendre.leggauss(n)


def _scaled_nodes(lo: float, hi: float, n: int):
    x, w = _leggauss(n)
    half = 0.5 * (hi - lo)
    return lo + half * (x + 1.0), half * w


def _logsumexp_rows(lg: np.ndarray):
    """Row-wise logsumexp of a 2D array; clobbers its argument."""
    peak = lg.max(axis=1)
    np.exp(lg - peak[:, None], out=lg)
    return np.log(lg.sum(axis=1)) + peak


def _group_indices(coords: np.ndarray, cell: float):
    """Index arrays grouping rows of coords into integer lattice cells."""
    keys = np.floor(coords / cell).astype(np.int64)
    _, inverse = np.unique(keys, axis=0, return_inverse=True)
    order = np.argsort(inverse, kind="stable")
    sorted_inv = inverse[order]
    cuts = np.flatnonzero(np.diff(sorted_inv)) + 1
    return np.split(order, cuts)


def _escalate(eval_level, levels, tol: float):
    prev = eval_level(levels[0])
    achieved = np.inf
    rel = np.zeros(0)
    for level in levels[1:]:
        cur = eval_level(level)
        rel = np.abs(np.expm1(cur - prev))
        achieved = float(rel.max()) if rel.size else 0.0
        if achieved < tol:
            return cur
        prev = cur
    raise NumericError(
        f"density quadrature did not stabilise: relative change "
        f"{achieved:.3e} at {levels[-1]} nodes per axis "
        f"(tolerance {tol:.1e})", achieved=achieved,
        indices=np.flatnonzero(rel >= tol))


def _azimuth_window(psi_min, psi_max, dist, rho_obs_min, rho_src_min,
                    lo, hi):
    """Azimuth interval that can contribute, clipped to the parameter range.

    Chord bound: |xy - source|^2 >= 4 rho rho0 sin^2(dphi/2), so sources
    further than dist in the plane are outside dphi.
    """
    if psi_max - psi_min > np.pi or rho_obs_min <= 0 or rho_src_min <= 0:
        return lo, hi
    half_sin = dist / (2.0 * np.sqrt(rho_obs_min * rho_src_min))
    if half_sin >= 1.0:
        return lo, hi
    spread = 2.0 * np.arcsin(half_sin)
    return max(lo, psi_min - spread), min(hi, psi_max + spread)


# ---------------------------------------------------------------------------
# truncated sphere
# ---------------------------------------------------------------------------

def _trunc_sphere_window(pts: np.ndarray, sigma: float):
    r = np.linalg.norm(pts, axis=1)
    r_safe = np.maximum(r, 1e-12)
    theta = np.arccos(np.clip(pts[:, 2] / r_safe, -1.0, 1.0))
    psi = np.arctan2(pts[:, 1], pts[:, 0])

    rc = np.clip(r, *TRUNC_RADIAL_RANGE)
    tc = np.clip(theta, *TRUNC_POLAR_RANGE)
    pc = np.clip(psi, *TRUNC_AZIMUTH_RANGE)
    clip_pt = np.stack([rc * np.sin(tc) * np.cos(pc),
                        rc * np.sin(tc) * np.sin(pc),
                        rc * np.cos(tc)], axis=1)
    dist = float(np.linalg.norm(pts - clip_pt, axis=1).max())
    dist += WINDOW_SIGMAS * sigma

    r_lo = max(TRUNC_RADIAL_RANGE[0], float(r.min()) - dist)
    r_hi = min(TRUNC_RADIAL_RANGE[1], float(r.max()) + dist)

    # source z = r0 cos(theta0) must land within dist of observed z
    z_lo = float(pts[:, 2].min()) - dist
    z_hi = float(pts[:, 2].max()) + dist
    c_lo = min(z_lo / r_lo, z_lo / r_hi)
    c_hi = max(z_hi / r_lo, z_hi / r_hi)
    c_lo = max(c_lo, np.cos(TRUNC_POLAR_RANGE[1]))
    c_hi = min(c_hi, np.cos(TRUNC_POLAR_RANGE[0]))
    t_lo = np.arccos(np.clip(c_hi, -1.0, 1.0))
    t_hi = np.arccos(np.clip(c_lo, -1.0, 1.0))

    sin_min = min(np.sin(t_lo), np.sin(t_hi))
    rho = np.hypot(pts[:, 0], pts[:, 1])
    p_lo, p_hi = _azimuth_window(float(psi.min()), float(psi.max()), dist,
                                 float(rho.min()), r_lo * sin_min,
                                 *TRUNC_AZIMUTH_RANGE)
    return (t_lo, t_hi), (p_lo, p_hi)


def _trunc_sphere_group(pts: np.ndarray, sigma: float, tol: float):
    (t_lo, t_hi), (p_lo, p_hi) = _trunc_sphere_window(pts, sigma)
    s2 = sigma * sigma
    span = TRUNC_POLAR_RANGE[1] - TRUNC_POLAR_RANGE[0]
    const = -2.0 * np.log(span) - 1.5 * np.log(2.0 * np.pi * s2)
    r_sq = np.einsum("ij,ij->i", pts, pts)

    def eval_level(n):
        tn, tw = _scaled_nodes(t_lo, t_hi, n)
        pn, pw = _scaled_nodes(p_lo, p_hi, n)
        hx = np.sin(tn)[:, None] * np.cos(pn)[None, :]
        hy = np.sin(tn)[:, None] * np.sin(pn)[None, :]
        hz = np.broadcast_to(np.cos(tn)[:, None], hx.shape)
        logw = np.log(tw)[:, None] + np.log(pw)[None, :]
        out = np.empty(len(pts))
        step = max(1, _EVAL_BUDGET // (n * n))
        for i in range(0, len(pts), step):
            x = pts[i:i + step]
            u = (x[:, 0, None, None] * hx + x[:, 1, None, None] * hy
                 + x[:, 2, None, None] * hz)
            lg = (-(r_sq[i:i + step, None, None] - u * u) / (2.0 * s2)
                  + radial_smear_log(u, sigma) + logw)
            out[i:i + step] = _logsumexp_rows(lg.reshape(len(x), -1))
        return out + const

    return _escalate(eval_level, QUAD_LEVELS_2D, tol)


# ---------------------------------------------------------------------------
# truncated cylinder
# ---------------------------------------------------------------------------

def _trunc_cylinder_window(xy: np.ndarray, sigma: float):
    rho = np.hypot(xy[:, 0], xy[:, 1])
    psi = np.arctan2(xy[:, 1], xy[:, 0])
    rc = np.clip(rho, *TRUNC_RADIAL_RANGE)
    pc = np.clip(psi, *TRUNC_AZIMUTH_RANGE)
    clip_pt = np.stack([rc * np.cos(pc), rc * np.sin(pc)], axis=1)
    dist = float(np.linalg.norm(xy - clip_pt, axis=1).max())
    dist += WINDOW_SIGMAS * sigma
    r_lo = max(TRUNC_RADIAL_RANGE[0], float(rho.min()) - dist)
    return _azimuth_window(float(psi.min()), float(psi.max()), dist,
                           float(rho.min()), r_lo, *TRUNC_AZIMUTH_RANGE)


def _trunc_cylinder_group(xy: np.ndarray, sigma: float, tol: float):
    p_lo, p_hi = _trunc_cylinder_window(xy, sigma)
    s2 = sigma * sigma
    span = TRUNC_AZIMUTH_RANGE[1] - TRUNC_AZIMUTH_RANGE[0]
    const = -np.log(span) - np.log(2.0 * np.pi * s2)
    rho_sq = np.einsum("ij,ij->i", xy, xy)

    def eval_level(n):
        pn, pw = _scaled_nodes(p_lo, p_hi, n)
        u = xy[:, 0, None] * np.cos(pn)[None, :] \
            + xy[:, 1, None] * np.sin(pn)[None, :]
        lg = (-(rho_sq[:, None] - u * u) / (2.0 * s2)
              + radial_smear_log(u, sigma) + np.log(pw)[None, :])
        return _logsumexp_rows(lg) + const

    return _escalate(eval_level, QUAD_LEVELS_1D, tol)


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

def _uniform_sphere_logpdf(pts, sigma):
    return sphere_shell_logpdf(np.linalg.norm(pts, axis=-1), UNIT_RADIUS,
                               sigma)


def _uniform_cylinder_logpdf(pts, sigma):
    rho = np.hypot(pts[..., 0], pts[..., 1])
    return (ring_logpdf(rho, UNIT_RADIUS, sigma)
            + band_logpdf(pts[..., 2], -CYLINDER_HALF_HEIGHT,
                          CYLINDER_HALF_HEIGHT, sigma))


def _relabel_failure(exc: NumericError, idx: np.ndarray) -> NumericError:
    """Translate cell-local failure positions into caller positions."""
    local = exc.indices if exc.indices else ()
    return NumericError(str(exc), achieved=exc.achieved,
                        indices=sorted(int(i) for i in idx[list(local)]))


def _trunc_sphere_logpdf(pts, sigma, tol):
    out = np.empty(len(pts))
    for idx in _group_indices(pts, _CELL_SIGMAS * sigma):
        try:
            out[idx] = _trunc_sphere_group(pts[idx], sigma, tol)
        except NumericError as exc:
            raise _relabel_failure(exc, idx) from None
    return out


def _trunc_cylinder_logpdf(pts, sigma, tol):
    xy = pts[:, :2]
    out = np.empty(len(pts))
    for idx in _group_indices(xy, _CELL_SIGMAS * sigma):
        try:
            out[idx] = _trunc_cylinder_group(xy[idx], sigma, tol)
        except NumericError as exc:
            raise _relabel_failure(exc, idx) from None
    return out + band_logpdf(pts[:, 2], *TRUNC_Z_RANGE, sigma)


def log_density(spec: ShapeSpec, points, tol: float = TRUNC_QUAD_TOL):
    """Per-point log density under a shape distribution.

    Accepts any (..., 3) array; returns the matching (...) array of log
    densities. The closed-form shapes are exact; the truncated shapes are
    quadrature results good to roughly ``tol`` in relative terms.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim < 1 or pts.shape[-1] != 3:
        raise InputError(f"expected points of shape (..., 3), got {pts.shape}")
    if not np.isfinite(pts).all():
        raise InputError("points contain non-finite coordinates")
    sigma = spec.noise_sigma
    if sigma <= 0:
        raise InputError("density evaluation requires noise_sigma > 0")
    if spec.kind is ShapeKind.UNIFORM_SPHERE:
        return _uniform_sphere_logpdf(pts, sigma)
    if spec.kind is ShapeKind.UNIFORM_CYLINDER:
        return _uniform_cylinder_logpdf(pts, sigma)
    lead = pts.shape[:-1]
    flat = pts.reshape(-1, 3)
    if spec.kind is ShapeKind.TRUNC_SPHERE:
        return _trunc_sphere_logpdf(flat, sigma, tol).reshape(lead)
    if spec.kind is ShapeKind.TRUNC_CYLINDER:
        return _trunc_cylinder_logpdf(flat, sigma, tol).reshape(lead)
    raise InputError(f"unknown shape kind {spec.kind!r}")


def cloud_log_likelihood(spec: ShapeSpec, clouds,
                         tol: float = TRUNC_QUAD_TOL):
    """Summed per-point log density for each cloud in (n, k, 3)."""
    clouds = np.asarray(clouds, dtype=float)
    try:
        return log_density(spec, clouds, tol=tol).sum(axis=-1)
    except NumericError as exc:
        if clouds.ndim < 2 or not exc.indices:
            raise
        # per-point indices -> the clouds that contain them
        k = clouds.shape[-2]
        bad = sorted({int(i) // k for i in exc.indices})
        raise NumericError(f"{exc} [affected cloud indices: {bad}]",
                           achieved=exc.achieved, indices=bad) from None


def log_likelihood_ratio(spec0: ShapeSpec, spec1: ShapeSpec, clouds,
                         tol: float = TRUNC_QUAD_TOL):
    """Per-cloud class-1 vs class-0 log likelihood ratio."""
    return (cloud_log_likelihood(spec1, clouds, tol=tol)
            - cloud_log_likelihood(spec0, clouds, tol=tol))


def oracle_scores(scenario: str, clouds, noise_sigma: float = 0.3,
                  tol: float = TRUNC_QUAD_TOL):
    """Likelihood-ratio scores for a scenario's class pair."""
    spec0, spec1 = scenario_specs(scenario, noise_sigma)
    return log_likelihood_ratio(spec0, spec1, clouds, tol=tol)
