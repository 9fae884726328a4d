"""Dense small-matrix numerics used by the weight-correlation measures.

Everything here operates on plain float64 numpy arrays. The multivariate
Gaussian KL divergence is kept fully general; it serves as the independent
cross-check for the closed-form layer KL in :mod:`wcgen.wc`.
"""

import warnings

import numpy as np
import scipy.linalg

COSINE_EPS = 1e-12
SPECTRAL_TOL = 1e-10
SPECTRAL_MAX_ITER = 1000


class NonPositiveDefiniteError(ValueError):
    """A covariance argument failed its Cholesky factorisation."""


class ConvergenceWarning(RuntimeWarning):
    """Power iteration hit max_iter before reaching the tolerance."""


def as_matrix(a):
    """Validate and return a 2-D float64 array (non-empty, all finite)."""
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got ndim={m.ndim}")
    if m.size == 0:
        raise ValueError("empty matrix")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix contains NaN or Inf")
    return m


def frobenius_norm(m):
    m = as_matrix(m)
    return float(np.sqrt(np.sum(m * m)))


def _power_iteration_seed(shape):
    # Start vector depends only on the matrix shape so repeated calls on
    # equally-shaped inputs are reproducible.
    return np.random.SeedSequence([0x5EC7, shape[0], shape[1]])


def spectral_norm(m, tol=SPECTRAL_TOL, max_iter=SPECTRAL_MAX_ITER):
    """Largest singular value via power iteration on ``m.T @ m``.

    Warns with :class:`ConvergenceWarning` if ``max_iter`` is reached before
    two successive estimates agree to within ``tol``; the last estimate is
    still returned.
    """
    m = as_matrix(m)
    if tol <= 0:
        raise ValueError("tol must be positive")
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    gram = m.T @ m
    rng = np.random.default_rng(_power_iteration_seed(m.shape))
    v = rng.standard_normal(m.shape[1])
    v /= np.linalg.norm(v)
    estimate = 0.0
    for _ in range(max_iter):
        w = gram @ v
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        v = w / nw
        new_estimate = float(np.sqrt(v @ gram @ v))
        if abs(new_estimate - estimate) < tol:
            return new_estimate
        estimate = new_estimate
    warnings.warn(
        f"power iteration did not converge in {max_iter} iterations",
        ConvergenceWarning,
    )
    return estimate


def cosine_similarity(u, v):
    """Cosine of the angle between u and v; 0 if either norm is ~0."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape or u.ndim != 1:
        raise ValueError(f"vector shapes differ: {u.shape} vs {v.shape}")
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu < COSINE_EPS or nv < COSINE_EPS:
        return 0.0
    return float(u @ v / (nu * nv))


def kronecker(a, b):
    return np.kron(as_matrix(a), as_matrix(b))


def determinant(m):
    m = as_matrix(m)
    if m.shape[0] != m.shape[1]:
        raise ValueError(f"determinant of non-square matrix {m.shape}")
    return float(np.linalg.det(m))


def _cholesky(sigma, name):
    try:
        return np.linalg.cholesky(as_matrix(sigma))
    except np.linalg.LinAlgError as exc:
        raise NonPositiveDefiniteError(f"{name} is not positive definite") from exc


def gaussian_kl(mu_q, sigma_q, mu_p, sigma_p):
    """KL(N(mu_q, sigma_q) || N(mu_p, sigma_p)) for full covariances.

    Computed via Cholesky factors for stability:
    0.5 * [tr(Sp^-1 Sq) + (mq-mp)^T Sp^-1 (mq-mp) - k + ln det Sp / det Sq].
    """
    mu_q = np.asarray(mu_q, dtype=np.float64).ravel()
    mu_p = np.asarray(mu_p, dtype=np.float64).ravel()
    k = mu_q.size
    if mu_p.size != k:
        raise ValueError("mean dimensions differ")
    lq = _cholesky(sigma_q, "sigma_q")
    lp = _cholesky(sigma_p, "sigma_p")
    if lq.shape[0] != k or lp.shape[0] != k:
        raise ValueError("covariance dimensions do not match the means")
    # tr(Sp^-1 Sq) = ||Lp^-1 Lq||_F^2
    a = scipy.linalg.solve_triangular(lp, lq, lower=True)
    trace_term = float(np.sum(a * a))
    d = scipy.linalg.solve_triangular(lp, mu_q - mu_p, lower=True)
    mahal = float(d @ d)
    logdet_p = 2.0 * float(np.sum(np.log(np.diag(lp))))
    logdet_q = 2.0 * float(np.sum(np.log(np.diag(lq))))
    return 0.5 * (trace_term + mahal - k + logdet_p - logdet_q)
