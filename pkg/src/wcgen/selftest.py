"""Randomised numerical self-checks runnable from the CLI.

Three suites: finite-difference checks of every analytic correlation
gradient, the closed-form layer KL against the general Gaussian KL on the
explicitly built Kronecker covariance, and the determinant identity of
that covariance. Each suite reports its max observed relative error.
"""

from dataclasses import dataclass

import numpy as np

from . import linalg, nn, wc

FD_STEP = 1e-6
GRAD_TOL = 1e-5
BRACKET_TOL = 1e-6
KL_TOL = 1e-8
DET_TOL = 1e-8
KINK_MARGIN = 1e-4


@dataclass
class SuiteResult:
    name: str
    max_error: float
    tolerance: float
    failing_seed: int = None

    @property
    def ok(self):
        return self.max_error <= self.tolerance


def _rel_err(approx, exact):
    scale = max(np.max(np.abs(exact)), 1e-8)
    return float(np.max(np.abs(approx - exact)) / scale)


def _fd_gradient(fun, w, step=FD_STEP):
    grad = np.zeros_like(w)
    it = np.nditer(w, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        wp = w.copy()
        wp[idx] += step
        wm = w.copy()
        wm[idx] -= step
        grad[idx] = (fun(wp) - fun(wm)) / (2.0 * step)
    return grad


def _away_from_kinks(w):
    """True when no column pair is close to orthogonal (the |.| kink)."""
    if w.ndim == 4:
        return all(
            _away_from_kinks(wz) for wz in wc._channel_matrices(np.asarray(w))
        )
    norms = np.linalg.norm(w, axis=0)
    u = w / norms
    gram = np.abs(u.T @ u)
    np.fill_diagonal(gram, 1.0)
    return bool(np.min(gram) > KINK_MARGIN)


def gradient_suite(n_points=30, seed=0):
    """FD checks for rho gradients, the WCD gradient, and the bracket."""
    worst = 0.0
    failing = None
    for point in range(n_points):
        rng = np.random.default_rng(np.random.SeedSequence([0x6AAD, seed, point]))
        w = rng.standard_normal((4, 5))
        t = rng.standard_normal((3, 3, 2, 3))
        if not (_away_from_kinks(w) and _away_from_kinks(t)):
            continue
        checks = [
            _rel_err(_fd_gradient(wc.wc_fcn, w), wc.rho_gradient_fcn(w)),
            _rel_err(_fd_gradient(wc.wc_cnn, t), wc.rho_gradient_cnn(t)),
            _rel_err(
                _fd_gradient(lambda a: wc.g_term(wc.layer_correlation(a)), w),
                wc.wcd_gradient(w),
            ),
            _rel_err(
                _fd_gradient(lambda a: wc.g_term(wc.layer_correlation(a)), t),
                wc.wcd_gradient(t),
            ),
        ]
        err = max(checks)
        if err > worst:
            worst = err
            failing = point
    return SuiteResult("gradients", worst, GRAD_TOL, failing)


def bracket_suite(seed=0):
    """Central-difference check of d g / d rho across shapes and rho."""
    worst = 0.0
    failing = None
    h = 1e-7
    for n_in in (1, 2, 3):
        for n_out in (2, 3, 5):
            for rho in (0.05, 0.2, 0.5, 0.8, 0.95):
                up = wc.g_term(wc.LayerCorrelation(rho + h, n_out, n_in))
                dn = wc.g_term(wc.LayerCorrelation(rho - h, n_out, n_in))
                bracket = wc.g_gradient_bracket(wc.LayerCorrelation(rho, n_out, n_in))
                err = abs((up - dn) / (2 * h) - bracket) / max(abs(bracket), 1.0)
                if err > worst:
                    worst = err
                    failing = (n_in, n_out, rho)
    return SuiteResult("g_bracket", worst, BRACKET_TOL, failing)


def _kl_oracle_error(corr, sigma_sq, rng):
    """Closed-form layer KL vs the general Gaussian KL, incl. a bias block."""
    k_w = corr.n_in * corr.n_out
    k_b = corr.n_out
    cov_w = wc.posterior_covariance(corr, sigma_sq)
    cov_q = np.zeros((k_w + k_b, k_w + k_b))
    cov_q[:k_w, :k_w] = cov_w
    cov_q[k_w:, k_w:] = sigma_sq * np.eye(k_b)
    mu_q = rng.standard_normal(k_w + k_b)
    mu_p = rng.standard_normal(k_w + k_b)
    oracle = linalg.gaussian_kl(mu_q, cov_q, mu_p, sigma_sq * np.eye(k_w + k_b))
    dist_sq = float(np.sum((mu_q - mu_p) ** 2))
    closed = wc.kl_closed_form(corr, dist_sq, sigma_sq).total
    return abs(closed - oracle) / max(abs(oracle), 1.0)


def kl_suite(seed=0):
    worst = 0.0
    failing = None
    rng = np.random.default_rng(np.random.SeedSequence([0x1c1, seed]))
    for n_in in (2, 3, 4):
        for n_out in (2, 3, 4):
            for rho in np.round(np.arange(0.0, 0.91, 0.1), 10):
                corr = wc.LayerCorrelation(float(rho), n_out, n_in)
                err = _kl_oracle_error(corr, sigma_sq=0.6, rng=rng)
                if err > worst:
                    worst = err
                    failing = (n_in, n_out, float(rho))
    return SuiteResult("kl_oracle", worst, KL_TOL, failing)


def determinant_suite():
    worst = 0.0
    failing = None
    sigma_sq = 1.7
    for n_in in (2, 3, 4):
        for n_out in (2, 3, 4):
            for rho in np.round(np.arange(0.0, 0.91, 0.1), 10):
                corr = wc.LayerCorrelation(float(rho), n_out, n_in)
                det = linalg.determinant(wc.posterior_covariance(corr, sigma_sq))
                closed = (
                    sigma_sq ** (n_in * n_out)
                    * (1.0 - rho) ** ((n_out - 1) * n_in)
                    * (1.0 + (n_out - 1) * rho) ** n_in
                )
                err = abs(det - closed) / abs(closed)
                if err > worst:
                    worst = err
                    failing = (n_in, n_out, float(rho))
    return SuiteResult("determinant_identity", worst, DET_TOL, failing)


def nn_gradient_suite(seed=0):
    """FD check of backprop through one net containing every layer kind."""
    specs = [
        nn.conv2d(3, 1, 2), nn.relu(), nn.maxpool2(),
        nn.conv2d(3, 2, 2), nn.tanh(), nn.flatten(),
        nn.dense(8, 3),
    ]
    params = nn.init_network(specs, (4, 4, 1), seed=seed, sigma_init=0.5)
    rng = np.random.default_rng(np.random.SeedSequence([0xBACC, seed]))
    x = rng.standard_normal((3, 4, 4, 1))
    y = np.array([0, 2, 1])
    _, (dw, db) = nn.loss_and_grad(params, x, y)
    worst = 0.0
    step = 1e-6
    for i in params.trainable_indices():
        for arrays, grads in ((params.weights, dw), (params.biases, db)):
            a = arrays[i]
            fd = np.zeros_like(a)
            it = np.nditer(a, flags=["multi_index"])
            for _ in it:
                idx = it.multi_index
                orig = a[idx]
                a[idx] = orig + step
                lp, _ = nn.loss_and_grad(params, x, y)
                a[idx] = orig - step
                lm, _ = nn.loss_and_grad(params, x, y)
                a[idx] = orig
                fd[idx] = (lp - lm) / (2 * step)
            worst = max(worst, _rel_err(fd, grads[i]))
    return SuiteResult("nn_gradients", worst, 1e-4, seed)


def run_all(seed=0):
    return [
        gradient_suite(seed=seed),
        bracket_suite(seed=seed),
        nn_gradient_suite(seed=seed),
        kl_suite(seed=seed),
        determinant_suite(),
    ]
