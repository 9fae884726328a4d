"""Weight correlation and its PAC-Bayes lift.

A dense layer's weight matrix has shape (n_in, n_out) with one column per
neuron; a convolution filter bank has shape (f, f, c_in, c_out). The
correlation rho is the average absolute cosine similarity between columns
(dense) or between per-channel columns of the reshaped filters (conv).

The log-determinant lift is

    g(rho) = -(n_out - 1) n_in ln(1 - rho) - n_in ln(1 + (n_out - 1) rho)

capped at G_CAP. The exact layer KL against an isotropic Gaussian prior is
the squared parameter displacement over 2 sigma^2 plus g/2; the published
closed form omits the factor 1/2 on the log term, but the halved value is
what agrees with the general Gaussian KL on the Kronecker-structured
posterior covariance (see tests).
"""

from dataclasses import dataclass

import numpy as np

from .linalg import COSINE_EPS, kronecker

G_CAP = 50000.0


class CorrelationUndefinedError(ValueError):
    """Raised when a layer has a single neuron/filter (n_out = 1)."""


@dataclass(frozen=True)
class LayerCorrelation:
    rho: float
    n_out: int
    n_in: int

    def __post_init__(self):
        if not 0.0 <= self.rho <= 1.0 + 1e-12:
            raise ValueError(f"rho={self.rho} outside [0, 1]")
        if self.n_out < 1 or self.n_in < 1:
            raise ValueError("layer sizes must be >= 1")


@dataclass(frozen=True)
class KlBreakdown:
    distance_term: float
    g_term: float

    @property
    def total(self):
        return self.distance_term + self.g_term


def _abs_cosine_gram(w):
    """|cos| between all column pairs; zero-norm columns contribute 0."""
    norms = np.linalg.norm(w, axis=0)
    safe = np.where(norms < COSINE_EPS, 1.0, norms)
    u = w / safe
    u[:, norms < COSINE_EPS] = 0.0
    gram = np.abs(u.T @ u)
    np.fill_diagonal(gram, 0.0)
    return gram


def wc_fcn(w):
    """Average |cosine similarity| over distinct column pairs of w."""
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 2:
        raise ValueError("dense weight matrix must be 2-D")
    n_out = w.shape[1]
    if n_out < 2:
        raise CorrelationUndefinedError("correlation undefined for n_out = 1")
    gram = _abs_cosine_gram(w)
    rho = float(gram.sum() / (n_out * (n_out - 1)))
    return min(rho, 1.0)


def _check_filter_tensor(w):
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 4 or w.shape[0] != w.shape[1]:
        raise ValueError("filter tensor must have shape (f, f, c_in, c_out)")
    return w


def _channel_matrices(w):
    """Yield the (f^2, c_out) matrix of each input channel."""
    f, _, c_in, c_out = w.shape
    flat = w.reshape(f * f, c_in, c_out)
    for z in range(c_in):
        yield flat[:, z, :]


def wc_cnn(w):
    """Channel-averaged column correlation of the reshaped filter bank."""
    w = _check_filter_tensor(w)
    c_in, c_out = w.shape[2], w.shape[3]
    if c_out < 2:
        raise CorrelationUndefinedError("correlation undefined for c_out = 1")
    rho = sum(wc_fcn(wz) for wz in _channel_matrices(w)) / c_in
    return min(rho, 1.0)


def layer_correlation(w):
    """LayerCorrelation for a dense matrix or a filter tensor."""
    w = np.asarray(w, dtype=np.float64)
    if w.ndim == 2:
        return LayerCorrelation(wc_fcn(w), n_out=w.shape[1], n_in=w.shape[0])
    if w.ndim == 4:
        return LayerCorrelation(wc_cnn(w), n_out=w.shape[3], n_in=w.shape[2])
    raise ValueError(f"unsupported weight array of ndim {w.ndim}")


def g_term(corr, cap=G_CAP):
    """The capped log-determinant lift g(rho); 0 at rho=0, cap at rho=1."""
    if cap <= 0:
        raise ValueError("cap must be positive")
    rho, n_out, n_in = corr.rho, corr.n_out, corr.n_in
    if n_out == 1 or rho == 0.0:
        return 0.0
    if rho >= 1.0:
        return cap
    value = -(n_out - 1) * n_in * np.log1p(-rho) - n_in * np.log1p((n_out - 1) * rho)
    return float(min(value, cap))


def g_gradient_bracket(corr):
    """d g / d rho; strictly positive on (0, 1), zero at rho = 0."""
    rho, n_out, n_in = corr.rho, corr.n_out, corr.n_in
    if n_out < 2:
        raise CorrelationUndefinedError("bracket undefined for n_out = 1")
    if rho >= 1.0:
        raise ValueError("bracket diverges at rho = 1")
    c = n_in * (n_out - 1)
    return float(c / (1.0 - rho) - c / (1.0 + (n_out - 1) * rho))


def posterior_covariance(corr, sigma_sq):
    """Kronecker-structured posterior covariance for one layer's weights.

    (n_out x n_out equicorrelation matrix) kron (sigma^2 I_{n_in});
    positive definite for rho in [0, 1).
    """
    if sigma_sq <= 0:
        raise ValueError("sigma_sq must be positive")
    if corr.rho >= 1.0:
        raise ValueError("rho = 1 gives a singular covariance")
    sigma_rho = np.full((corr.n_out, corr.n_out), corr.rho)
    np.fill_diagonal(sigma_rho, 1.0)
    return kronecker(sigma_rho, sigma_sq * np.eye(corr.n_in))


def kl_closed_form(corr, dist_sq, sigma_sq, cap=G_CAP):
    """Closed-form layer KL from the correlation and squared displacement.

    distance term dist_sq / (2 sigma^2) plus half the capped lift g(rho);
    the half is the exact log-determinant contribution of the Kronecker
    posterior covariance against the isotropic prior.
    """
    if sigma_sq <= 0:
        raise ValueError("sigma_sq must be positive")
    g_half = 0.5 * g_term(corr, cap) if corr is not None and corr.n_out > 1 else 0.0
    return KlBreakdown(distance_term=dist_sq / (2.0 * sigma_sq), g_term=g_half)


def kl_layer(theta_f, theta_0, sigma_sq, cap=G_CAP):
    """Exact layer KL between the correlated posterior and isotropic prior.

    theta_f / theta_0 are (weights, bias) pairs; bias may be None. The
    correlation is always taken from the final weights, the snapshot only
    enters the displacement.
    """
    if sigma_sq <= 0:
        raise ValueError("sigma_sq must be positive")
    w_f, b_f = theta_f
    w_0, b_0 = theta_0
    w_f = np.asarray(w_f, dtype=np.float64)
    w_0 = np.asarray(w_0, dtype=np.float64)
    if w_f.shape != w_0.shape:
        raise ValueError(f"weight shapes differ: {w_f.shape} vs {w_0.shape}")
    dist_sq = float(np.sum((w_f - w_0) ** 2))
    if b_f is not None:
        b_f = np.asarray(b_f, dtype=np.float64)
        b_0 = np.asarray(b_0, dtype=np.float64)
        if b_f.shape != b_0.shape:
            raise ValueError(f"bias shapes differ: {b_f.shape} vs {b_0.shape}")
        dist_sq += float(np.sum((b_f - b_0) ** 2))
    corr = layer_correlation(w_f) if _multi_neuron(w_f) else None
    return kl_closed_form(corr, dist_sq, sigma_sq, cap)


def _multi_neuron(w):
    return (w.ndim == 2 and w.shape[1] >= 2) or (w.ndim == 4 and w.shape[3] >= 2)


def kl_network(layers):
    return float(sum(b.total for b in layers))


def rho_gradient_fcn(w):
    """Exact gradient of wc_fcn with respect to every weight entry.

    sign(0) = 0, so exactly-orthogonal column pairs contribute nothing;
    zero-norm columns are skipped entirely.
    """
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 2:
        raise ValueError("dense weight matrix must be 2-D")
    n_out = w.shape[1]
    if n_out < 2:
        raise CorrelationUndefinedError("gradient undefined for n_out = 1")
    norms = np.linalg.norm(w, axis=0)
    alive = norms >= COSINE_EPS
    safe = np.where(alive, norms, 1.0)
    u = w / safe
    u[:, ~alive] = 0.0
    gram = u.T @ u                      # cos_jq for live pairs
    sign = np.sign(gram)
    np.fill_diagonal(sign, 0.0)
    abscos = np.abs(gram)
    np.fill_diagonal(abscos, 0.0)
    # d|cos_jq|/dw_{ij} = sign_jq (w_{iq}/(m_j m_q) - w_{ij} cos_jq / m_j^2);
    # sign_jq cos_jq = |cos_jq|, and each unordered pair appears twice in
    # the double sum, hence the 2.
    term1 = (u @ sign) / safe[None, :]
    term2 = u / safe[None, :] * abscos.sum(axis=0)[None, :]
    grad = (2.0 / (n_out * (n_out - 1))) * (term1 - term2)
    grad[:, ~alive] = 0.0
    return grad


def rho_gradient_cnn(w):
    """Exact gradient of wc_cnn, assembled channel by channel."""
    w = _check_filter_tensor(w)
    f, _, c_in, c_out = w.shape
    if c_out < 2:
        raise CorrelationUndefinedError("gradient undefined for c_out = 1")
    grad = np.empty((f * f, c_in, c_out))
    flat = w.reshape(f * f, c_in, c_out)
    for z in range(c_in):
        grad[:, z, :] = rho_gradient_fcn(flat[:, z, :]) / c_in
    return grad.reshape(w.shape)


def wcd_gradient(w, cap=G_CAP):
    """Gradient of g(rho(w)) with respect to w; zero where g is capped."""
    w = np.asarray(w, dtype=np.float64)
    corr = layer_correlation(w)
    if g_term(corr, cap) >= cap:
        return np.zeros_like(w)
    bracket = g_gradient_bracket(corr)
    if w.ndim == 2:
        return bracket * rho_gradient_fcn(w)
    return bracket * rho_gradient_cnn(w)
