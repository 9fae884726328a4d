"""Complexity-measure battery, PAC-Bayes bound value, and Kendall's tau.

Per-layer norms for convolution layers are taken on the filter bank
reshaped to (f^2 * c_in, c_out), the same column structure the correlation
uses. Norm products are accumulated in log space because realistic values
overflow a double.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import linalg, wc


@dataclass(frozen=True)
class MeasureConfig:
    sigma_sq_rule: object = "one_over_L"   # "one_over_L" or a positive float
    g_cap: float = wc.G_CAP

    def sigma_sq(self, num_layers):
        if self.sigma_sq_rule == "one_over_L":
            return 1.0 / num_layers
        value = float(self.sigma_sq_rule)
        if value <= 0:
            raise ValueError("sigma_sq must be positive")
        return value


@dataclass
class MeasureReport:
    pfn: float
    psn: float
    nop: int
    sosp: float
    wc: float
    pb: float
    pbc: float
    ge: float = None

    COLUMNS = ("ge", "pfn", "psn", "nop", "sosp", "wc", "pb", "pbc")

    def row(self):
        return [getattr(self, c) for c in self.COLUMNS]


def _as_layer_matrix(w):
    if w.ndim == 4:
        f, _, c_in, c_out = w.shape
        return w.reshape(f * f * c_in, c_out)
    return w


def compute_measures(ckpt, cfg=MeasureConfig()):
    """All Table-style measures for one (theta0, thetaF) checkpoint."""
    layers = ckpt.trainable_layers()
    if not layers:
        raise ValueError("checkpoint has no trainable layers")
    num_layers = len(layers)
    log_pfn = 0.0
    log_psn = 0.0
    nop = 0
    spectral_disp_sum = 0.0
    dist_sqs = []
    gs = []
    rhos = []
    for layer in layers:
        w0, b0, wf, bf = layer.w0, layer.b0, layer.wf, layer.bf
        if w0.shape != wf.shape or b0.shape != bf.shape:
            raise ValueError(f"snapshot shapes differ in layer {layer.index}")
        mat_f = _as_layer_matrix(wf)
        mat_d = _as_layer_matrix(wf - w0)
        with np.errstate(divide="ignore"):
            log_pfn += np.log(linalg.frobenius_norm(mat_f))
            log_psn += np.log(linalg.spectral_norm(mat_f))
        spectral_disp_sum += linalg.spectral_norm(mat_d)
        nop += wf.size + bf.size
        dist_sqs.append(float(np.sum((wf - w0) ** 2) + np.sum((bf - b0) ** 2)))
        corr = wc.layer_correlation(wf) if _multi(wf) else None
        gs.append(wc.g_term(corr, cfg.g_cap) if corr is not None else 0.0)
        if corr is not None:
            rhos.append(corr.rho)
    sigma_sq = cfg.sigma_sq(num_layers)
    if cfg.sigma_sq_rule == "one_over_L":
        # 1/L variance folded into the sum: sum(d^2/2 + g/L)
        pb = sum(d / 2.0 for d in dist_sqs)
        pbc = pb + sum(g / num_layers for g in gs)
    else:
        pb = sum(d / (2.0 * sigma_sq) for d in dist_sqs)
        pbc = pb + sum(gs)
    return MeasureReport(
        pfn=float(np.exp(log_pfn)),
        psn=float(np.exp(log_psn)),
        nop=int(nop),
        sosp=float(nop * spectral_disp_sum),
        wc=float(np.mean(rhos)) if rhos else 0.0,
        pb=float(pb),
        pbc=float(pbc),
    )


def _multi(w):
    return (w.ndim == 2 and w.shape[1] >= 2) or (w.ndim == 4 and w.shape[3] >= 2)


def generalisation_error(test_loss, train_loss):
    if not (math.isfinite(test_loss) and math.isfinite(train_loss)):
        raise ValueError("losses must be finite")
    return test_loss - train_loss


def kendall_tau(xs, ys):
    """(tau, concordant, discordant); ties count as neither."""
    if len(xs) != len(ys):
        raise ValueError("lists must have equal length")
    n = len(xs)
    if n < 2:
        raise ValueError("need at least two points")
    concordant = discordant = 0
    for i in range(n):
        for j in range(i + 1, n):
            p = (xs[i] - xs[j]) * (ys[i] - ys[j])
            if p > 0:
                concordant += 1
            elif p < 0:
                discordant += 1
    tau = (concordant - discordant) / (n * (n - 1) / 2)
    return tau, concordant, discordant


@dataclass
class RankingRow:
    name: str
    tau: float
    concordant: int
    discordant: int


def rank_measures(columns, ge):
    """Kendall's tau of every measure column against the GE column."""
    return [
        RankingRow(name, *kendall_tau(values, ge))
        for name, values in columns.items()
    ]


def pac_bayes_bound(kl, m, delta, empirical_loss):
    """High-probability bound: emp + sqrt((kl + ln(m/delta)) / (2(m-1)))."""
    if m < 2:
        raise ValueError("m must be >= 2")
    if not 0 < delta <= 1:
        raise ValueError("delta must be in (0, 1]")
    if kl < 0:
        raise ValueError("kl must be >= 0")
    return empirical_loss + math.sqrt((kl + math.log(m / delta)) / (2 * (m - 1)))


def filter_heatmap(w):
    """Pairwise channel-averaged |cosine| between filters; diagonal 1.

    The off-diagonal mean equals wc_cnn of the same tensor.
    """
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 4 or w.shape[0] != w.shape[1]:
        raise ValueError("filter tensor must have shape (f, f, c_in, c_out)")
    f, _, c_in, c_out = w.shape
    if c_out < 2:
        raise wc.CorrelationUndefinedError("heatmap undefined for a single filter")
    flat = w.reshape(f * f, c_in, c_out)
    heat = np.zeros((c_out, c_out))
    for z in range(c_in):
        heat += wc._abs_cosine_gram(flat[:, z, :].copy())
    heat /= c_in
    np.fill_diagonal(heat, 1.0)
    return heat


def per_filter_means(heatmap):
    """Mean off-diagonal correlation per filter (the heatmap row means)."""
    n = heatmap.shape[0]
    off = heatmap.sum(axis=1) - np.diag(heatmap)
    return off / (n - 1)
