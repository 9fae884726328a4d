"""Weight-correlation complexity measures, ranking, and WCD training."""

from importlib import resources

from .estimator import WCDClassifier
from .measures import (
    MeasureConfig,
    MeasureReport,
    compute_measures,
    filter_heatmap,
    generalisation_error,
    kendall_tau,
    pac_bayes_bound,
)
from .train import TrainConfig, TrainReport, mean_wc
from .wc import (
    G_CAP,
    KlBreakdown,
    LayerCorrelation,
    g_gradient_bracket,
    g_term,
    kl_layer,
    kl_network,
    posterior_covariance,
    rho_gradient_cnn,
    rho_gradient_fcn,
    wc_cnn,
    wc_fcn,
    wcd_gradient,
)

__version__ = "0.1.0"


def fixture_path(name):
    """Path to a shipped fixture CSV, e.g. 'cifar10_measures.csv'."""
    return resources.files("wcgen").joinpath("fixtures", name)


__all__ = [
    "WCDClassifier", "MeasureConfig", "MeasureReport", "compute_measures",
    "filter_heatmap", "generalisation_error", "kendall_tau",
    "pac_bayes_bound", "TrainConfig", "TrainReport", "mean_wc", "G_CAP",
    "KlBreakdown", "LayerCorrelation", "g_gradient_bracket", "g_term",
    "kl_layer", "kl_network", "posterior_covariance", "rho_gradient_cnn",
    "rho_gradient_fcn", "wc_cnn", "wc_fcn", "wcd_gradient", "fixture_path",
]
