"""Observed-versus-predicted comparison: K-S tests, ensemble summaries, reports.

Point predictions answer "what does the model say this network looks like";
the functions here answer "how far is that from the network we saw".  Node
statistics are compared with two-sample Kolmogorov-Smirnov tests, ensemble
spread turns into 95% confidence intervals, and closed-form variances of
average node strength are available for the three estimator families as an
independent check on the Monte Carlo machinery.

Everything is pure computation over immutable inputs; replication order is
fixed, so reports are deterministic given the inputs and the ensemble seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import kolmogorov, ndtri

from .errors import ValidationError
from .netstats import (
    TradeNetwork,
    all_statistics,
    compute_statistic,
    density,
    population_average,
    stat_correlation,
)
from .prediction import NetworkEnsemble, PredictedWeights

REPORT_VERSION = "1"

# default report grid: the total-direction variants of the six
# statistic families shown in the comparison tables
REPORT_KINDS = ("ND_tot", "ANND_tot", "BCC_tot", "NS_tot", "ANNS_tot", "WCC_tot")

# degree/strength against partner averages and clustering; the four
# economically interesting pairings tracked in the figures
CORRELATION_PAIRS = (
    ("NS_tot", "ANNS_tot"),
    ("NS_tot", "WCC_tot"),
    ("ND_tot", "ANND_tot"),
    ("ND_tot", "BCC_tot"),
)

_Z975 = float(ndtri(0.975))


@dataclass(frozen=True)
class KsResult:
    """Two-sample Kolmogorov-Smirnov outcome."""

    d_statistic: float
    p_value: float
    n1: int
    n2: int


@dataclass(frozen=True)
class EnsembleSummary:
    """Across-replication location and spread of one network statistic.

    ``ci_low``/``ci_high`` are empirical 2.5/97.5 percentiles; the normal
    bounds ``mean +- 1.96 sd`` are emitted alongside since both appear in
    reporting.  ``m`` counts the replications actually summarised after
    dropping those where the statistic was undefined for every node.
    """

    kind: str
    mean: float
    sd: float
    ci_low: float
    ci_high: float
    normal_low: float
    normal_high: float
    m: int
    n_dropped: int = 0


@dataclass(frozen=True)
class StatComparison:
    """One (model, statistic) cell of the report grid."""

    model_tag: str
    kind: str
    observed_avg: float
    predicted_avg: float
    summary: EnsembleSummary | None
    ks: KsResult


@dataclass(frozen=True)
class CorrelationComparison:
    """Observed and predicted correlation between two node statistics."""

    model_tag: str
    kind_x: str
    kind_y: str
    observed_r: float
    predicted_r: float


@dataclass(frozen=True)
class ModelPrediction:
    """One model's predictions, packaged for report assembly.

    ``network`` is the point-prediction network (predicted weights, or an
    observed-mask network for the log-linear model).  ``transform`` is the
    weight transform under which this model's weighted statistics are
    computed; log-linear predictions already live on the log scale and use
    the identity.
    """

    model_tag: str
    network: TradeNetwork
    ensemble: NetworkEnsemble | None = None
    transform: str = "identity"


@dataclass(frozen=True)
class ComparisonReport:
    year: int | None
    country_ids: tuple[str, ...]
    statistics: tuple[StatComparison, ...]
    correlations: tuple[CorrelationComparison, ...]
    report_version: str = REPORT_VERSION


def ks_two_sample(x, y) -> KsResult:
    """Exact two-sample K-S statistic with asymptotic p-value.

    The statistic is the supremum of the ECDF difference, attained at one
    of the pooled sample points, so evaluating there is exact.  The
    p-value uses the asymptotic Kolmogorov distribution at effective
    sample size ``n1 n2 / (n1 + n2)``.

    Parameters
    ----------
    x, y : array_like
        One-dimensional samples, at least one point each.

    Returns
    -------
    KsResult
    """
    x = np.sort(np.asarray(x, dtype=float).ravel())
    y = np.sort(np.asarray(y, dtype=float).ravel())
    n1, n2 = x.size, y.size
    if n1 == 0 or n2 == 0:
        raise ValidationError("K-S test requires non-empty samples")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValidationError("K-S test requires finite sample values")
    pooled = np.concatenate([x, y])
    cdf1 = np.searchsorted(x, pooled, side="right") / n1
    cdf2 = np.searchsorted(y, pooled, side="right") / n2
    d = float(np.abs(cdf1 - cdf2).max())
    ne = n1 * n2 / (n1 + n2)
    p = float(kolmogorov(np.sqrt(ne) * d))
    return KsResult(d, min(max(p, 0.0), 1.0), n1, n2)


def _replication_network(ens: NetworkEnsemble, r: int) -> TradeNetwork:
    w = np.asarray(ens.replications[r], dtype=float)
    if ens.mask is not None:
        # log-scale draws: support is the stored mask, weights may be negative
        return TradeNetwork(w, adjacency=np.asarray(ens.mask))
    return TradeNetwork(w)


def ensemble_summary(
    ens: NetworkEnsemble, kind: str, transform: str = "identity"
) -> EnsembleSummary:
    """Summarise one statistic's population average across replications.

    For node statistics the per-replication value is the average over
    nodes where the statistic is defined; replications where it is
    defined nowhere are dropped (and counted).  ``kind="density"``
    summarises the scalar density instead.

    Raises
    ------
    ValidationError
        If fewer than two replications exist, or the statistic is
        undefined in every replication.
    """
    if ens.m < 2:
        raise ValidationError(f"need at least 2 replications, got {ens.m}")
    values = []
    dropped = 0
    for r in range(ens.m):
        net = _replication_network(ens, r)
        if kind == "density":
            values.append(density(net))
            continue
        try:
            avg, _ = population_average(compute_statistic(net, kind, transform))
        except ValidationError:
            dropped += 1
            continue
        values.append(avg)
    if not values:
        raise ValidationError(f"{kind}: undefined in every replication")
    arr = np.asarray(values)
    if arr.min() == arr.max():
        # degenerate ensemble: report the exact value, not summation noise
        v = float(arr[0])
        return EnsembleSummary(kind, v, 0.0, v, v, v, v, arr.size, dropped)
    mean = float(arr.mean())
    sd = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    lo, hi = (float(q) for q in np.percentile(arr, [2.5, 97.5]))
    return EnsembleSummary(
        kind=kind,
        mean=mean,
        sd=sd,
        ci_low=lo,
        ci_high=hi,
        normal_low=mean - _Z975 * sd,
        normal_high=mean + _Z975 * sd,
        m=arr.size,
        n_dropped=dropped,
    )


def analytical_var_avg_ns(pred: PredictedWeights, kind: str = "out") -> float:
    """Closed-form variance of the average node strength.

    The average out-strength is the total predicted weight over the node
    count, so its variance is the sum of per-dyad variances over the
    squared node count.  Each estimator family admits a closed form:

    * Poisson: variance equals the mean, giving ``avg NS / N``.
    * Zero-inflated: ``sum of mu (1 - psi) (1 + mu psi) / N^2``.
    * Log-linear: a constant residual variance on ``L`` observed dyads,
      giving ``rho sigma^2 (N - 1) / N`` at density ``rho``.

    In- and out-strengths share a grand total, so both directions have
    the same variance; ``kind`` is validated for interface completeness.
    """
    if kind not in ("in", "out"):
        raise ValidationError(f"average strength direction must be in or out, got {kind!r}")
    n = pred.n
    if n < 2:
        raise ValidationError("need at least two countries")
    if pred.model_tag == "PPML":
        avg_ns = float(pred.value.sum()) / n
        return avg_ns / n
    if pred.model_tag == "ZIP":
        return float(pred.variance.sum()) / (n * n)
    if pred.model_tag == "OLS":
        links = int(pred.mask.sum())
        rho = links / (n * (n - 1))
        if links == 0:
            return 0.0
        sigma2 = float(pred.variance[np.asarray(pred.mask) == 1][0])
        return rho * sigma2 * (n - 1) / n
    raise ValidationError(f"no closed-form variance for model {pred.model_tag}")


def _aligned_ids(observed_ids, mp: ModelPrediction) -> None:
    ids = set(observed_ids)
    if mp.ensemble is not None:
        other = set(mp.ensemble.country_ids)
        if other != ids:
            missing = sorted(ids - other)
            extra = sorted(other - ids)
            raise ValidationError(
                f"{mp.model_tag}: ensemble countries differ from observed "
                f"(missing {missing}, unexpected {extra})"
            )
    if mp.network.n != len(observed_ids):
        raise ValidationError(
            f"{mp.model_tag}: predicted network has {mp.network.n} countries, "
            f"observed has {len(observed_ids)}"
        )


def _correlation_or_nan(stats: dict, kx: str, ky: str) -> float:
    try:
        return stat_correlation(stats[kx], stats[ky])
    except ValidationError:
        return float("nan")


def build_comparison_report(
    observed: TradeNetwork,
    observed_ids: tuple[str, ...],
    predictions: dict[str, ModelPrediction],
    year: int | None = None,
    kinds: tuple[str, ...] = REPORT_KINDS,
    observed_transform: str = "log_positive",
    all_pairs: bool = False,
) -> ComparisonReport:
    """Assemble the statistic-by-model comparison grid.

    For every model and statistic kind: the observed population average,
    the same average on the model's point-prediction network, a K-S test
    between the observed and predicted node sequences (restricted to
    nodes where each is defined), and the ensemble confidence interval
    when an ensemble is supplied.  Correlations between paired statistics
    are reported for the observed network and each predicted network.

    ``observed_transform`` applies to the observed network's weighted
    statistics; each model brings its own transform.  Pass
    ``all_pairs=True`` to expand correlations from the default four pairs
    to every ordered pair of reported kinds.
    """
    if observed.n != len(observed_ids):
        raise ValidationError(
            f"observed network has {observed.n} nodes but {len(observed_ids)} ids"
        )
    if not predictions:
        raise ValidationError("no model predictions supplied")
    for mp in predictions.values():
        _aligned_ids(observed_ids, mp)

    pairs = (
        tuple((a, b) for a in kinds for b in kinds if a < b)
        if all_pairs
        else CORRELATION_PAIRS
    )
    pair_kinds = sorted({k for p in pairs for k in p} | set(kinds))

    obs_stats = all_statistics(observed, pair_kinds, observed_transform)

    stat_rows = []
    corr_rows = []
    for tag in sorted(predictions):
        mp = predictions[tag]
        pred_stats = all_statistics(mp.network, pair_kinds, mp.transform)
        for kind in kinds:
            obs_vec = obs_stats[kind]
            pred_vec = pred_stats[kind]
            obs_avg, _ = population_average(obs_vec)
            pred_avg, _ = population_average(pred_vec)
            ks = ks_two_sample(
                obs_vec.values[obs_vec.defined], pred_vec.values[pred_vec.defined]
            )
            summary = None
            if mp.ensemble is not None:
                summary = ensemble_summary(mp.ensemble, kind, mp.transform)
            stat_rows.append(
                StatComparison(tag, kind, obs_avg, pred_avg, summary, ks)
            )
        for kx, ky in pairs:
            corr_rows.append(
                CorrelationComparison(
                    tag,
                    kx,
                    ky,
                    _correlation_or_nan(obs_stats, kx, ky),
                    _correlation_or_nan(pred_stats, kx, ky),
                )
            )
    return ComparisonReport(
        year=year,
        country_ids=tuple(observed_ids),
        statistics=tuple(stat_rows),
        correlations=tuple(corr_rows),
    )


def report_as_dict(report: ComparisonReport) -> dict:
    """JSON-ready view of a report."""
    return {
        "report_version": report.report_version,
        "year": report.year,
        "n_countries": len(report.country_ids),
        "statistics": [
            {
                "model": s.model_tag,
                "kind": s.kind,
                "observed_avg": s.observed_avg,
                "predicted_avg": s.predicted_avg,
                "ks_d": s.ks.d_statistic,
                "ks_p": s.ks.p_value,
                "ks_n_observed": s.ks.n1,
                "ks_n_predicted": s.ks.n2,
                "ensemble": None
                if s.summary is None
                else {
                    "mean": s.summary.mean,
                    "sd": s.summary.sd,
                    "ci_low": s.summary.ci_low,
                    "ci_high": s.summary.ci_high,
                    "normal_low": s.summary.normal_low,
                    "normal_high": s.summary.normal_high,
                    "m": s.summary.m,
                    "n_dropped": s.summary.n_dropped,
                },
            }
            for s in report.statistics
        ],
        "correlations": [
            {
                "model": c.model_tag,
                "x": c.kind_x,
                "y": c.kind_y,
                "observed_r": c.observed_r,
                "predicted_r": c.predicted_r,
            }
            for c in report.correlations
        ],
    }


def ks_rows(report: ComparisonReport) -> list[dict]:
    """Rows for the K-S grid CSV: statistic by model, D and p."""
    return [
        {
            "year": report.year,
            "model": s.model_tag,
            "kind": s.kind,
            "d_statistic": s.ks.d_statistic,
            "p_value": s.ks.p_value,
            "n_observed": s.ks.n1,
            "n_predicted": s.ks.n2,
        }
        for s in report.statistics
    ]


def averages_rows(report: ComparisonReport) -> list[dict]:
    """Rows for the averages CSV: observed and predicted with bands."""
    rows = []
    for s in report.statistics:
        row = {
            "year": report.year,
            "model": s.model_tag,
            "kind": s.kind,
            "observed": s.observed_avg,
            "predicted": s.predicted_avg,
            "ci_low": "",
            "ci_high": "",
            "ensemble_mean": "",
        }
        if s.summary is not None:
            row["ci_low"] = s.summary.ci_low
            row["ci_high"] = s.summary.ci_high
            row["ensemble_mean"] = s.summary.mean
        rows.append(row)
    return rows


def correlations_rows(report: ComparisonReport) -> list[dict]:
    """Rows for the correlations CSV in figure-ready long format."""
    return [
        {
            "year": report.year,
            "model": c.model_tag,
            "x": c.kind_x,
            "y": c.kind_y,
            "observed_r": c.observed_r,
            "predicted_r": c.predicted_r,
        }
        for c in report.correlations
    ]
