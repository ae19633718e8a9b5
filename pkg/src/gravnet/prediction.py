"""Predicted trade matrices, link probabilities, and sampled network ensembles.

Fitted coefficients are turned back into matrix-shaped objects here.  Three
prediction flavours exist, one per estimator family:

* OLS predicts conditional log flows and is only defined on the dyads the
  regression saw, so its mask is the observed positive-flow adjacency.
* Poisson PML predicts expected levels ``exp(x'g)`` for every ordered pair.
* The zero-inflated model predicts ``(1 - psi) * mu``, the unconditional
  mean that mixes the extra-zero stage with the count stage.

Link probabilities come from a logit stage fitted on the zero-flow
indicator, so the probability that a directed link exists is one minus the
fitted zero probability.  Binary predictions derive from those
probabilities either through a fixed threshold, by matching the observed
density, or by minimising the Manhattan distance to an observed adjacency.

Ensembles are sampled with counter-based RNG substreams: replication ``r``
of an ensemble seeded with ``seed`` always uses
``Generator(Philox(key=[seed, r]))``, so any single replication can be
reproduced without generating its predecessors and results are identical
under any parallel execution order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .errors import PredictionOverflowError, SchemaError, ValidationError
from .estimation import FitResult, ZipFitResult
from .panel import DesignMatrix

# exp() overflows IEEE doubles just above 709; anything beyond this is a
# modelling failure we want reported with the offending dyad, not an inf
# silently propagating into ensembles.
MAX_LOG_PREDICTION = 700.0

DEFAULT_REPLICATIONS = 10_000


@dataclass(frozen=True)
class PredictedWeights:
    """Matrix of point predictions with per-entry variances.

    ``value`` holds predicted log flows for OLS and predicted levels for
    the count models; ``variance`` is the matching per-entry variance.
    Entries outside ``mask`` are zero and carry no meaning.
    """

    model_tag: str
    country_ids: tuple[str, ...]
    value: np.ndarray
    variance: np.ndarray
    mask: np.ndarray

    def __post_init__(self) -> None:
        for name in ("value", "variance", "mask"):
            arr = getattr(self, name)
            object.__setattr__(self, name, np.asarray(arr))
            getattr(self, name).setflags(write=False)

    @property
    def n(self) -> int:
        return len(self.country_ids)


@dataclass(frozen=True)
class LinkProbabilityMatrix:
    """Directed link probabilities, zero on the diagonal."""

    country_ids: tuple[str, ...]
    xi: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "xi", np.asarray(self.xi, dtype=float))
        self.xi.setflags(write=False)

    @property
    def n(self) -> int:
        return len(self.country_ids)


@dataclass(frozen=True)
class BinaryPrediction:
    """A thresholded adjacency matrix plus how it was obtained."""

    adjacency: np.ndarray
    threshold: float
    realized_density: float
    manhattan_distance: int | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "adjacency", np.asarray(self.adjacency, dtype=np.int8))
        self.adjacency.setflags(write=False)


@dataclass(frozen=True)
class NetworkEnsemble:
    """Stack of sampled network matrices.

    ``replications`` has shape (m, n, n).  Binary ensembles store 0/1
    entries; weighted ensembles store levels, except for the OLS model
    whose draws live on the log scale and may be negative, in which case
    ``mask`` records where draws are defined.
    """

    model_tag: str
    country_ids: tuple[str, ...]
    replications: np.ndarray
    seed: int
    mask: np.ndarray | None = field(default=None)

    def __post_init__(self) -> None:
        object.__setattr__(self, "replications", np.asarray(self.replications))
        self.replications.setflags(write=False)
        if self.mask is not None:
            object.__setattr__(self, "mask", np.asarray(self.mask))
            self.mask.setflags(write=False)

    @property
    def m(self) -> int:
        return int(self.replications.shape[0])

    @property
    def n(self) -> int:
        return len(self.country_ids)


def _layout(dm: DesignMatrix, country_ids: tuple[str, ...] | None):
    """Map design-matrix rows onto positions in an n-by-n grid."""
    if country_ids is None:
        ids = tuple(sorted({c for pair in dm.rows for c in pair}))
    else:
        ids = tuple(country_ids)
    index = {c: k for k, c in enumerate(ids)}
    if len(index) != len(ids):
        raise ValidationError("country identifiers are not unique")
    try:
        src = np.array([index[e] for e, _ in dm.rows])
        dst = np.array([index[i] for _, i in dm.rows])
    except KeyError as exc:
        raise SchemaError(f"design row references unknown country {exc.args[0]!r}") from None
    return ids, src, dst


def _require_full_grid(dm: DesignMatrix, ids: tuple[str, ...]) -> None:
    n = len(ids)
    if dm.n_obs != n * (n - 1):
        raise ValidationError(
            f"expected one design row per ordered pair ({n * (n - 1)}), got {dm.n_obs}"
        )


def _check_fit_against(dm: DesignMatrix, fit: FitResult, want_tag: str) -> None:
    if fit.model_tag != want_tag:
        raise ValidationError(f"expected a {want_tag} fit, got {fit.model_tag}")
    if tuple(fit.names) != tuple(dm.columns):
        raise SchemaError(
            "fit and design matrix disagree on covariates: "
            f"{list(fit.names)} vs {list(dm.columns)}"
        )


def _linear_predictor(dm: DesignMatrix, fit: FitResult) -> np.ndarray:
    return dm.X @ fit.coefficients


def _guard_overflow(eta: np.ndarray, dm: DesignMatrix, stage: str) -> None:
    too_big = eta > MAX_LOG_PREDICTION
    if np.any(too_big):
        k = int(np.argmax(too_big))
        exporter, importer = dm.rows[k]
        raise PredictionOverflowError(
            f"{stage} linear predictor {eta[k]:.1f} for dyad "
            f"({exporter}, {importer}) overflows exp()"
        )


def predict_ols(
    fit: FitResult,
    dm: DesignMatrix,
    country_ids: tuple[str, ...] | None = None,
) -> PredictedWeights:
    """Predict log flows on the observed positive dyads.

    The log-linear model is silent about zero flows, so the prediction
    mask is exactly the set of dyads the regression was fitted on and
    ``value`` holds predicted logs, not levels.  The variance is the
    estimated residual variance, identical for every masked entry.

    Parameters
    ----------
    fit : FitResult
        An OLS fit whose covariate names match ``dm.columns``.
    dm : DesignMatrix
        The positive-flow design matrix the model was fitted on.
    country_ids : tuple of str, optional
        Grid layout.  Defaults to the countries appearing in ``dm.rows``;
        pass the full cross-section ordering to embed the prediction in
        the complete network.

    Returns
    -------
    PredictedWeights
    """
    _check_fit_against(dm, fit, "OLS")
    if fit.sigma2 is None:
        raise ValidationError("OLS fit carries no residual variance")
    if not np.all(dm.y > 0):
        raise ValidationError("OLS predictions require a positive-flow design matrix")
    ids, src, dst = _layout(dm, country_ids)
    n = len(ids)
    eta = _linear_predictor(dm, fit)
    value = np.zeros((n, n))
    variance = np.zeros((n, n))
    mask = np.zeros((n, n), dtype=np.int8)
    value[src, dst] = eta
    variance[src, dst] = fit.sigma2
    mask[src, dst] = 1
    return PredictedWeights("OLS", ids, value, variance, mask)


def predict_ppml(
    fit: FitResult,
    dm: DesignMatrix,
    country_ids: tuple[str, ...] | None = None,
) -> PredictedWeights:
    """Predict expected flow levels ``exp(x'g)`` for every ordered pair.

    Under the Poisson specification the conditional variance equals the
    conditional mean, so ``variance`` is a copy of ``value``.

    Raises
    ------
    PredictionOverflowError
        If any linear predictor exceeds the exponentiation limit; the
        message names the first offending dyad.
    """
    _check_fit_against(dm, fit, "PPML")
    ids, src, dst = _layout(dm, country_ids)
    _require_full_grid(dm, ids)
    n = len(ids)
    eta = _linear_predictor(dm, fit)
    _guard_overflow(eta, dm, "count")
    value = np.zeros((n, n))
    value[src, dst] = np.exp(eta)
    mask = np.ones((n, n), dtype=np.int8)
    np.fill_diagonal(mask, 0)
    return PredictedWeights("PPML", ids, value, value.copy(), mask)


def predict_zip(
    zip_fit: ZipFitResult,
    dm: DesignMatrix,
    country_ids: tuple[str, ...] | None = None,
) -> PredictedWeights:
    """Predict unconditional means ``(1 - psi) * mu`` under zero inflation.

    ``psi`` is the fitted probability of a structural zero and ``mu`` the
    count-stage mean.  The per-entry variance is
    ``mu * (1 - psi) * (1 + mu * psi)``, the variance of the zero-inflated
    Poisson mixture.
    """
    _check_fit_against(dm, zip_fit.logit_part, "ZIP_LOGIT")
    _check_fit_against(dm, zip_fit.poisson_part, "ZIP_POISSON")
    ids, src, dst = _layout(dm, country_ids)
    _require_full_grid(dm, ids)
    n = len(ids)
    u = _linear_predictor(dm, zip_fit.logit_part)
    v = _linear_predictor(dm, zip_fit.poisson_part)
    _guard_overflow(v, dm, "count")
    psi = expit(u)
    mu = np.exp(v)
    value = np.zeros((n, n))
    variance = np.zeros((n, n))
    value[src, dst] = (1.0 - psi) * mu
    variance[src, dst] = mu * (1.0 - psi) * (1.0 + mu * psi)
    mask = np.ones((n, n), dtype=np.int8)
    np.fill_diagonal(mask, 0)
    return PredictedWeights("ZIP", ids, value, variance, mask)


def link_probabilities(
    fit: FitResult | ZipFitResult,
    dm: DesignMatrix,
    country_ids: tuple[str, ...] | None = None,
) -> LinkProbabilityMatrix:
    """Probability that each directed link exists.

    The logit stage models the probability of a zero flow, so the link
    probability is its complement.  Accepts either a standalone logit fit
    on the zero-flow indicator or a zero-inflated result, whose logit part
    follows the same convention.

    All off-diagonal probabilities are strictly inside (0, 1); the
    diagonal is zero by convention.
    """
    logit = fit.logit_part if isinstance(fit, ZipFitResult) else fit
    if logit.model_tag not in ("LOGIT", "ZIP_LOGIT"):
        raise ValidationError(f"expected a logit-family fit, got {logit.model_tag}")
    if tuple(logit.names) != tuple(dm.columns):
        raise SchemaError(
            "fit and design matrix disagree on covariates: "
            f"{list(logit.names)} vs {list(dm.columns)}"
        )
    ids, src, dst = _layout(dm, country_ids)
    _require_full_grid(dm, ids)
    n = len(ids)
    u = dm.X @ logit.coefficients
    xi = np.zeros((n, n))
    # expit is strictly inside (0, 1) for finite arguments, so xi is too.
    xi[src, dst] = 1.0 - expit(u)
    return LinkProbabilityMatrix(ids, xi)


def zero_flow_probability(
    zip_fit: ZipFitResult,
    dm: DesignMatrix,
    country_ids: tuple[str, ...] | None = None,
    form: str = "consistent",
) -> np.ndarray:
    """Per-dyad probability of observing a zero flow.

    ``form="consistent"`` evaluates ``psi + (1 - psi) * exp(-mu)``, the
    zero mass of the mixture.  ``form="printed"`` instead evaluates
    ``psi + (1 - psi) * mu``, a variant that circulates in applied work
    but is not a probability (it exceeds one for large ``mu``); it is
    provided for replication only.
    """
    if form not in ("consistent", "printed"):
        raise ValidationError(f"unknown zero-probability form {form!r}")
    _check_fit_against(dm, zip_fit.logit_part, "ZIP_LOGIT")
    _check_fit_against(dm, zip_fit.poisson_part, "ZIP_POISSON")
    ids, src, dst = _layout(dm, country_ids)
    _require_full_grid(dm, ids)
    n = len(ids)
    u = _linear_predictor(dm, zip_fit.logit_part)
    v = _linear_predictor(dm, zip_fit.poisson_part)
    _guard_overflow(v, dm, "count")
    psi = expit(u)
    mu = np.exp(v)
    if form == "consistent":
        vals = psi + (1.0 - psi) * np.exp(-mu)
    else:
        vals = psi + (1.0 - psi) * mu
    out = np.zeros((n, n))
    out[src, dst] = vals
    return out


def _off_diagonal_mask(n: int) -> np.ndarray:
    mask = np.ones((n, n), dtype=bool)
    np.fill_diagonal(mask, False)
    return mask


def _binary_from_threshold(xi: np.ndarray, s: float) -> np.ndarray:
    a = (xi > s).astype(np.int8)
    np.fill_diagonal(a, 0)
    return a


def density_induced_binary(link_probs: LinkProbabilityMatrix, rho: float) -> BinaryPrediction:
    """Threshold link probabilities at a fixed cutoff.

    A directed link is placed wherever the link probability strictly
    exceeds ``rho``.  The realized density of the thresholded matrix is
    reported alongside; it generally differs from ``rho`` itself.
    """
    if not 0.0 < rho < 1.0:
        raise ValidationError(f"threshold must lie strictly in (0, 1), got {rho}")
    n = link_probs.n
    if n < 2:
        raise ValidationError("need at least two countries to threshold")
    a = _binary_from_threshold(link_probs.xi, rho)
    density = a.sum() / (n * (n - 1))
    return BinaryPrediction(a, float(rho), float(density))


def threshold_matching_density(
    link_probs: LinkProbabilityMatrix, rho: float
) -> BinaryPrediction:
    """Place links on the highest-probability dyads to match a density.

    The target link count is ``round(rho * n * (n - 1))``.  Dyads are
    ranked by link probability; ties at the cutoff are broken by row-major
    dyad order, so the result is deterministic.  The reported threshold is
    the probability of the weakest placed link (zero when no link is
    placed).
    """
    if not 0.0 <= rho <= 1.0:
        raise ValidationError(f"target density must lie in [0, 1], got {rho}")
    n = link_probs.n
    if n < 2:
        raise ValidationError("need at least two countries to threshold")
    pairs = n * (n - 1)
    target = int(round(rho * pairs))
    off = _off_diagonal_mask(n)
    flat_idx = np.flatnonzero(off.ravel())
    probs = link_probs.xi.ravel()[flat_idx]
    # stable sort on negated values: equal probabilities keep row-major order
    order = np.argsort(-probs, kind="stable")
    chosen = flat_idx[order[:target]]
    a = np.zeros(n * n, dtype=np.int8)
    a[chosen] = 1
    a = a.reshape(n, n)
    threshold = float(probs[order[target - 1]]) if target > 0 else 0.0
    density = a.sum() / pairs
    return BinaryPrediction(a, threshold, float(density))


def threshold_by_manhattan(
    link_probs: LinkProbabilityMatrix, observed: np.ndarray
) -> BinaryPrediction:
    """Choose the cutoff minimising Manhattan distance to an observed adjacency.

    Every distinct link probability is a candidate cutoff, plus zero so
    that the all-links configuration is reachable.  The distance
    ``sum |a_hat(s) - a|`` over ordered pairs is piecewise constant in
    ``s`` and only changes at those candidates, so the scan is exact.
    Ties go to the smallest cutoff.
    """
    n = link_probs.n
    if n < 2:
        raise ValidationError("need at least two countries to threshold")
    observed = np.asarray(observed)
    if observed.shape != (n, n):
        raise ValidationError(
            f"observed adjacency has shape {observed.shape}, expected {(n, n)}"
        )
    off = _off_diagonal_mask(n)
    obs = (np.asarray(observed, dtype=float) != 0).astype(np.int8)
    candidates = np.unique(np.concatenate(([0.0], link_probs.xi[off])))
    best_s = None
    best_dist = None
    for s in candidates:
        a = _binary_from_threshold(link_probs.xi, float(s))
        dist = int(np.abs(a[off] - obs[off]).sum())
        if best_dist is None or dist < best_dist:
            best_s = float(s)
            best_dist = dist
    a = _binary_from_threshold(link_probs.xi, best_s)
    density = a.sum() / (n * (n - 1))
    return BinaryPrediction(a, best_s, float(density), manhattan_distance=best_dist)


def _substream(seed: int, replication: int) -> np.random.Generator:
    # counter-based keying: replication r is reproducible in isolation
    return np.random.Generator(np.random.Philox(key=[seed, replication]))


def _check_sampling_args(m: int, seed: int) -> None:
    if m < 1:
        raise ValidationError(f"ensemble size must be at least 1, got {m}")
    if seed < 0:
        raise ValidationError(f"seed must be non-negative, got {seed}")


def sample_bernoulli_ensemble(
    link_probs: LinkProbabilityMatrix,
    m: int = DEFAULT_REPLICATIONS,
    seed: int = 0,
) -> NetworkEnsemble:
    """Draw binary networks with independent directed links.

    Each replication draws one uniform per matrix entry and places a link
    where it falls below the link probability.  Diagonals stay empty.
    """
    _check_sampling_args(m, seed)
    n = link_probs.n
    xi = link_probs.xi
    reps = np.empty((m, n, n), dtype=np.int8)
    for r in range(m):
        g = _substream(seed, r)
        draw = (g.random((n, n)) < xi).astype(np.int8)
        np.fill_diagonal(draw, 0)
        reps[r] = draw
    return NetworkEnsemble("BERNOULLI", link_probs.country_ids, reps, seed)


def sample_weighted_ensemble(
    pred: PredictedWeights,
    m: int = DEFAULT_REPLICATIONS,
    seed: int = 0,
    link_probs: LinkProbabilityMatrix | None = None,
) -> NetworkEnsemble:
    """Draw weighted networks under the fitted model.

    OLS replications add Gaussian noise with the fitted residual standard
    deviation to the predicted logs, only on the prediction mask; the
    draws live on the log scale.  Poisson replications draw counts at the
    predicted means on every ordered pair.  Zero-inflated replications
    first draw the binary structure from ``link_probs`` and then
    superimpose counts at the count-stage means ``mu = value / xi``;
    both random grids are drawn unconditionally so replication ``r`` is
    identical no matter which entries end up linked.
    """
    _check_sampling_args(m, seed)
    n = pred.n
    off = _off_diagonal_mask(n)
    if pred.model_tag == "OLS":
        sd = np.sqrt(pred.variance)
        maskf = pred.mask.astype(float)
        reps = np.empty((m, n, n))
        for r in range(m):
            g = _substream(seed, r)
            z = g.standard_normal((n, n))
            reps[r] = (pred.value + sd * z) * maskf
        return NetworkEnsemble("OLS", pred.country_ids, reps, seed, mask=pred.mask)
    if pred.model_tag == "PPML":
        reps = np.empty((m, n, n))
        for r in range(m):
            g = _substream(seed, r)
            draw = g.poisson(pred.value).astype(float)
            draw[~off] = 0.0
            reps[r] = draw
        return NetworkEnsemble("PPML", pred.country_ids, reps, seed)
    if pred.model_tag == "ZIP":
        if link_probs is None:
            raise ValidationError("zero-inflated sampling needs link probabilities")
        if link_probs.country_ids != pred.country_ids:
            raise ValidationError("link probabilities cover different countries")
        xi = link_probs.xi
        mu = np.zeros((n, n))
        mu[off] = pred.value[off] / xi[off]
        reps = np.empty((m, n, n))
        for r in range(m):
            g = _substream(seed, r)
            links = g.random((n, n)) < xi
            counts = g.poisson(mu).astype(float)
            draw = np.where(links, counts, 0.0)
            draw[~off] = 0.0
            reps[r] = draw
        return NetworkEnsemble("ZIP", pred.country_ids, reps, seed)
    raise ValidationError(f"cannot sample weighted networks for {pred.model_tag}")
