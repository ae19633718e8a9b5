"""Regression estimators for dyadic trade flows.

Four models share one design-matrix convention: OLS on logged positive
flows, Poisson pseudo-maximum-likelihood on levels (real-valued responses
allowed), a logit for the binary margin, and a zero-inflated Poisson fitted
by EM with a logit zero stage and a Poisson count stage on the same
regressors.

All iterative fits run IRLS inner loops, converge on relative
log-likelihood change, and report classical inverse-Fisher covariance
matrices.  The ZIP covariance comes from the observed information of the
mixture likelihood, not from the two M-step solvers, so the reported
standard errors account for the latent zero labels being estimated.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import qr
from scipy.special import expit, gammaln, log_expit, ndtr

from .errors import (
    ConvergenceError,
    DegenerateComparisonError,
    SeparationError,
    SingularDesignError,
    ValidationError,
)

#: IRLS stops when the relative log-likelihood change drops below this.
IRLS_TOL = 1e-10
MAX_IRLS_ITERATIONS = 100

#: EM stops on relative log-likelihood change; looser than IRLS because each
#: EM step already contains full inner maximizations.
EM_TOL = 1e-8
MAX_EM_ITERATIONS = 500

#: Coefficient-norm ceiling treated as divergence (separation in the logit).
DIVERGENCE_NORM = 1e3

#: IRLS also requires the last step to be this small (relative to the
#: coefficient norm). Guards against boundary drift: with a degenerate
#: response the likelihood change goes quiet while the iterates still move
#: by a constant amount per step toward an unattained supremum.
STEP_TOL = 1e-6

#: Step-halving budget per IRLS iteration; 2^-30 of a Newton step is as
#: good as stuck, so further halving cannot rescue the iteration.
MAX_STEP_HALVINGS = 30


@dataclass(frozen=True)
class FitResult:
    """One fitted model: named coefficients plus standard diagnostics.

    ``sigma2`` is the degrees-of-freedom-corrected residual variance and is
    present only for OLS; ``r2_or_pseudo`` is the classical R² for OLS and
    McFadden's pseudo-R² (against the intercept-only null) otherwise.
    """

    model_tag: str
    names: tuple
    coefficients: np.ndarray
    vcov: np.ndarray
    loglik: float
    r2_or_pseudo: float
    n_obs: int
    converged: bool
    iterations: int
    sigma2: float = None

    @property
    def std_errors(self) -> np.ndarray:
        return np.sqrt(np.diag(self.vcov))

    def coefficient(self, name: str) -> float:
        if name not in self.names:
            raise ValidationError(f"no coefficient named {name!r}")
        return float(self.coefficients[self.names.index(name)])

    def as_dict(self) -> dict:
        table = [
            {"name": n, "estimate": float(b), "std_error": float(s)}
            for n, b, s in zip(self.names, self.coefficients, self.std_errors)
        ]
        diagnostics = {
            "n_obs": self.n_obs,
            "loglik": self.loglik,
            "r2_or_pseudo": self.r2_or_pseudo,
            "converged": self.converged,
            "iterations": self.iterations,
        }
        if self.sigma2 is not None:
            diagnostics["sigma2"] = self.sigma2
        return {
            "model": self.model_tag,
            "coefficients": table,
            "diagnostics": diagnostics,
        }


@dataclass(frozen=True)
class ZipFitResult:
    """Zero-inflated Poisson fit: a logit zero stage and a Poisson stage.

    Both parts are reported as FitResults sharing the regressor names; their
    vcov blocks are the respective diagonal blocks of the joint
    observed-information inverse.  ``vuong_vs_poisson`` is filled by
    :func:`vuong_test` when the comparison is requested.
    """

    logit_part: FitResult
    poisson_part: FitResult
    loglik: float
    vuong_vs_poisson: float = None

    @property
    def n_obs(self) -> int:
        return self.poisson_part.n_obs

    @property
    def converged(self) -> bool:
        return self.poisson_part.converged

    def as_dict(self) -> dict:
        out = {
            "model": "ZIP",
            "logit_part": self.logit_part.as_dict(),
            "poisson_part": self.poisson_part.as_dict(),
            "loglik": self.loglik,
        }
        if self.vuong_vs_poisson is not None:
            out["vuong_vs_poisson"] = self.vuong_vs_poisson
        return out


@dataclass(frozen=True)
class VuongResult:
    statistic: float
    p_value: float
    n_obs: int


def _check_design(X: np.ndarray, names, min_rows: int = None) -> None:
    n, p = X.shape
    if len(names) != p:
        raise ValidationError(f"{len(names)} names for {p} columns")
    required = p if min_rows is None else min_rows
    if n < required:
        raise ValidationError(f"{n} rows are too few for {p} regressors")
    if not np.isfinite(X).all():
        raise ValidationError("design matrix contains non-finite entries")
    _, r, pivot = qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    if diag.size and diag[0] > 0.0:
        rank = int((diag > diag[0] * max(X.shape) * np.finfo(float).eps).sum())
    else:
        rank = 0
    if rank < p:
        collinear = sorted(names[i] for i in pivot[rank:])
        raise SingularDesignError(
            f"design matrix is rank deficient; collinear column(s): {collinear}",
            columns=collinear,
        )


def _solve_weighted(X, w, wz):
    """Solve (X' diag(w) X) b = X' wz. Callers pass wz = w*z pre-multiplied
    so rows with zero weight never produce 0 * inf."""
    xtw = X.T * w
    return np.linalg.solve(xtw @ X, X.T @ wz)


def _symmetrized_inverse(information):
    vcov = np.linalg.inv(information)
    return (vcov + vcov.T) / 2.0


def fit_ols(dm) -> FitResult:
    """Least squares of ln(flow) on the design columns.

    Requires a positive-flow design matrix (the log response must exist)
    and at least one more row than there are columns.
    """
    X = dm.X
    _check_design(X, dm.columns, min_rows=X.shape[1] + 1)
    y = dm.log_flows()
    n, p = X.shape

    xtx = X.T @ X
    beta = np.linalg.solve(xtx, X.T @ y)
    residuals = y - X @ beta
    ssr = float(residuals @ residuals)
    sigma2 = ssr / (n - p)
    vcov = _symmetrized_inverse(xtx / sigma2) if sigma2 > 0 else np.zeros((p, p))

    centered = y - y.mean()
    tss = float(centered @ centered)
    r2 = 1.0 - ssr / tss if tss > 0 else 1.0

    sigma2_mle = ssr / n
    if sigma2_mle > 0:
        loglik = -0.5 * n * (np.log(2.0 * np.pi * sigma2_mle) + 1.0)
    else:
        loglik = np.inf  # exact interpolation: unbounded Gaussian density

    return FitResult(
        model_tag="OLS",
        names=tuple(dm.columns),
        coefficients=beta,
        vcov=vcov,
        loglik=float(loglik),
        r2_or_pseudo=r2,
        n_obs=n,
        converged=True,
        iterations=0,
        sigma2=sigma2,
    )


def _poisson_q(y, eta, mu, omega):
    # omega-weighted Poisson log likelihood, lgamma normalizer included
    return float(np.sum(omega * (y * eta - mu - gammaln(y + 1.0))))


def _poisson_irls(X, y, omega, start, tol=IRLS_TOL, max_iter=MAX_IRLS_ITERATIONS):
    """Weighted Poisson IRLS. Returns (beta, trace, converged, diverged)."""
    beta = np.asarray(start, dtype=float)
    eta = X @ beta
    mu = np.exp(eta)
    ll = _poisson_q(y, eta, mu, omega)
    trace = [ll]
    if not np.isfinite(ll):
        return beta, trace, False, True
    for _ in range(max_iter):
        w = omega * mu
        wz = omega * (mu * eta + y - mu)
        try:
            target = _solve_weighted(X, w, wz)
        except np.linalg.LinAlgError:
            # weights collapsed; the current iterate is the diagnosis
            return beta, trace, False, True
        # step-halve on overshoot: a cold start far below the response
        # scale would otherwise send exp(eta) to overflow in one step
        direction = target - beta
        fraction = 1.0
        accepted = False
        for _half in range(MAX_STEP_HALVINGS):
            candidate = beta + fraction * direction
            eta_new = X @ candidate
            mu_new = np.exp(eta_new)
            ll_new = _poisson_q(y, eta_new, mu_new, omega)
            if np.isfinite(ll_new) and ll_new >= ll - 1e-12 * (1.0 + abs(ll)):
                accepted = True
                break
            fraction *= 0.5
        if not accepted:
            return beta, trace, False, True
        step = np.linalg.norm(candidate - beta)
        beta = candidate
        eta = eta_new
        mu = mu_new
        trace.append(ll_new)
        if np.linalg.norm(beta) > DIVERGENCE_NORM:
            return beta, trace, False, True
        if abs(ll_new - ll) <= tol * (1.0 + abs(ll)) and step <= STEP_TOL * (
            1.0 + np.linalg.norm(beta)
        ):
            return beta, trace, True, False
        ll = ll_new
    return beta, trace, False, False


def _bernoulli_q(r, eta, omega):
    return float(np.sum(omega * (r * log_expit(eta) + (1.0 - r) * log_expit(-eta))))


def _logit_irls(X, r, omega, start, tol=IRLS_TOL, max_iter=MAX_IRLS_ITERATIONS):
    """Weighted logit IRLS for responses r in [0, 1] (fractional allowed)."""
    beta = np.asarray(start, dtype=float)
    eta = X @ beta
    ll = _bernoulli_q(r, eta, omega)
    trace = [ll]
    if not np.isfinite(ll):
        return beta, trace, False, True
    for _ in range(max_iter):
        prob = expit(eta)
        w = omega * prob * (1.0 - prob)
        wz = omega * (prob * (1.0 - prob) * eta + r - prob)
        try:
            target = _solve_weighted(X, w, wz)
        except np.linalg.LinAlgError:
            return beta, trace, False, True
        direction = target - beta
        fraction = 1.0
        accepted = False
        for _half in range(MAX_STEP_HALVINGS):
            candidate = beta + fraction * direction
            eta_new = X @ candidate
            ll_new = _bernoulli_q(r, eta_new, omega)
            if np.isfinite(ll_new) and ll_new >= ll - 1e-12 * (1.0 + abs(ll)):
                accepted = True
                break
            fraction *= 0.5
        if not accepted:
            return beta, trace, False, True
        step = np.linalg.norm(candidate - beta)
        beta = candidate
        eta = eta_new
        trace.append(ll_new)
        if np.linalg.norm(beta) > DIVERGENCE_NORM:
            return beta, trace, False, True
        if abs(ll_new - ll) <= tol * (1.0 + abs(ll)) and step <= STEP_TOL * (
            1.0 + np.linalg.norm(beta)
        ):
            return beta, trace, True, False
        ll = ll_new
    return beta, trace, False, False


def _ols_log1p_start(X, y):
    return np.linalg.solve(X.T @ X, X.T @ np.log1p(y))


def _poisson_null_loglik(y):
    ybar = y.mean()
    return _poisson_q(y, np.full_like(y, np.log(ybar)), np.full_like(y, ybar), 1.0)


def fit_poisson_pml(dm) -> FitResult:
    """Poisson pseudo-ML on flow levels over the full dyad sample.

    Zero flows stay in the sample; the response may be any non-negative
    real.  Starts from OLS on ln(1+flow).
    """
    X = dm.X
    _check_design(X, dm.columns)
    y = np.asarray(dm.y, dtype=float)
    if np.any(y < 0):
        raise ValidationError("Poisson response must be non-negative")

    start = _ols_log1p_start(X, y)
    beta, trace, converged, diverged = _poisson_irls(X, y, 1.0, start)
    if diverged or not converged:
        raise ConvergenceError(
            "Poisson IRLS did not converge"
            + (" (diverging iterates)" if diverged else ""),
            last_coefficients=beta,
            trace=trace,
        )

    mu = np.exp(X @ beta)
    vcov = _symmetrized_inverse((X.T * mu) @ X)
    loglik = trace[-1]
    pseudo = 1.0 - loglik / _poisson_null_loglik(y)
    return FitResult(
        model_tag="PPML",
        names=tuple(dm.columns),
        coefficients=beta,
        vcov=vcov,
        loglik=loglik,
        r2_or_pseudo=pseudo,
        n_obs=X.shape[0],
        converged=True,
        iterations=len(trace) - 1,
    )


def _bernoulli_null_loglik(a):
    share = a.mean()
    return float(len(a) * (share * np.log(share) + (1 - share) * np.log(1 - share)))


def _perfectly_separated(eta, a):
    margins = np.where(a == 1, eta, -eta)
    return bool(np.all(margins > 0.0))


def fit_logit(dm, response=None) -> FitResult:
    """Logit fit of a binary response on the design columns.

    ``response`` defaults to the design matrix's link indicator.  Note that
    downstream link-probability code expects a logit fitted on the
    zero-flow indicator (1 - a), mirroring the zero stage of the ZIP model;
    pass that explicitly when fitting for prediction.
    """
    X = dm.X
    _check_design(X, dm.columns)
    a = np.asarray(dm.a if response is None else response, dtype=float)
    if a.shape != (X.shape[0],):
        raise ValidationError("response length does not match the design matrix")
    if not np.isin(a, (0.0, 1.0)).all():
        raise ValidationError("logit response must be binary")
    if a.min() == a.max():
        raise ValidationError("logit response needs both classes present")

    start = np.zeros(X.shape[1])
    beta, trace, converged, diverged = _logit_irls(X, a, 1.0, start)
    # A finite logit MLE exists only when no coefficient vector classifies
    # every row correctly, so a perfectly-separating iterate is proof of
    # separation even if the likelihood change already went quiet.
    if _perfectly_separated(X @ beta, a):
        raise SeparationError(
            "complete separation: the classes are perfectly divided",
            last_coefficients=beta,
            trace=trace,
        )
    if diverged or not converged:
        raise ConvergenceError(
            "logit IRLS did not converge", last_coefficients=beta, trace=trace
        )

    prob = expit(X @ beta)
    vcov = _symmetrized_inverse((X.T * (prob * (1.0 - prob))) @ X)
    loglik = trace[-1]
    pseudo = 1.0 - loglik / _bernoulli_null_loglik(a)
    return FitResult(
        model_tag="LOGIT",
        names=tuple(dm.columns),
        coefficients=beta,
        vcov=vcov,
        loglik=loglik,
        r2_or_pseudo=pseudo,
        n_obs=X.shape[0],
        converged=True,
        iterations=len(trace) - 1,
    )


def _zip_row_loglik(y, u, v):
    """Per-row ZIP log likelihood; u is the logit stage linear predictor
    (zero probability side), v the Poisson stage predictor."""
    mu = np.exp(v)
    zero = y == 0.0
    out = np.empty_like(y)
    # P(0) = psi + (1-psi) e^{-mu}, computed in log space
    out[zero] = np.logaddexp(log_expit(u[zero]), log_expit(-u[zero]) - mu[zero])
    pos = ~zero
    out[pos] = (
        log_expit(-u[pos])
        + y[pos] * v[pos]
        - mu[pos]
        - gammaln(y[pos] + 1.0)
    )
    return out


def _zip_loglik(y, u, v) -> float:
    return float(_zip_row_loglik(y, u, v).sum())


def _zip_em(X, y, theta, gamma, tol=EM_TOL, max_iter=MAX_EM_ITERATIONS):
    """EM for the ZIP likelihood. Returns (theta, gamma, trace, converged)."""
    zero = y == 0.0
    ll = _zip_loglik(y, X @ theta, X @ gamma)
    trace = [ll]
    if not np.isfinite(ll):
        raise ConvergenceError("ZIP starting values give non-finite likelihood",
                               trace=trace)
    for _ in range(max_iter):
        u = X @ theta
        v = X @ gamma
        # E-step: posterior probability that a zero is structural
        z_hat = np.zeros_like(y)
        log_p0 = np.logaddexp(log_expit(u[zero]), log_expit(-u[zero]) - np.exp(v[zero]))
        z_hat[zero] = np.exp(log_expit(u[zero]) - log_p0)

        # M-steps: fractional-response logit and case-weighted Poisson
        theta, _, th_ok, th_div = _logit_irls(X, z_hat, 1.0, theta)
        gamma, _, ga_ok, ga_div = _poisson_irls(X, y, 1.0 - z_hat, gamma)
        if th_div or ga_div or not (th_ok and ga_ok):
            raise ConvergenceError(
                "ZIP M-step failed to converge",
                last_coefficients=np.concatenate([theta, gamma]),
                trace=trace,
            )

        ll_new = _zip_loglik(y, X @ theta, X @ gamma)
        trace.append(ll_new)
        if ll_new < ll - 1e-8 * (1.0 + abs(ll)):
            raise ConvergenceError(
                f"EM log-likelihood decreased ({ll} -> {ll_new})", trace=trace
            )
        if max(np.linalg.norm(theta), np.linalg.norm(gamma)) > DIVERGENCE_NORM:
            raise ConvergenceError(
                "ZIP iterates diverged",
                last_coefficients=np.concatenate([theta, gamma]),
                trace=trace,
            )
        if abs(ll_new - ll) <= tol * (1.0 + abs(ll)):
            return theta, gamma, trace, True
        ll = ll_new
    return theta, gamma, trace, False


def _zip_information(X, y, theta, gamma):
    """Observed information of the ZIP likelihood at (theta, gamma),
    assembled from per-row second derivatives in (u, v) = (x'theta, x'gamma)."""
    u = X @ theta
    v = X @ gamma
    mu = np.exp(v)
    psi = expit(u)
    s = psi * (1.0 - psi)
    zero = y == 0.0

    h_uu = np.where(zero, 0.0, -s)
    h_uv = np.zeros_like(y)
    h_vv = np.where(zero, 0.0, -mu)

    uz = u[zero]
    muz = mu[zero]
    psz = psi[zero]
    sz = s[zero]
    ez = np.exp(-muz)
    p0 = np.exp(np.logaddexp(log_expit(uz), log_expit(-uz) - muz))
    one_e = 1.0 - ez
    h_uu[zero] = sz * one_e * ((1.0 - 2.0 * psz) * p0 - sz * one_e) / p0**2
    h_uv[zero] = sz * muz * ez * (p0 + (1.0 - psz) * one_e) / p0**2
    h_vv[zero] = (
        -(1.0 - psz) * muz * ez * ((1.0 - muz) * p0 + (1.0 - psz) * muz * ez) / p0**2
    )

    h_tt = (X.T * h_uu) @ X
    h_tg = (X.T * h_uv) @ X
    h_gg = (X.T * h_vv) @ X
    top = np.hstack([h_tt, h_tg])
    bottom = np.hstack([h_tg.T, h_gg])
    return -np.vstack([top, bottom])


def _fit_zip_core(X, y, names):
    theta0 = np.zeros(X.shape[1])
    gamma0 = _ols_log1p_start(X, y)
    theta, gamma, trace, converged = _zip_em(X, y, theta0, gamma0)
    if not converged:
        raise ConvergenceError(
            "ZIP EM did not converge",
            last_coefficients=np.concatenate([theta, gamma]),
            trace=trace,
        )
    return theta, gamma, trace


def fit_zip(dm) -> ZipFitResult:
    """Zero-inflated Poisson via EM: logit zero stage, Poisson count stage,
    the same regressor set in both.

    The covariance of each stage is the corresponding diagonal block of the
    inverse observed information of the full mixture likelihood.
    """
    X = dm.X
    _check_design(X, dm.columns)
    y = np.asarray(dm.y, dtype=float)
    if np.any(y < 0):
        raise ValidationError("ZIP response must be non-negative")
    zero = y == 0.0
    if not zero.any() or zero.all():
        raise ValidationError(
            "ZIP requires both zero and positive responses present"
        )

    theta, gamma, trace = _fit_zip_core(X, y, dm.columns)
    loglik = trace[-1]
    iterations = len(trace) - 1

    p = X.shape[1]
    try:
        vcov = _symmetrized_inverse(_zip_information(X, y, theta, gamma))
    except np.linalg.LinAlgError:
        raise ConvergenceError(
            "ZIP information matrix is singular at the optimum",
            last_coefficients=np.concatenate([theta, gamma]),
            trace=trace,
        ) from None

    # Pseudo-R2 against the intercept-only ZIP null, fitted by the same EM
    ones = np.ones((len(y), 1))
    n_theta, n_gamma, n_trace = _fit_zip_core(ones, y, ("const",))
    pseudo = 1.0 - loglik / n_trace[-1]

    common = dict(
        r2_or_pseudo=pseudo,
        n_obs=X.shape[0],
        converged=True,
        iterations=iterations,
    )
    logit_part = FitResult(
        model_tag="ZIP_LOGIT",
        names=tuple(dm.columns),
        coefficients=theta,
        vcov=vcov[:p, :p],
        loglik=loglik,
        **common,
    )
    poisson_part = FitResult(
        model_tag="ZIP_POISSON",
        names=tuple(dm.columns),
        coefficients=gamma,
        vcov=vcov[p:, p:],
        loglik=loglik,
        **common,
    )
    return ZipFitResult(
        logit_part=logit_part, poisson_part=poisson_part, loglik=loglik
    )


def vuong_test(zip_result: ZipFitResult, poisson_result: FitResult, dm) -> VuongResult:
    """Vuong non-nested comparison of the ZIP fit against plain Poisson.

    Positive values favor the zero-inflated model.  Both fits must come
    from the same design matrix rows.
    """
    X = dm.X
    y = np.asarray(dm.y, dtype=float)
    names = tuple(dm.columns)
    for part in (zip_result.logit_part, zip_result.poisson_part, poisson_result):
        if part.names != names:
            raise ValidationError("fits were not produced from this design matrix")
        if part.n_obs != X.shape[0]:
            raise ValidationError("fits cover a different number of rows")

    ll_zip = _zip_row_loglik(
        y, X @ zip_result.logit_part.coefficients,
        X @ zip_result.poisson_part.coefficients,
    )
    eta = X @ poisson_result.coefficients
    ll_pois = y * eta - np.exp(eta) - gammaln(y + 1.0)

    m = ll_zip - ll_pois
    sd = float(m.std())
    if sd == 0.0:
        raise DegenerateComparisonError(
            "per-row likelihoods are identical; the Vuong statistic is undefined"
        )
    statistic = float(np.sqrt(len(m)) * m.mean() / sd)
    p_value = float(2.0 * ndtr(-abs(statistic)))
    return VuongResult(statistic=statistic, p_value=p_value, n_obs=len(m))


def attach_vuong(zip_result: ZipFitResult, poisson_result: FitResult, dm) -> ZipFitResult:
    """Return a copy of the ZIP result with the Vuong statistic filled in."""
    test = vuong_test(zip_result, poisson_result, dm)
    return replace(zip_result, vuong_vs_poisson=test.statistic)
