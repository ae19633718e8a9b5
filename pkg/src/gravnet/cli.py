"""Command-line pipeline: fit gravity models, score their network predictions.

The pipeline is a chain of subcommands sharing one output directory::

    gravnet synth    # optional: synthetic dyad panel with recorded truth
    gravnet fit      # estimate the configured models year by year
    gravnet predict  # fits -> predicted weight / link-probability matrices
    gravnet netstats # node-statistic tables, observed and predicted
    gravnet compare  # K-S tests and ensemble bands per (year, model) cell
    gravnet report   # aggregate the per-cell reports into flat CSV tables

Artifacts live under ``out/<year>/<model>/`` and are hashed into a
top-level ``manifest.json`` when the producing command completes; a
downstream command looks its inputs up there and fails with the name of
the command to run when one is missing.  Every file is written to a
temporary name and renamed into place, so an interrupted command never
leaves a partial artifact.  ``run.log.jsonl`` carries one timestamped
record per logged event and is deliberately excluded from the manifest:
with the log set aside, two runs from the same configuration and seed
produce byte-identical output trees.

Randomness enters only through ensemble sampling at the compare stage.
Each (year, model) cell derives its own substream seed from the run
seed, so adding a year or a model to the configuration never shifts the
draws of the other cells.
"""

import argparse
import csv
import hashlib
import io
import json
import os
import sys
from dataclasses import dataclass, field, fields
from datetime import datetime, timezone

import numpy as np
from scipy.special import ndtr

from .compare import ModelPrediction, build_comparison_report, report_as_dict
from .errors import ConvergenceError, DependencyError, ValidationError
from .estimation import (
    FitResult,
    ZipFitResult,
    attach_vuong,
    fit_logit,
    fit_ols,
    fit_poisson_pml,
    fit_zip,
)
from .netstats import (
    STAT_KINDS,
    WEIGHT_TRANSFORMS,
    WEIGHTED_KINDS,
    TradeNetwork,
    compute_statistic,
    density,
)
from .panel import (
    DESIGN_COLUMNS,
    SummaryStats,
    build_cross_section,
    build_design_matrix,
    load_panel,
    summary_stats,
)
from .prediction import (
    DEFAULT_REPLICATIONS,
    LinkProbabilityMatrix,
    PredictedWeights,
    density_induced_binary,
    link_probabilities,
    predict_ols,
    predict_ppml,
    predict_zip,
    sample_bernoulli_ensemble,
    sample_weighted_ensemble,
    threshold_by_manhattan,
    threshold_matching_density,
)
from .synth import NOISE_KINDS, SynthSpec, _atomic_write, write_synth_panel

MODEL_TAGS = ("OLS", "PPML", "ZIP", "LOGIT")

# Fixed per-model codes keep cell seeds stable when the model set changes.
MODEL_CODES = {"OLS": 1, "PPML": 2, "ZIP": 3, "LOGIT": 4}

# The log-linear comparison happens on the log scale; the level models
# are compared in levels.  Values name the transform of the observed side.
DEFAULT_TRANSFORMS = {
    "OLS": "log_positive",
    "PPML": "identity",
    "ZIP": "identity",
    "LOGIT": "identity",
}

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_CONVERGENCE = 3
EXIT_DEPENDENCY = 4

MANIFEST_NAME = "manifest.json"
LOG_NAME = "run.log.jsonl"

_SEED_LIMIT = 2**63


@dataclass(frozen=True)
class RunConfig:
    """One pipeline run: input paths, cell grid, sampling budget, output tree.

    ``years`` empty means every year present in the panel.  ``transforms``
    maps model tags to the weight transform under which that model's
    comparison against the observed network is carried out; the log-linear
    model predicts logs directly, so its own statistics always use the
    identity transform and its configured value applies to the observed
    side only.
    """

    dyads: str
    countries: str
    out: str
    years: tuple = ()
    models: tuple = MODEL_TAGS
    covariates: tuple = DESIGN_COLUMNS
    replications: int = DEFAULT_REPLICATIONS
    seed: int = 0
    transforms: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("dyads", "countries", "out"):
            value = getattr(self, name)
            if not isinstance(value, str) or not value:
                raise ValidationError(f"config field {name!r} must be a non-empty path")
        for name in ("dyads", "countries"):
            if not os.path.isfile(getattr(self, name)):
                raise ValidationError(f"{name} file not found: {getattr(self, name)!r}")
        object.__setattr__(self, "years", tuple(int(y) for y in self.years))
        models = tuple(self.models)
        if not models:
            raise ValidationError("models must be non-empty")
        unknown = [m for m in models if m not in MODEL_TAGS]
        if unknown:
            raise ValidationError(
                f"unknown model(s) {unknown}; expected a subset of {list(MODEL_TAGS)}"
            )
        object.__setattr__(self, "models", tuple(t for t in MODEL_TAGS if t in models))
        covariates = tuple(self.covariates)
        if not covariates:
            raise ValidationError("covariates must be non-empty")
        bad = [c for c in covariates if c not in DESIGN_COLUMNS]
        if bad:
            raise ValidationError(f"unknown covariate(s) {bad}")
        if len(set(covariates)) != len(covariates):
            raise ValidationError("duplicate covariate requested")
        object.__setattr__(self, "covariates", covariates)
        replications = int(self.replications)
        if replications < 1:
            raise ValidationError(
                f"replications must be at least 1, got {self.replications}"
            )
        object.__setattr__(self, "replications", replications)
        seed = int(self.seed)
        if not 0 <= seed < _SEED_LIMIT:
            raise ValidationError(f"seed must lie in [0, 2**63), got {self.seed}")
        object.__setattr__(self, "seed", seed)
        transforms = dict(DEFAULT_TRANSFORMS)
        for tag, transform in dict(self.transforms).items():
            if tag not in MODEL_TAGS:
                raise ValidationError(f"transform given for unknown model {tag!r}")
            if transform not in WEIGHT_TRANSFORMS:
                raise ValidationError(
                    f"unknown transform {transform!r} for model {tag}; "
                    f"expected one of {WEIGHT_TRANSFORMS}"
                )
            transforms[tag] = transform
        object.__setattr__(self, "transforms", transforms)


_CONFIG_FIELDS = (
    "dyads",
    "countries",
    "out",
    "years",
    "models",
    "covariates",
    "replications",
    "seed",
    "transforms",
)


def load_config(path=None, overrides=None) -> RunConfig:
    """Merge defaults, an optional JSON config file, and CLI overrides.

    Precedence is CLI > file > defaults; override entries that are None
    count as not given.  The file must hold a single JSON object whose
    keys are RunConfig field names.
    """
    merged = {}
    if path is not None:
        try:
            with open(path, encoding="utf-8") as handle:
                data = json.load(handle)
        except FileNotFoundError:
            raise ValidationError(f"config file not found: {path!r}")
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config file {path!r} is not valid JSON: {exc}")
        if not isinstance(data, dict):
            raise ValidationError(f"config file {path!r} must hold a JSON object")
        unknown = sorted(set(data) - set(_CONFIG_FIELDS))
        if unknown:
            raise ValidationError(f"unknown config key(s) {unknown}")
        merged.update(data)
    for key, value in (overrides or {}).items():
        if value is not None:
            merged[key] = value
    missing = [k for k in ("dyads", "countries", "out") if k not in merged]
    if missing:
        raise ValidationError(f"missing required config field(s) {missing}")
    return RunConfig(**merged)


def cell_seed(seed: int, year: int, model_tag: str) -> int:
    """Substream seed for one (year, model) cell.

    A fixed affine combination of the run seed, the year, and the model
    code, so each cell's draws depend on nothing but its own coordinates.
    """
    return (seed * 1_000_003 + year * 1009 + MODEL_CODES[model_tag]) % _SEED_LIMIT


# ---------------------------------------------------------------------------
# artifact plumbing


def _artifact_path(out: str, rel: str) -> str:
    # manifest keys use forward slashes on every platform
    return os.path.join(out, *rel.split("/"))


def _prepare(out: str, rel: str) -> str:
    path = _artifact_path(out, rel)
    os.makedirs(os.path.dirname(path), exist_ok=True)
    return path


def _write_json(path: str, payload) -> None:
    _atomic_write(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _read_json(path: str):
    with open(path, encoding="utf-8") as handle:
        return json.load(handle)


def _write_csv(path: str, fieldnames, rows) -> None:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(fieldnames), lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    _atomic_write(path, buf.getvalue())


def _render(value) -> str:
    """CSV cell text: repr for floats so values round-trip exactly."""
    if value is None:
        return ""
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def _hash_file(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _load_manifest(out: str) -> dict:
    path = os.path.join(out, MANIFEST_NAME)
    if not os.path.isfile(path):
        return {}
    return _read_json(path).get("artifacts", {})


def _record_artifacts(out: str, relpaths) -> None:
    """Merge freshly written artifacts into the manifest.

    Called once per successful command, so the manifest only ever lists
    output from commands that ran to completion.
    """
    artifacts = _load_manifest(out)
    for rel in relpaths:
        artifacts[rel] = _hash_file(_artifact_path(out, rel))
    _write_json(os.path.join(out, MANIFEST_NAME), {"artifacts": artifacts})


def _require_artifact(out: str, rel: str, producer: str) -> str:
    """Path to an upstream artifact, verified against the manifest."""
    artifacts = _load_manifest(out)
    path = _artifact_path(out, rel)
    if rel not in artifacts or not os.path.isfile(path):
        raise DependencyError(f"missing artifact {rel}: run 'gravnet {producer}' first")
    if _hash_file(path) != artifacts[rel]:
        raise DependencyError(
            f"artifact {rel} does not match the manifest: rerun 'gravnet {producer}'"
        )
    return path


def _check_dependencies(cfg: RunConfig, years, needs, producer: str) -> None:
    """Fail before any work when an upstream artifact is missing.

    ``needs`` maps a model tag to the artifact basenames its cell must
    already provide, so a consuming command either runs to completion or
    writes nothing at all.
    """
    for year in years:
        for tag in cfg.models:
            for name in needs(tag):
                _require_artifact(cfg.out, f"{year}/{tag}/{name}", producer)


def _log(out: str, command: str, message: str, **fields_) -> None:
    """One human-readable line on stdout, one JSON record in the run log."""
    print(f"gravnet {command}: {message}")
    record = {
        "ts": datetime.now(timezone.utc).isoformat(timespec="milliseconds"),
        "command": command,
        "message": message,
    }
    record.update(fields_)
    with open(os.path.join(out, LOG_NAME), "a", encoding="utf-8") as handle:
        handle.write(json.dumps(record, sort_keys=True) + "\n")


def _load_inputs(cfg: RunConfig):
    panel = load_panel(cfg.dyads, cfg.countries)
    years = cfg.years or panel.years
    missing = [y for y in years if y not in panel.years]
    if missing:
        raise ValidationError(
            f"year(s) {missing} not present in the panel; it has {list(panel.years)}"
        )
    return panel, tuple(years)


def _config_from_args(args) -> RunConfig:
    overrides = {
        "dyads": args.dyads,
        "countries": args.countries,
        "out": args.out,
        "years": args.years,
        "models": args.models,
        "covariates": args.covariates,
        "replications": args.replications,
        "seed": args.seed,
    }
    return load_config(args.config, overrides)


# ---------------------------------------------------------------------------
# fit artifacts


def _fit_payload(fit) -> dict:
    """JSON form of a fit, extended with the covariance needed to reload it."""
    payload = fit.as_dict()
    if isinstance(fit, ZipFitResult):
        payload["logit_part"]["vcov"] = fit.logit_part.vcov.tolist()
        payload["poisson_part"]["vcov"] = fit.poisson_part.vcov.tolist()
    else:
        payload["vcov"] = fit.vcov.tolist()
    return payload


def _part_from_payload(payload: dict) -> FitResult:
    names = tuple(row["name"] for row in payload["coefficients"])
    coefficients = np.array([row["estimate"] for row in payload["coefficients"]])
    diagnostics = payload["diagnostics"]
    return FitResult(
        model_tag=payload["model"],
        names=names,
        coefficients=coefficients,
        vcov=np.array(payload["vcov"]),
        loglik=diagnostics["loglik"],
        r2_or_pseudo=diagnostics["r2_or_pseudo"],
        n_obs=diagnostics["n_obs"],
        converged=diagnostics["converged"],
        iterations=diagnostics["iterations"],
        sigma2=diagnostics.get("sigma2"),
    )


def _fit_from_payload(payload: dict):
    if payload["model"] == "ZIP":
        return ZipFitResult(
            logit_part=_part_from_payload(payload["logit_part"]),
            poisson_part=_part_from_payload(payload["poisson_part"]),
            loglik=payload["loglik"],
            vuong_vs_poisson=payload.get("vuong_vs_poisson"),
        )
    return _part_from_payload(payload)


def _fit_one(tag: str, year: int, dm_pos, dm_full):
    try:
        if tag == "OLS":
            return fit_ols(dm_pos)
        if tag == "PPML":
            return fit_poisson_pml(dm_full)
        if tag == "LOGIT":
            # the pipeline's logit models the zero flows, mirroring the
            # ZIP zero stage, so link probabilities are its complement
            return fit_logit(dm_full, response=(dm_full.y == 0.0).astype(float))
        return fit_zip(dm_full)
    except ConvergenceError as exc:
        raise ConvergenceError(
            f"year {year} model {tag}: {exc}", exc.last_coefficients, exc.trace
        ) from exc
    except ValidationError as exc:
        raise ValidationError(f"year {year} model {tag}: {exc}") from exc


_VARIANT_ORDER = ("OLS", "PPML", "ZIP_poisson", "ZIP_logit", "LOGIT")


def _variant_fits(fits: dict) -> list:
    variants = []
    for tag, fit in fits.items():
        if tag == "ZIP":
            variants.append(("ZIP_poisson", fit.poisson_part))
            variants.append(("ZIP_logit", fit.logit_part))
        else:
            variants.append((tag, fit))
    variants.sort(key=lambda pair: _VARIANT_ORDER.index(pair[0]))
    return variants


def _significance(estimate: float, se: float) -> str:
    if not np.isfinite(se) or se <= 0.0:
        return ""
    p = 2.0 * float(ndtr(-abs(estimate / se)))
    if p < 0.001:
        return "***"
    if p < 0.01:
        return "**"
    if p < 0.05:
        return "*"
    return ""


def _coefficient_table(covariates, fits: dict):
    """Wide per-year table: regressor rows, one column per model variant."""
    variants = _variant_fits(fits)
    fieldnames = ["regressor"] + [label for label, _ in variants]
    rows = []
    for k, name in enumerate(covariates):
        row = {"regressor": name}
        for label, fit in variants:
            est = float(fit.coefficients[k])
            se = float(fit.std_errors[k])
            row[label] = f"{est:.4g}{_significance(est, se)}({se:.4g})"
        rows.append(row)
    rows.append(
        {"regressor": "n_obs", **{lab: str(f.n_obs) for lab, f in variants}}
    )
    rows.append(
        {
            "regressor": "r2_or_pseudo",
            **{lab: f"{f.r2_or_pseudo:.4g}" for lab, f in variants},
        }
    )
    rows.append(
        {"regressor": "loglik", **{lab: f"{f.loglik:.6g}" for lab, f in variants}}
    )
    zip_fit = fits.get("ZIP")
    if zip_fit is not None and zip_fit.vuong_vs_poisson is not None:
        row = {"regressor": "vuong_z", **{lab: "" for lab, _ in variants}}
        row["ZIP_poisson"] = f"{zip_fit.vuong_vs_poisson:.4g}"
        rows.append(row)
    return fieldnames, rows


# ---------------------------------------------------------------------------
# commands


def cmd_synth(args) -> None:
    """Write a synthetic dyad panel whose generating parameters are recorded."""
    spec_kwargs = {}
    for name in (
        "n_countries",
        "years",
        "noise",
        "seed",
        "mean_log_flow",
        "mean_zero_score",
        "sigma_log",
        "gamma_slopes",
        "theta_slopes",
    ):
        value = getattr(args, name)
        if value is not None:
            spec_kwargs[name] = value
    spec = SynthSpec(**spec_kwargs)
    os.makedirs(args.out, exist_ok=True)
    paths = write_synth_panel(spec, args.out)
    _record_artifacts(args.out, sorted(os.path.basename(p) for p in paths.values()))
    _log(
        args.out,
        "synth",
        f"wrote a {spec.noise} panel of {spec.n_countries} countries "
        f"for {len(spec.years)} year(s)",
        n_countries=spec.n_countries,
        noise=spec.noise,
        seed=spec.seed,
        years=list(spec.years),
    )


def cmd_fit(args) -> None:
    """Estimate every configured (year, model) cell and write fit artifacts."""
    cfg = _config_from_args(args)
    os.makedirs(cfg.out, exist_ok=True)
    panel, years = _load_inputs(cfg)
    written = []
    for year in years:
        cs = build_cross_section(panel, year)
        dm_pos = dm_full = None
        if "OLS" in cfg.models:
            dm_pos = build_design_matrix(cs, panel, cfg.covariates, positive_only=True)
        if any(tag != "OLS" for tag in cfg.models):
            dm_full = build_design_matrix(cs, panel, cfg.covariates)
        fits = {}
        for tag in cfg.models:
            fits[tag] = _fit_one(tag, year, dm_pos, dm_full)
        if "ZIP" in fits and "PPML" in fits:
            fits["ZIP"] = attach_vuong(fits["ZIP"], fits["PPML"], dm_full)
        for tag, fit in fits.items():
            rel = f"{year}/{tag}/fit.json"
            payload = _fit_payload(fit)
            payload["year"] = year
            _write_json(_prepare(cfg.out, rel), payload)
            written.append(rel)
            _log(
                cfg.out,
                "fit",
                f"year {year} model {tag}: loglik {fit.loglik:.6g}",
                year=year,
                model=tag,
                loglik=fit.loglik,
                converged=bool(fit.converged),
            )
        rel = f"{year}/coefficients.csv"
        fieldnames, rows = _coefficient_table(cfg.covariates, fits)
        _write_csv(_prepare(cfg.out, rel), fieldnames, rows)
        written.append(rel)
    _record_artifacts(cfg.out, written)


def _write_prediction(out: str, year: int, pred: PredictedWeights) -> str:
    rel = f"{year}/{pred.model_tag}/prediction.json"
    payload = {
        "model": pred.model_tag,
        "year": year,
        "country_ids": list(pred.country_ids),
        "value": pred.value.tolist(),
        "variance": pred.variance.tolist(),
        "mask": None if pred.mask is None else pred.mask.astype(int).tolist(),
    }
    _write_json(_prepare(out, rel), payload)
    return rel


def _write_binary(out, year, tag, lp: LinkProbabilityMatrix, cs, rho: float) -> list:
    """Link probabilities plus the three thresholded binary predictions."""
    xi_rel = f"{year}/{tag}/xi.json"
    _write_json(
        _prepare(out, xi_rel),
        {
            "model": tag,
            "year": year,
            "country_ids": list(lp.country_ids),
            "xi": lp.xi.tolist(),
        },
    )
    induced = density_induced_binary(lp, rho)
    matched = threshold_matching_density(lp, rho)
    manhattan = threshold_by_manhattan(lp, cs.adjacency)
    binary_rel = f"{year}/{tag}/binary.json"
    _write_json(
        _prepare(out, binary_rel),
        {
            "model": tag,
            "year": year,
            "country_ids": list(lp.country_ids),
            "observed_density": rho,
            "density_induced": {
                "threshold": induced.threshold,
                "realized_density": induced.realized_density,
            },
            "matched_density": {
                "threshold": matched.threshold,
                "realized_density": matched.realized_density,
            },
            "manhattan": {
                "threshold": manhattan.threshold,
                "realized_density": manhattan.realized_density,
                "distance": manhattan.manhattan_distance,
            },
            "adjacency": induced.adjacency.astype(int).tolist(),
        },
    )
    return [xi_rel, binary_rel]


def cmd_predict(args) -> None:
    """Turn fit artifacts into predicted matrices, one set per cell."""
    cfg = _config_from_args(args)
    os.makedirs(cfg.out, exist_ok=True)
    panel, years = _load_inputs(cfg)
    _check_dependencies(cfg, years, lambda tag: ("fit.json",), "fit")
    written = []
    for year in years:
        cs = build_cross_section(panel, year)
        ids = cs.country_ids
        dm_pos = dm_full = None
        if "OLS" in cfg.models:
            dm_pos = build_design_matrix(cs, panel, cfg.covariates, positive_only=True)
        if any(tag != "OLS" for tag in cfg.models):
            dm_full = build_design_matrix(cs, panel, cfg.covariates)
        rho = density(cs.network())
        for tag in cfg.models:
            fit_path = _require_artifact(cfg.out, f"{year}/{tag}/fit.json", "fit")
            fit = _fit_from_payload(_read_json(fit_path))
            if tag == "OLS":
                written.append(_write_prediction(cfg.out, year, predict_ols(fit, dm_pos, ids)))
            elif tag == "PPML":
                written.append(_write_prediction(cfg.out, year, predict_ppml(fit, dm_full, ids)))
            elif tag == "ZIP":
                written.append(_write_prediction(cfg.out, year, predict_zip(fit, dm_full, ids)))
                lp = link_probabilities(fit, dm_full, ids)
                written.extend(_write_binary(cfg.out, year, tag, lp, cs, rho))
            else:
                lp = link_probabilities(fit, dm_full, ids)
                written.extend(_write_binary(cfg.out, year, tag, lp, cs, rho))
            _log(
                cfg.out,
                "predict",
                f"year {year} model {tag}: predictions written",
                year=year,
                model=tag,
            )
    _record_artifacts(cfg.out, written)


def _pred_from_payload(payload: dict) -> PredictedWeights:
    mask = payload.get("mask")
    return PredictedWeights(
        payload["model"],
        tuple(payload["country_ids"]),
        np.array(payload["value"], dtype=float),
        np.array(payload["variance"], dtype=float),
        None if mask is None else np.array(mask, dtype=np.int8),
    )


def _link_probs_from_artifact(cfg: RunConfig, year: int, tag: str) -> LinkProbabilityMatrix:
    path = _require_artifact(cfg.out, f"{year}/{tag}/xi.json", "predict")
    payload = _read_json(path)
    return LinkProbabilityMatrix(
        tuple(payload["country_ids"]), np.array(payload["xi"], dtype=float)
    )


def _cell_network(cfg: RunConfig, year: int, tag: str):
    """Point-prediction network of one cell, read back from predict artifacts.

    Returns (country_ids, network, transform) where the transform is the
    one under which this network's weighted statistics are meaningful.
    """
    if tag == "LOGIT":
        path = _require_artifact(cfg.out, f"{year}/{tag}/binary.json", "predict")
        payload = _read_json(path)
        a = np.array(payload["adjacency"], dtype=np.int8)
        net = TradeNetwork(a.astype(float), a)
        return tuple(payload["country_ids"]), net, "identity"
    path = _require_artifact(cfg.out, f"{year}/{tag}/prediction.json", "predict")
    pred = _pred_from_payload(_read_json(path))
    if tag == "OLS":
        # predicted logs on the observed support; already on the log scale
        return pred.country_ids, TradeNetwork(pred.value, pred.mask), "identity"
    return pred.country_ids, TradeNetwork(pred.value), cfg.transforms[tag]


def _stats_rows(net: TradeNetwork, ids, transforms) -> list:
    """Long-format node-statistic rows; binary kinds are transform-free."""
    rows = []
    for kind in STAT_KINDS:
        for transform in transforms if kind in WEIGHTED_KINDS else ("",):
            stat = compute_statistic(net, kind, transform or "identity")
            for k, cid in enumerate(ids):
                rows.append(
                    {
                        "country_id": cid,
                        "kind": kind,
                        "transform": transform,
                        "value": _render(float(stat.values[k])) if stat.defined[k] else "",
                    }
                )
    return rows


_STATS_FIELDS = ("country_id", "kind", "transform", "value")


def _cell_inputs(tag: str) -> tuple:
    """Predict artifacts a cell's downstream stages read."""
    if tag == "LOGIT":
        return ("xi.json", "binary.json")
    if tag == "ZIP":
        return ("prediction.json", "xi.json", "binary.json")
    return ("prediction.json",)


def cmd_netstats(args) -> None:
    """Tabulate node statistics for the observed and predicted networks."""
    cfg = _config_from_args(args)
    os.makedirs(cfg.out, exist_ok=True)
    panel, years = _load_inputs(cfg)
    _check_dependencies(cfg, years, _cell_inputs, "predict")
    written = []
    for year in years:
        cs = build_cross_section(panel, year)
        rel = f"{year}/observed_stats.csv"
        rows = _stats_rows(cs.network(), cs.country_ids, ("identity", "log_positive"))
        _write_csv(_prepare(cfg.out, rel), _STATS_FIELDS, rows)
        written.append(rel)
        for tag in cfg.models:
            ids, net, transform = _cell_network(cfg, year, tag)
            rel = f"{year}/{tag}/node_stats.csv"
            _write_csv(_prepare(cfg.out, rel), _STATS_FIELDS, _stats_rows(net, ids, (transform,)))
            written.append(rel)
            _log(
                cfg.out,
                "netstats",
                f"year {year} model {tag}: statistics written",
                year=year,
                model=tag,
            )
    _record_artifacts(cfg.out, written)


def _cell_prediction(cfg: RunConfig, year: int, tag: str):
    """ModelPrediction for one cell plus the observed-side transform."""
    seed = cell_seed(cfg.seed, year, tag)
    if tag == "LOGIT":
        lp = _link_probs_from_artifact(cfg, year, tag)
        _, net, _ = _cell_network(cfg, year, tag)
        ensemble = sample_bernoulli_ensemble(lp, cfg.replications, seed)
        return ModelPrediction(tag, net, ensemble, "identity"), "identity"
    path = _require_artifact(cfg.out, f"{year}/{tag}/prediction.json", "predict")
    pred = _pred_from_payload(_read_json(path))
    transform = cfg.transforms[tag]
    if tag == "OLS":
        net = TradeNetwork(pred.value, pred.mask)
        ensemble = sample_weighted_ensemble(pred, cfg.replications, seed)
        # the configured transform applies to the observed side; the
        # predicted side is already on the log scale
        return ModelPrediction(tag, net, ensemble, "identity"), transform
    net = TradeNetwork(pred.value)
    if tag == "ZIP":
        lp = _link_probs_from_artifact(cfg, year, tag)
        ensemble = sample_weighted_ensemble(pred, cfg.replications, seed, link_probs=lp)
    else:
        ensemble = sample_weighted_ensemble(pred, cfg.replications, seed)
    return ModelPrediction(tag, net, ensemble, transform), transform


def cmd_compare(args) -> None:
    """K-S tests and ensemble bands for every cell against the observed ITN."""
    cfg = _config_from_args(args)
    os.makedirs(cfg.out, exist_ok=True)
    panel, years = _load_inputs(cfg)
    _check_dependencies(cfg, years, _cell_inputs, "predict")
    written = []
    for year in years:
        cs = build_cross_section(panel, year)
        observed = cs.network()
        for tag in cfg.models:
            prediction, observed_transform = _cell_prediction(cfg, year, tag)
            report = build_comparison_report(
                observed,
                cs.country_ids,
                {tag: prediction},
                year=year,
                observed_transform=observed_transform,
            )
            rel = f"{year}/{tag}/report.json"
            _write_json(_prepare(cfg.out, rel), report_as_dict(report))
            written.append(rel)
            _log(
                cfg.out,
                "compare",
                f"year {year} model {tag}: report written "
                f"({cfg.replications} replications)",
                year=year,
                model=tag,
                replications=cfg.replications,
            )
    _record_artifacts(cfg.out, written)


_KS_FIELDS = ("year", "model", "kind", "d_statistic", "p_value", "n_observed", "n_predicted")
_AVG_FIELDS = ("year", "model", "kind", "observed", "predicted", "ci_low", "ci_high", "ensemble_mean")
_CORR_FIELDS = ("year", "model", "x", "y", "observed_r", "predicted_r")


def cmd_report(args) -> None:
    """Aggregate per-cell comparison reports into flat CSV tables."""
    cfg = _config_from_args(args)
    os.makedirs(cfg.out, exist_ok=True)
    panel, years = _load_inputs(cfg)
    _check_dependencies(cfg, years, lambda tag: ("report.json",), "compare")
    ks_rows = []
    avg_rows = []
    corr_rows = []
    for year in years:
        for tag in cfg.models:
            path = _require_artifact(cfg.out, f"{year}/{tag}/report.json", "compare")
            payload = _read_json(path)
            for s in payload["statistics"]:
                ks_rows.append(
                    {
                        "year": year,
                        "model": s["model"],
                        "kind": s["kind"],
                        "d_statistic": _render(s["ks_d"]),
                        "p_value": _render(s["ks_p"]),
                        "n_observed": s["ks_n_observed"],
                        "n_predicted": s["ks_n_predicted"],
                    }
                )
                band = s["ensemble"]
                avg_rows.append(
                    {
                        "year": year,
                        "model": s["model"],
                        "kind": s["kind"],
                        "observed": _render(s["observed_avg"]),
                        "predicted": _render(s["predicted_avg"]),
                        "ci_low": "" if band is None else _render(band["ci_low"]),
                        "ci_high": "" if band is None else _render(band["ci_high"]),
                        "ensemble_mean": "" if band is None else _render(band["mean"]),
                    }
                )
            for c in payload["correlations"]:
                corr_rows.append(
                    {
                        "year": year,
                        "model": c["model"],
                        "x": c["x"],
                        "y": c["y"],
                        "observed_r": _render(c["observed_r"]),
                        "predicted_r": _render(c["predicted_r"]),
                    }
                )
    summary_fields = [f.name for f in fields(SummaryStats)]
    summary_rows = []
    for year in years:
        stats = summary_stats(build_cross_section(panel, year))
        summary_rows.append({name: _render(getattr(stats, name)) for name in summary_fields})
    written = []
    for rel, fieldnames, rows in (
        ("ks_tests.csv", _KS_FIELDS, ks_rows),
        ("averages.csv", _AVG_FIELDS, avg_rows),
        ("correlations.csv", _CORR_FIELDS, corr_rows),
        ("summary.csv", summary_fields, summary_rows),
    ):
        _write_csv(_prepare(cfg.out, rel), fieldnames, rows)
        written.append(rel)
    _record_artifacts(cfg.out, written)
    _log(
        cfg.out,
        "report",
        f"aggregated {len(years)} year(s) x {len(cfg.models)} model(s)",
        years=list(years),
        models=list(cfg.models),
    )


# ---------------------------------------------------------------------------
# argument parsing


def _int_list(text: str):
    try:
        return tuple(int(part) for part in text.split(",") if part.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _float_list(text: str):
    try:
        return tuple(float(part) for part in text.split(",") if part.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _name_list(text: str):
    return tuple(part.strip() for part in text.split(",") if part.strip())


def _add_run_arguments(sub) -> None:
    sub.add_argument("--config", help="JSON config file")
    sub.add_argument("--dyads", help="dyad CSV path")
    sub.add_argument("--countries", help="country CSV path")
    sub.add_argument("--out", help="output directory")
    sub.add_argument(
        "--years", type=_int_list, help="comma-separated years (default: all in the panel)"
    )
    sub.add_argument(
        "--models", type=_name_list, help=f"comma-separated subset of {', '.join(MODEL_TAGS)}"
    )
    sub.add_argument("--covariates", type=_name_list, help="comma-separated design columns")
    sub.add_argument("--replications", type=int, help="ensemble size")
    sub.add_argument("--seed", type=int, help="run seed")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gravnet",
        description="Gravity-model trade pipeline: estimation, prediction, "
        "and network-statistic comparison.",
    )
    commands = parser.add_subparsers(dest="command", required=True, metavar="command")

    synth = commands.add_parser(
        "synth", help="generate a synthetic dyad panel with recorded parameters"
    )
    synth.add_argument("--out", required=True, help="directory for the panel files")
    synth.add_argument("--n-countries", type=int, help="number of countries (default 50)")
    synth.add_argument("--years", type=_int_list, help="comma-separated years (default 2000)")
    synth.add_argument("--noise", choices=NOISE_KINDS, help="flow noise process (default zip)")
    synth.add_argument("--seed", type=int, help="generator seed (default 0)")
    synth.add_argument("--mean-log-flow", type=float, help="average log flow level")
    synth.add_argument("--mean-zero-score", type=float, help="average zero-stage score")
    synth.add_argument("--sigma-log", type=float, help="lognormal noise scale")
    synth.add_argument("--gamma-slopes", type=_float_list, help="flow-stage slope overrides")
    synth.add_argument("--theta-slopes", type=_float_list, help="zero-stage slope overrides")
    synth.set_defaults(func=cmd_synth)

    for name, func, help_text in (
        ("fit", cmd_fit, "estimate the configured models year by year"),
        ("predict", cmd_predict, "write predicted weight and link-probability matrices"),
        ("netstats", cmd_netstats, "tabulate observed and predicted node statistics"),
        ("compare", cmd_compare, "K-S tests and ensemble bands against the observed network"),
        ("report", cmd_report, "aggregate per-cell reports into flat CSV tables"),
    ):
        sub = commands.add_parser(name, help=help_text)
        _add_run_arguments(sub)
        sub.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    """Run one subcommand; map the error taxonomy onto process exit codes."""
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except DependencyError as exc:
        return _fail(EXIT_DEPENDENCY, exc)
    except ConvergenceError as exc:
        return _fail(EXIT_CONVERGENCE, exc)
    except ValidationError as exc:
        return _fail(EXIT_VALIDATION, exc)
    return EXIT_OK


def _fail(code: int, exc: Exception) -> int:
    print(f"gravnet: error: {exc}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
