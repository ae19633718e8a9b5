"""Directed-network statistics for weighted trade networks.

Conventions
-----------
``weights[i, j]`` is the flow from node ``i`` to node ``j``; diagonals are
zero.  In-quantities are column sums, out-quantities are row sums.  Every
statistic comes in the directed variants used for trade-network analysis:
degrees/strengths (in/out/tot), average nearest-neighbor degree/strength
(in_in/in_out/out_in/out_out/tot), and clustering coefficients over the four
directed triangular motifs (cyc/mid/in/out) plus an undirected total.

Nodes whose statistic has a non-positive denominator (e.g. clustering of a
node with a single bilateral partner) are flagged undefined rather than
zero-filled, and are excluded from averages and correlations.

The vectorized matrix-product forms used here are pinned against a naive
triple-loop implementation in the test suite; the loop form is normative.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

#: Weight transforms accepted by every weighted statistic. ``log_positive``
#: replaces each positive weight by its natural log (zeros stay zero), used
#: when comparing level-scale observations against log-scale predictions.
WEIGHT_TRANSFORMS = ("identity", "log_positive")

BINARY_KINDS = (
    "ND_in", "ND_out", "ND_tot",
    "ANND_in_in", "ANND_in_out", "ANND_out_in", "ANND_out_out", "ANND_tot",
    "BCC_cyc", "BCC_mid", "BCC_in", "BCC_out", "BCC_tot",
)

WEIGHTED_KINDS = (
    "NS_in", "NS_out", "NS_tot",
    "ANNS_in_in", "ANNS_in_out", "ANNS_out_in", "ANNS_out_out", "ANNS_tot",
    "WCC_cyc", "WCC_mid", "WCC_in", "WCC_out", "WCC_tot",
)

#: Full catalogue of node-statistic kinds.
STAT_KINDS = BINARY_KINDS + WEIGHTED_KINDS


@dataclass(frozen=True)
class TradeNetwork:
    """One directed network: an N x N weight matrix plus its adjacency.

    When ``adjacency`` is omitted it is derived as ``weights > 0``, which
    requires non-negative weights (level scale).  An explicit adjacency
    permits real-valued weights (e.g. log-scale predictions, where negative
    entries are meaningful); in that case weights must vanish off the
    adjacency support.
    """

    weights: np.ndarray
    adjacency: np.ndarray = None

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise ValidationError(f"weights must be square, got shape {w.shape}")
        if not np.isfinite(w).all():
            raise ValidationError("weights must be finite")
        if np.any(np.diag(w) != 0.0):
            raise ValidationError("weight matrix must have a zero diagonal")
        if self.adjacency is None:
            if np.any(w < 0.0):
                raise ValidationError(
                    "negative weights require an explicit adjacency matrix"
                )
            a = (w > 0.0).astype(np.int8)
        else:
            raw = np.asarray(self.adjacency)
            if raw.shape != w.shape:
                raise ValidationError(
                    f"adjacency shape {raw.shape} != weights shape {w.shape}"
                )
            if not np.isin(raw, (0, 1)).all():
                raise ValidationError("adjacency entries must be 0 or 1")
            a = raw.astype(np.int8)
            if np.any(np.diag(a) != 0):
                raise ValidationError("adjacency must have a zero diagonal")
            if np.any(w[a == 0] != 0.0):
                raise ValidationError("weights must be zero where adjacency is zero")
        w.setflags(write=False)
        a.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "adjacency", a)

    @property
    def n(self) -> int:
        return self.weights.shape[0]


@dataclass(frozen=True)
class NodeStatVector:
    """Per-node values of one statistic, with an explicit defined flag.

    ``values`` holds NaN at undefined entries; ``defined`` marks the nodes
    where the statistic exists.
    """

    kind: str
    values: np.ndarray
    defined: np.ndarray


def _transformed_weights(net: TradeNetwork, transform: str) -> np.ndarray:
    if transform == "identity":
        return net.weights
    if transform == "log_positive":
        out = np.zeros_like(net.weights)
        pos = net.weights > 0.0
        out[pos] = np.log(net.weights[pos])
        return out
    raise ValidationError(
        f"unknown weight transform {transform!r}; expected one of {WEIGHT_TRANSFORMS}"
    )


def _ratio_stat(kind: str, numer: np.ndarray, denom: np.ndarray) -> NodeStatVector:
    defined = denom > 0
    values = np.full(numer.shape, np.nan)
    values[defined] = numer[defined] / denom[defined]
    return NodeStatVector(kind=kind, values=values, defined=defined)


def degrees(net: TradeNetwork, direction: str = "tot") -> NodeStatVector:
    """Node degree: in = number of partners exporting to the node, out =
    number it exports to, tot = their sum."""
    a = net.adjacency.astype(float)
    k_in = a.sum(axis=0)
    k_out = a.sum(axis=1)
    if direction == "in":
        values = k_in
    elif direction == "out":
        values = k_out
    elif direction == "tot":
        values = k_in + k_out
    else:
        raise ValidationError(f"unknown direction {direction!r}")
    return NodeStatVector(
        kind=f"ND_{direction}", values=values, defined=np.ones(net.n, dtype=bool)
    )


def strengths(
    net: TradeNetwork, direction: str = "tot", transform: str = "identity"
) -> NodeStatVector:
    """Node strength: sum of (transformed) link weights, by direction."""
    w = _transformed_weights(net, transform)
    s_in = w.sum(axis=0)
    s_out = w.sum(axis=1)
    if direction == "in":
        values = s_in
    elif direction == "out":
        values = s_out
    elif direction == "tot":
        values = s_in + s_out
    else:
        raise ValidationError(f"unknown direction {direction!r}")
    return NodeStatVector(
        kind=f"NS_{direction}", values=values, defined=np.ones(net.n, dtype=bool)
    )


def reciprocal_degree(net: TradeNetwork) -> NodeStatVector:
    """Number of bilateral partners: sum_j a_ij * a_ji."""
    a = net.adjacency.astype(float)
    values = (a * a.T).sum(axis=1)
    return NodeStatVector(
        kind="ND_recip", values=values, defined=np.ones(net.n, dtype=bool)
    )


def _neighbor_average(
    kind: str, a: np.ndarray, neighbor_values: dict, variant: str
) -> NodeStatVector:
    k_in = a.sum(axis=0)
    k_out = a.sum(axis=1)
    if variant == "in_in":
        numer, denom = a.T @ neighbor_values["in"], k_in
    elif variant == "in_out":
        numer, denom = a.T @ neighbor_values["out"], k_in
    elif variant == "out_in":
        numer, denom = a @ neighbor_values["in"], k_out
    elif variant == "out_out":
        numer, denom = a @ neighbor_values["out"], k_out
    elif variant == "tot":
        numer = (a + a.T) @ neighbor_values["tot"]
        denom = k_in + k_out
    else:
        raise ValidationError(f"unknown variant {variant!r}")
    return _ratio_stat(kind, numer, denom)


def annd(net: TradeNetwork, variant: str = "tot") -> NodeStatVector:
    """Average nearest-neighbor degree.

    ``in_in``: average in-degree of the node's suppliers; ``in_out``: average
    out-degree of its suppliers; ``out_in``/``out_out``: same over its
    customers.  The ``tot`` form sums (a_ij + a_ji) k_j^tot over k_i^tot, so
    a reciprocated neighbor counts twice in numerator and denominator alike;
    that double counting is intentional.  Undefined where the denominator
    degree is 0.
    """
    a = net.adjacency.astype(float)
    k_in = a.sum(axis=0)
    k_out = a.sum(axis=1)
    neighbor = {"in": k_in, "out": k_out, "tot": k_in + k_out}
    return _neighbor_average(f"ANND_{variant}", a, neighbor, variant)


def anns(
    net: TradeNetwork, variant: str = "tot", transform: str = "identity"
) -> NodeStatVector:
    """Average nearest-neighbor strength: as :func:`annd` with neighbor
    strengths in the numerator and the node's degree in the denominator."""
    a = net.adjacency.astype(float)
    w = _transformed_weights(net, transform)
    s_in = w.sum(axis=0)
    s_out = w.sum(axis=1)
    neighbor = {"in": s_in, "out": s_out, "tot": s_in + s_out}
    return _neighbor_average(f"ANNS_{variant}", a, neighbor, variant)


def _clustering(kind, m, a, variant):
    """Shared motif machinery: m is the matrix whose triple products count
    motifs (adjacency for the binary case, element-wise cube roots of the
    weights otherwise); a is the binary adjacency driving the denominators."""
    k_in = a.sum(axis=0)
    k_out = a.sum(axis=1)
    k_tot = k_in + k_out
    k_recip = (a * a.T).sum(axis=1)
    mt = m.T
    if variant == "cyc":
        numer = np.diag(m @ m @ m)
        denom = k_in * k_out - k_recip
    elif variant == "mid":
        numer = np.diag(m @ mt @ m)
        denom = k_in * k_out - k_recip
    elif variant == "in":
        numer = np.diag(mt @ m @ m)
        denom = k_in * (k_in - 1.0)
    elif variant == "out":
        numer = np.diag(m @ m @ mt)
        denom = k_out * (k_out - 1.0)
    elif variant == "tot":
        s = m + mt
        numer = np.diag(s @ s @ s)
        denom = 2.0 * (k_tot * (k_tot - 1.0) - 2.0 * k_recip)
    else:
        raise ValidationError(f"unknown variant {variant!r}")
    return _ratio_stat(kind, numer, denom)


def clustering_binary(net: TradeNetwork, variant: str = "tot") -> NodeStatVector:
    """Directed clustering coefficient over binary motifs.

    Variants: ``cyc`` (i->j->k->i), ``mid`` (i imports from j and exports to
    k, j->k), ``in`` (two suppliers of i trading), ``out`` (two customers of i
    trading), ``tot`` (all motifs, undirected total).  Entries with a
    non-positive denominator are flagged undefined.
    """
    a = net.adjacency.astype(float)
    return _clustering(f"BCC_{variant}", a, a, variant)


def clustering_weighted(
    net: TradeNetwork, variant: str = "tot", transform: str = "identity"
) -> NodeStatVector:
    """Weighted clustering: motif products of cube-rooted weights over the
    binary-degree denominators.

    Weights are deliberately not rescaled into [0, 1], so the result's range
    may exceed 1.
    """
    a = net.adjacency.astype(float)
    w_hat = np.cbrt(_transformed_weights(net, transform))
    return _clustering(f"WCC_{variant}", w_hat, a, variant)


def density(net: TradeNetwork) -> float:
    """Fraction of possible directed links present: L / (N(N-1))."""
    if net.n < 2:
        raise ValidationError("density requires at least 2 nodes")
    return float(net.adjacency.sum()) / (net.n * (net.n - 1))


def compute_statistic(
    net: TradeNetwork, kind: str, transform: str = "identity"
) -> NodeStatVector:
    """Dispatch a statistic by catalogue kind (see ``STAT_KINDS``)."""
    family, _, rest = kind.partition("_")
    if family == "ND":
        return degrees(net, rest)
    if family == "NS":
        return strengths(net, rest, transform)
    if family == "ANND":
        return annd(net, rest)
    if family == "ANNS":
        return anns(net, rest, transform)
    if family == "BCC":
        return clustering_binary(net, rest)
    if family == "WCC":
        return clustering_weighted(net, rest, transform)
    raise ValidationError(f"unknown statistic kind {kind!r}")


def all_statistics(
    net: TradeNetwork, kinds=STAT_KINDS, transform: str = "identity"
) -> dict:
    """Compute a set of catalogue statistics, keyed by kind."""
    return {kind: compute_statistic(net, kind, transform) for kind in kinds}


def population_average(stat: NodeStatVector) -> tuple:
    """Mean over defined nodes.

    Returns ``(average, n_excluded)`` where ``n_excluded`` counts the
    undefined nodes left out.  Raises if no node is defined.
    """
    n_defined = int(stat.defined.sum())
    if n_defined == 0:
        raise ValidationError(f"{stat.kind}: statistic undefined for every node")
    avg = float(stat.values[stat.defined].mean())
    return avg, stat.defined.size - n_defined


def stat_correlation(x: NodeStatVector, y: NodeStatVector) -> float:
    """Pearson correlation between two statistics over jointly-defined nodes."""
    joint = x.defined & y.defined
    if int(joint.sum()) < 3:
        raise ValidationError(
            f"correlation({x.kind}, {y.kind}): fewer than 3 jointly-defined nodes"
        )
    xv = x.values[joint]
    yv = y.values[joint]
    sx = xv.std()
    sy = yv.std()
    if sx == 0.0 or sy == 0.0:
        raise ValidationError(
            f"correlation({x.kind}, {y.kind}): zero variance, correlation undefined"
        )
    return float(((xv - xv.mean()) * (yv - yv.mean())).mean() / (sx * sy))
