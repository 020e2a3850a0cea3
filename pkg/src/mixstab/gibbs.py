"""Classical Gibbs models with exact inference by enumeration.

Distributions are dense numpy tables with one axis per variable, so a
configuration ``x`` indexes the table directly (vertex 0 is the most
significant digit). All entropies are in nats.
"""

import math

import numpy as np
from scipy.special import logsumexp

from .exceptions import PreconditionError, ZeroProbabilityError, check_budget
from .graph import Hypergraph, Tripartition

PROB_FLOOR = 1e-300
NORMALIZATION_TOL = 1e-12


class DiscreteDistribution:
    """Probability table over an ordered tuple of named variables.

    Parameters
    ----------
    variables : sequence of hashable
        Variable labels, one per table axis.
    table : array_like
        Nonnegative table whose shape gives each variable's local dimension.
    normalize : bool
        Divide by the total mass first. Otherwise the table must already sum
        to one within 1e-12.
    """

    def __init__(self, variables, table, normalize=False):
        variables = tuple(variables)
        table = np.asarray(table, dtype=float)
        if table.ndim != len(variables):
            if table.ndim == 1 and len(variables) > 1:
                raise ValueError("pass the table with one axis per variable")
            raise ValueError(f"table has {table.ndim} axes for {len(variables)} variables")
        if len(set(variables)) != len(variables):
            raise ValueError("duplicate variable labels")
        if np.any(table < 0) or not np.all(np.isfinite(table)):
            raise ValueError("probabilities must be finite and nonnegative")
        total = table.sum()
        if normalize:
            if total <= 0:
                raise ZeroProbabilityError("table has zero total mass")
            table = table / total
        elif abs(total - 1.0) > NORMALIZATION_TOL:
            raise ValueError(f"probabilities sum to {total!r}, not 1")
        self.variables = variables
        self.table = table
        self._axis = {v: k for k, v in enumerate(variables)}

    def __repr__(self):
        return f"DiscreteDistribution(variables={self.variables!r}, shape={self.table.shape})"

    @property
    def shape(self):
        return self.table.shape

    def axes(self, region):
        try:
            return [self._axis[v] for v in region]
        except KeyError as exc:
            raise ValueError(f"variable {exc.args[0]!r} not in distribution") from None

    def prob(self, assignment):
        """Probability of a full assignment given as a mapping or a sequence."""
        if isinstance(assignment, dict):
            assignment = [assignment[v] for v in self.variables]
        return float(self.table[tuple(assignment)])

    def ordered(self, variables):
        """The same distribution with axes permuted to ``variables``."""
        variables = tuple(variables)
        if set(variables) != set(self.variables) or len(variables) != len(self.variables):
            raise ValueError("ordered() needs a permutation of the variables")
        return DiscreteDistribution(variables, np.transpose(self.table, self.axes(variables)))

    def marginal(self, region):
        return marginal(self, region)

    def conditional(self, cond, assignment):
        return conditional(self, cond, assignment)

    def entropy(self):
        return entropy(self)


def _sorted_region(p, region):
    region = list(region)
    if len(set(region)) != len(region):
        raise ValueError("region lists a variable twice")
    p.axes(region)
    return sorted(region, key=p._axis.__getitem__)


def marginal(p, region):
    """Sum out every variable not in ``region``; variables keep their original order."""
    keep = _sorted_region(p, region)
    keep_axes = set(p.axes(keep))
    drop = tuple(k for k in range(len(p.variables)) if k not in keep_axes)
    table = p.table.sum(axis=drop) if drop else p.table
    return DiscreteDistribution(keep, table, normalize=True)


def conditional(p, cond, assignment):
    """Distribution of the remaining variables given ``cond == assignment``."""
    cond = list(cond)
    if isinstance(assignment, dict):
        assignment = [assignment[v] for v in cond]
    assignment = list(assignment)
    if len(assignment) != len(cond):
        raise ValueError("assignment length does not match the conditioning set")
    axes = p.axes(cond)
    index = [slice(None)] * len(p.variables)
    for ax, val in zip(axes, assignment):
        index[ax] = int(val)
    sub = p.table[tuple(index)]
    mass = sub.sum()
    if mass <= 0:
        raise ZeroProbabilityError(f"P({dict(zip(cond, assignment))}) = 0")
    rest = [v for v in p.variables if v not in set(cond)]
    return DiscreteDistribution(rest, sub / mass)


def _entropy_of_table(table):
    t = table[table > PROB_FLOOR]
    return float(-(t * np.log(t)).sum())


def entropy(p, region=None):
    """Shannon entropy in nats of ``p`` or of its marginal on ``region``."""
    if region is not None:
        p = marginal(p, region)
    return _entropy_of_table(p.table)


def _regions(t):
    if isinstance(t, Tripartition):
        return t.A, t.B, t.C
    a, b, c = t
    return a, b, c


def mutual_information(p, a, c):
    """I(A:C) = H(A) + H(C) - H(AC), in nats."""
    a, c = list(a), list(c)
    if set(a) & set(c):
        raise PreconditionError("mutual information needs disjoint regions")
    if not a or not c:
        return 0.0
    return entropy(p, a) + entropy(p, c) - entropy(p, a + c)


def cmi(p, t):
    """I(A:C|B) = H(AB) + H(BC) - H(B) - H(ABC), in nats.

    ``t`` is a :class:`Tripartition` or a triple of variable collections. The
    regions need not cover every variable of ``p``; the rest are summed out.
    """
    a, b, c = (list(r) for r in _regions(t))
    if set(a) & set(b) or set(a) & set(c) or set(b) & set(c):
        raise PreconditionError("tripartition regions must be disjoint")
    if not a or not c:
        return 0.0
    h_b = entropy(p, b) if b else 0.0
    return entropy(p, a + b) + entropy(p, b + c) - h_b - entropy(p, a + b + c)


def cmi_decomposed(p, t):
    """I(A:C|B) as sum_b P(b) I(A:C | B=b); zero-probability branches are skipped."""
    a, b, c = (list(r) for r in _regions(t))
    if not a or not c:
        return 0.0
    pabc = marginal(p, a + b + c)
    if not b:
        return mutual_information(pabc, a, c)
    pb = marginal(pabc, b)
    total = 0.0
    for idx in np.ndindex(*pb.shape):
        w = pb.table[idx]
        if w <= PROB_FLOOR:
            continue
        cond = conditional(pabc, pb.variables, idx)
        total += w * mutual_information(cond, a, c)
    return total


def total_variation(p, q):
    """Half the l1 distance between two distributions on the same variables."""
    if set(p.variables) != set(q.variables):
        raise ValueError("distributions live on different variables")
    q = q.ordered(p.variables)
    return 0.5 * float(np.abs(p.table - q.table).sum())


def _as_table(table, shape):
    arr = np.asarray(table, dtype=float)
    if arr.shape != shape:
        if arr.size != math.prod(shape):
            raise ValueError(f"energy table has {arr.size} entries, expected {math.prod(shape)}")
        arr = arr.reshape(shape)
    if np.any(np.isnan(arr)) or np.any(arr == -np.inf):
        raise ValueError("energies must be finite or +inf")
    return arr


def broadcast_term(table, edge, dims):
    """Embed a local table over ``edge`` into an array broadcastable to ``dims``."""
    n = len(dims)
    order = np.argsort(edge)
    t = np.transpose(table, order)
    shape = [1] * n
    for v in sorted(edge):
        shape[v] = dims[v]
    return t.reshape(shape)


class GibbsModel:
    """P(x) proportional to exp(-beta * sum_a h_a(x_a)).

    Parameters
    ----------
    graph : Hypergraph
    terms : sequence of array_like
        One energy table per hyperedge, flat (mixed radix, first vertex most
        significant) or already shaped. Entries may be ``+inf`` to exclude
        configurations (hard constraints).
    beta : float
    labels : sequence of hashable, optional
        Names for the vertices in output distributions; defaults to ``0..n-1``.
    """

    def __init__(self, graph, terms, beta=1.0, labels=None):
        if not isinstance(graph, Hypergraph):
            raise TypeError("graph must be a Hypergraph")
        terms = list(terms)
        if len(terms) != len(graph.hyperedges):
            raise ValueError("need exactly one energy table per hyperedge")
        self.graph = graph
        self.terms = tuple(
            _as_table(t, tuple(graph.dims[v] for v in e)) for t, e in zip(terms, graph.hyperedges)
        )
        self.beta = float(beta)
        self.labels = tuple(range(graph.n_vertices)) if labels is None else tuple(labels)
        if len(self.labels) != graph.n_vertices:
            raise ValueError("one label per vertex required")

    def __repr__(self):
        return f"GibbsModel({self.graph!r}, beta={self.beta})"

    @property
    def n(self):
        return self.graph.n_vertices

    def energy(self, x):
        """Sum of term energies at configuration ``x`` (beta not applied)."""
        x = tuple(int(v) for v in x)
        if len(x) != self.n:
            raise ValueError(f"configuration has {len(x)} entries, model has {self.n} vertices")
        for v, d in zip(x, self.graph.dims):
            if not 0 <= v < d:
                raise ValueError(f"value {v} out of range for local dimension {d}")
        return float(sum(t[tuple(x[v] for v in e)] for t, e in zip(self.terms, self.graph.hyperedges)))

    def log2_size(self):
        return float(sum(math.log2(d) for d in self.graph.dims))

    def energy_table(self):
        check_budget(self.log2_size(), "Gibbs enumeration")
        dims = self.graph.dims
        out = np.zeros(dims)
        for t, e in zip(self.terms, self.graph.hyperedges):
            out = out + broadcast_term(t, e, dims)
        return out

    def log_weights(self):
        e = self.energy_table()
        with np.errstate(invalid="ignore"):
            return np.where(np.isinf(e), -np.inf, -self.beta * e)

    def log_partition_function(self):
        return float(logsumexp(self.log_weights()))

    def exact_distribution(self):
        lw = self.log_weights()
        log_z = logsumexp(lw)
        if not np.isfinite(log_z):
            raise ZeroProbabilityError("every configuration is excluded")
        return DiscreteDistribution(self.labels, np.exp(lw - log_z), normalize=True)


def ising_terms(graph, coupling=1.0, field=0.0):
    """Tables for h_edge = -J s_i s_j with s = 1 - 2x; ``field`` adds -h s_i / deg to edges."""
    tables = []
    deg = graph.incident
    for e in graph.hyperedges:
        if len(e) != 2:
            raise ValueError("Ising terms need two-site edges")
        t = np.zeros((2, 2))
        for xi in range(2):
            for xj in range(2):
                si, sj = 1 - 2 * xi, 1 - 2 * xj
                t[xi, xj] = -coupling * si * sj - field * (si / len(deg[e[0]]) + sj / len(deg[e[1]]))
        tables.append(t)
    return tables


def ising_model(graph, beta, coupling=1.0, field=0.0):
    return GibbsModel(graph, ising_terms(graph, coupling, field), beta)


def energy(m, x):
    return m.energy(x)


def exact_distribution(m):
    return m.exact_distribution()
