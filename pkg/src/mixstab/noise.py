"""Local stochastic channels, layered processes and the pinning constructions.

A channel on a support ``s`` is a column-stochastic matrix ``T[y, x]`` over
the mixed-radix local configurations of ``s`` (first site most significant).
"""

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import PreconditionError, ZeroProbabilityError, check_budget
from .gibbs import DiscreteDistribution, GibbsModel
from .graph import Hypergraph
from .pinned import PinnedModel

STOCHASTIC_TOL = 1e-12


def _neg_log(t):
    with np.errstate(divide="ignore"):
        return -np.log(t)


def check_stochastic(matrix, tol=STOCHASTIC_TOL):
    m = np.asarray(matrix, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("transition table must be square")
    if np.any(m < -tol) or np.any(np.abs(m.sum(axis=0) - 1.0) > tol):
        raise ValueError("transition table is not column-stochastic")
    return m


def epsilon_decomposition(t):
    """Split ``t = (1 - eps) I + eps N`` with the smallest admissible ``eps``.

    Returns ``(eps, N)``. ``N`` is the identity when ``eps == 0``.
    """
    t = check_stochastic(t)
    k = t.shape[0]
    off = t - np.diag(np.diag(t))
    # off-diagonal column mass avoids cancellation in 1 - T_jj for small eps
    leave = np.clip(off, 0.0, None).sum(axis=0)
    eps = min(float(leave.max()), 1.0)
    if eps <= STOCHASTIC_TOL:
        return 0.0, np.eye(k)
    n = np.clip(off, 0.0, None) / eps
    n[np.diag_indices(k)] = 1.0 - leave / eps
    check_stochastic(n, tol=1e-9)
    return eps, np.clip(n, 0.0, None)


class LocalChannel:
    """Stochastic map acting on the sites in ``support``.

    Parameters
    ----------
    support : sequence of int
    matrix : array_like
        Column-stochastic ``T[y, x]`` of size ``K x K`` with ``K`` the product
        of the local dimensions.
    dims : sequence of int, optional
        Local dimension per support site; inferred as ``K ** (1/|support|)``.
    """

    def __init__(self, support, matrix, dims=None):
        self.support = tuple(int(v) for v in support)
        if not self.support or len(set(self.support)) != len(self.support):
            raise ValueError("support must be a nonempty set of distinct sites")
        self.matrix = check_stochastic(matrix)
        k = self.matrix.shape[0]
        if dims is None:
            q = round(k ** (1.0 / len(self.support)))
            dims = (q,) * len(self.support)
        self.dims = tuple(int(d) for d in dims)
        if math.prod(self.dims) != k:
            raise ValueError("matrix size does not match the support dimensions")
        self.epsilon, self.residual = epsilon_decomposition(self.matrix)

    def __repr__(self):
        return f"LocalChannel(support={self.support}, epsilon={self.epsilon:.4g})"

    def tensor(self):
        """Transition table reshaped to axes (outputs..., inputs...)."""
        return self.matrix.reshape(self.dims + self.dims)

    def relabel(self, mapping):
        return LocalChannel([mapping[v] for v in self.support], self.matrix, self.dims)


def identity_channel(support, q=2):
    support = tuple(support)
    return LocalChannel(support, np.eye(q ** len(support)))


def flip_channel(site, eps, q=2):
    """With probability ``eps`` replace the value by a uniformly chosen different one."""
    if not 0 <= eps <= 1:
        raise ValueError("eps must lie in [0, 1]")
    m = np.full((q, q), eps / (q - 1)) if q > 1 else np.ones((1, 1))
    np.fill_diagonal(m, 1.0 - eps)
    return LocalChannel((site,), m)


def replacement_channel(support, eps, q=2):
    """With probability ``eps`` replace the support by a uniform random configuration."""
    support = tuple(support)
    k = q ** len(support)
    m = (1.0 - eps) * np.eye(k) + eps / k
    return LocalChannel(support, m)


def correlated_flip_channel(support, eps):
    """Binary channel flipping every site of ``support`` together with probability ``eps``."""
    support = tuple(support)
    k = 2 ** len(support)
    m = (1.0 - eps) * np.eye(k)
    m[np.arange(k)[::-1], np.arange(k)] += eps
    return LocalChannel(support, m)


class LayeredProcess:
    """Finite-depth process: layers of channels with vertex-disjoint supports."""

    def __init__(self, layers):
        self.layers = tuple(tuple(layer) for layer in layers)
        for t, layer in enumerate(self.layers):
            seen = set()
            for ch in layer:
                if not isinstance(ch, LocalChannel):
                    raise TypeError("layers must contain LocalChannel objects")
                if seen.intersection(ch.support):
                    raise PreconditionError(f"layer {t} has overlapping supports")
                seen.update(ch.support)

    def __repr__(self):
        return f"LayeredProcess(depth={self.depth}, gates={sum(len(l) for l in self.layers)})"

    @property
    def depth(self):
        return len(self.layers)

    @property
    def epsilon(self):
        return max((ch.epsilon for layer in self.layers for ch in layer), default=0.0)

    def gates(self):
        """(layer index starting at 1, channel) in application order."""
        return [(t + 1, ch) for t, layer in enumerate(self.layers) for ch in layer]

    def sites(self):
        return sorted({v for layer in self.layers for ch in layer for v in ch.support})

    def check_graph(self, g):
        """Raise unless every support lies inside a hyperedge of ``g`` or is a single site."""
        edges = [frozenset(e) for e in g.hyperedges]
        for _, ch in self.gates():
            g.region(ch.support)
            if len(ch.support) > 1 and not any(frozenset(ch.support) <= e for e in edges):
                raise PreconditionError(f"channel support {ch.support} is not inside a hyperedge")
        return self


def single_site_process(sites, eps, q=2, depth=1):
    return LayeredProcess([[flip_channel(v, eps, q) for v in sites] for _ in range(depth)])


def apply_channel(p, ch, labels=None):
    """Apply ``ch`` to the variables ``labels`` (defaults to its support) of ``p``."""
    labels = ch.support if labels is None else tuple(labels)
    axes = p.axes(labels)
    if tuple(p.shape[a] for a in axes) != ch.dims:
        raise ValueError("channel dimensions do not match the distribution")
    k = len(axes)
    t = np.moveaxis(p.table, axes, range(k))
    rest = t.shape[k:]
    out = ch.matrix @ t.reshape(ch.matrix.shape[1], -1)
    out = np.moveaxis(out.reshape(ch.dims + rest), range(k), axes)
    return DiscreteDistribution(p.variables, np.clip(out, 0.0, None), normalize=True)


def apply_process(p, proc, label=None):
    """Exact layer-by-layer action of ``proc``; ``label`` maps sites to variable names."""
    for _, ch in proc.gates():
        labels = ch.support if label is None else tuple(label(v) for v in ch.support)
        p = apply_channel(p, ch, labels)
    return p


def noisy_joint(p, proc, tag="noisy"):
    """Joint distribution of clean variables ``v`` and noisy copies ``(v, tag)``."""
    n = len(p.variables)
    check_budget(2 * sum(math.log2(d) for d in p.shape), "clean+noisy joint")
    table = np.zeros(p.shape + p.shape)
    idx = np.indices(p.shape).reshape(n, -1)
    table[tuple(idx) + tuple(idx)] = p.table.reshape(-1)
    joint = DiscreteDistribution(tuple(p.variables) + tuple((v, tag) for v in p.variables), table)
    return apply_process(joint, proc, label=lambda v: (v, tag))


def _single_site_channels(channels):
    if isinstance(channels, LayeredProcess):
        if channels.depth != 1:
            raise PreconditionError("single-site pinning needs a depth-1 process")
        channels = channels.layers[0]
    if isinstance(channels, dict):
        channels = list(channels.values())
    out = {}
    for ch in channels:
        if len(ch.support) != 1:
            raise PreconditionError("pin_single_site needs single-site channels")
        out[ch.support[0]] = ch
    return out


def pin_single_site(m, channels, b_prime):
    """Posterior of the clean configuration given noisy values ``b_prime`` on B.

    The result carries pinning fields ``p_i(x) = -log T_i(b'_i | x)`` on every
    B site; sites without a channel are pinned by the identity (hard pin).
    """
    chans = _single_site_channels(channels)
    b_prime = {int(k): int(v) for k, v in b_prime.items()}
    g = m.graph
    pinning = []
    favored = {}
    for i in sorted(b_prime):
        q = g.dims[i]
        ch = chans.get(i, identity_channel((i,), q))
        if ch.dims != (q,):
            raise ValueError(f"channel on site {i} has the wrong dimension")
        p = _neg_log(ch.matrix[b_prime[i], :])
        if not np.any(np.isfinite(p)):
            raise ZeroProbabilityError(f"observed value {b_prime[i]} at site {i} has zero likelihood")
        best = np.flatnonzero(p == p.min())
        favored[i] = b_prime[i] if b_prime[i] in best else int(best[0])
        pinning.append(((i,), p))
    model = PinnedModel(g, m.terms, pinning, b_prime.keys(), favored, beta=m.beta)
    model.observed = dict(b_prime)
    return model


@dataclass(frozen=True)
class SpacetimeTerm:
    kind: str
    layer: int
    sites: tuple


class SpacetimeModel(GibbsModel):
    """Gibbs model on (site, time) variables produced by :func:`spacetime_model`.

    Labels are ``(site, t)``; B sites have no variable at the final time.
    """

    def __init__(self, graph, terms, labels, base, proc, b_final, meta):
        super().__init__(graph, terms, beta=1.0, labels=labels)
        self.base = base
        self.process = proc
        self.b_final = dict(b_final)
        self.meta = tuple(meta)
        self.index = {lab: k for k, lab in enumerate(labels)}

    @property
    def depth(self):
        return self.process.depth


def spacetime_model(m, proc, b_final):
    """Posterior over all space-time variables given the final values on B."""
    d = proc.depth
    if d < 1:
        raise PreconditionError("process depth must be at least 1")
    g = m.graph
    proc.check_graph(g)
    b_final = {int(k): int(v) for k, v in b_final.items()}
    g.region(b_final)
    labels = [(i, t) for t in range(d + 1) for i in range(g.n_vertices) if not (t == d and i in b_final)]
    index = {lab: k for k, lab in enumerate(labels)}
    dims = [g.dims[i] for i, _ in labels]
    edges, terms, meta = [], [], []

    for e, h in zip(g.hyperedges, m.terms):
        edges.append(tuple(index[(i, 0)] for i in e))
        terms.append(m.beta * h)
        meta.append(SpacetimeTerm("h", 0, e))

    for t, layer in enumerate(proc.layers, start=1):
        covered = set()
        gates = [(ch.support, _neg_log(ch.tensor())) for ch in layer]
        for ch in layer:
            covered.update(ch.support)
        for i in range(g.n_vertices):
            if i not in covered:
                q = g.dims[i]
                gates.append(((i,), np.where(np.eye(q, dtype=bool), 0.0, np.inf)))
        for support, table in gates:
            k = len(support)
            # table axes: outputs at t, then inputs at t-1
            index_out = []
            for pos, i in enumerate(support):
                if t == d and i in b_final:
                    index_out.append(b_final[i])
                else:
                    index_out.append(slice(None))
            sub = table[tuple(index_out)]
            free_out = [i for i in support if not (t == d and i in b_final)]
            vars_ = [index[(i, t)] for i in free_out] + [index[(i, t - 1)] for i in support]
            edges.append(tuple(vars_))
            terms.append(sub)
            kind = "gate" if k > 1 or np.isfinite(table).all() else "id"
            meta.append(SpacetimeTerm(kind, t, tuple(support)))

    st_graph = Hypergraph(len(labels), edges, dims=dims)
    model = SpacetimeModel(st_graph, terms, labels, m, proc, b_final, meta)
    if not np.isfinite(model.log_partition_function()):
        raise ZeroProbabilityError("observed final configuration has zero likelihood")
    return model


def bayes_posterior_spacetime(m, proc, b_final):
    """Oracle: P(all slices except B at the last time | x_{B,d}) by forward enumeration."""
    d = proc.depth
    g = m.graph
    p = m.exact_distribution()
    labels = [(i, 0) for i in range(g.n_vertices)]
    joint = DiscreteDistribution(labels, p.table)
    for t, layer in enumerate(proc.layers, start=1):
        # append a copy of slice t-1 as slice t, then apply the layer to slice t
        n_old = len(joint.variables)
        shape = joint.shape
        new_labels = [(i, t) for i in range(g.n_vertices)]
        src = [joint.variables.index((i, t - 1)) for i in range(g.n_vertices)]
        table = np.zeros(shape + tuple(g.dims))
        idx = np.indices(shape).reshape(n_old, -1)
        table[tuple(idx) + tuple(idx[s] for s in src)] = joint.table.reshape(-1)
        joint = DiscreteDistribution(joint.variables + tuple(new_labels), table)
        for ch in layer:
            joint = apply_channel(joint, ch, [(i, t) for i in ch.support])
    cond = [(i, d) for i in sorted(b_final)]
    return joint.conditional(cond, [b_final[i] for i in sorted(b_final)])


def _super_spin_slices(g, d, b_final):
    """Slice times and decoded values of each super-spin code."""
    out = {}
    for i in range(g.n_vertices):
        q = g.dims[i]
        times = tuple(range(d)) if i in b_final else tuple(range(d + 1))
        codes = np.array(list(np.ndindex(*([q] * len(times)))), dtype=int).reshape(-1, len(times))
        if i in b_final:
            codes = (codes + b_final[i]) % q
        out[i] = (times, codes)
    return out


def _lift(term_vars, table, sites, slices, g):
    """Table over super-spins of ``sites`` from a table over (site, t) variables."""
    dims = [len(slices[i][1]) for i in sites]
    grids = np.indices(dims).reshape(len(sites), -1)
    pos = {i: k for k, i in enumerate(sites)}
    idx = []
    for i, t in term_vars:
        times, codes = slices[i]
        idx.append(codes[grids[pos[i]], times.index(t)])
    return table[tuple(idx)].reshape(dims)


def block_spins(st):
    """Block each site's time slices into one super-spin.

    B super-spins are encoded relative to the observed final values, so the
    all-aligned configuration is local state 0. Multi-site gate terms are
    attached to the first hyperedge containing their support; single-site
    gates and identity constraints become one pinning term per site.
    """
    g = st.base.graph
    d = st.depth
    b_final = st.b_final
    slices = _super_spin_slices(g, d, b_final)
    dims = [len(slices[i][1]) for i in range(g.n_vertices)]
    check_budget(sum(math.log2(x) for x in dims), "blocked model")
    bg = Hypergraph(g.n_vertices, g.hyperedges, dims=dims)

    h_terms = [np.zeros(tuple(dims[v] for v in e)) for e in g.hyperedges]
    pin_tables = {}
    pin_vars = {}
    edge_sets = [frozenset(e) for e in g.hyperedges]
    for table, edge, info in zip(st.terms, st.graph.hyperedges, st.meta):
        term_vars = [st.labels[k] for k in edge]
        if info.kind == "h":
            k = g.hyperedges.index(info.sites)
            h_terms[k] = h_terms[k] + _lift(term_vars, table, g.hyperedges[k], slices, g)
            continue
        if len(info.sites) == 1:
            support = info.sites
        else:
            support = next(e for e, s in zip(g.hyperedges, edge_sets) if frozenset(info.sites) <= s)
        lifted = _lift(term_vars, table, support, slices, g)
        pin_tables[support] = pin_tables.get(support, 0.0) + lifted
        pin_vars.setdefault(support, set()).update(term_vars)

    pinning = list(pin_tables.items())
    favored = {i: 0 for i in b_final}
    model = PinnedModel(bg, h_terms, pinning, b_final.keys(), favored, beta=1.0)
    model.super_spin_slices = slices
    model.pin_variables = {s: frozenset(v) for s, v in pin_vars.items()}
    model.depth = d
    model.observed = dict(b_final)
    model.process = st.process
    return model


def blocked_to_spacetime(p, blocked, st):
    """Re-express a distribution over blocked super-spins on space-time labels."""
    n = blocked.n
    slices = blocked.super_spin_slices
    table = np.zeros(tuple(st.graph.dims))
    for code in np.ndindex(*p.shape):
        w = p.table[code]
        if w == 0:
            continue
        x = [0] * len(st.labels)
        for i in range(n):
            times, codes = slices[i]
            for pos, t in enumerate(times):
                x[st.index[(i, t)]] = codes[code[i], pos]
        table[tuple(x)] += w
    return DiscreteDistribution(st.labels, table)


def pinning_bounds_check(blocked, eps=None):
    """Check the aligned and misaligned pinning bounds on terms inside B.

    For each pinning term inside B, the aligned configuration must cost at
    most ``-d log(1 - eps)`` and any configuration misaligned on a time slice
    the term depends on must cost at least ``-log eps``. Energies are the raw
    values before the favored-configuration shift.
    """
    d = blocked.depth
    if eps is None:
        eps = blocked.process.epsilon
    b_set = set(blocked.b_sites)
    upper = -d * math.log1p(-eps) if eps < 1 else math.inf
    lower = -math.log(eps) if eps > 0 else math.inf
    rows = []
    ok = True
    for (support, _), raw in zip(blocked.pinning, blocked.pin_raw):
        if not set(support) <= b_set:
            continue
        deps = blocked.pin_variables.get(support, frozenset())
        slices = blocked.super_spin_slices
        aligned_cost = float(raw[(0,) * len(support)])
        worst_excited = math.inf
        for code in np.ndindex(*raw.shape):
            mis = False
            for k, i in enumerate(support):
                times, codes = slices[i]
                for pos, t in enumerate(times):
                    if (i, t) in deps and codes[code[k], pos] != blocked.observed[i]:
                        mis = True
            if mis:
                worst_excited = min(worst_excited, float(raw[code]))
        good = aligned_cost <= upper + 1e-12 and worst_excited >= lower - 1e-12
        ok = ok and good
        rows.append(
            {
                "support": support,
                "aligned": aligned_cost,
                "aligned_bound": upper,
                "excited_min": worst_excited,
                "excited_bound": lower,
                "ok": good,
            }
        )
    return ok, rows
