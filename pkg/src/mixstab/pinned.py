"""Gibbs models with pinning fields on a region B.

A pinned model has energy ``E(x) = sum_a h_a(x_a) + sum_k p_k(x_k)`` and
weight ``exp(-E)``. Inverse temperature is folded into ``h`` at
construction, and every table is shifted so that ``h_a >= 0`` and every
pinning term lying entirely inside B vanishes at the favored configuration.
Shifts only change the partition function by a constant and are recorded.
"""

import math

import numpy as np
from scipy.special import logsumexp

from .exceptions import PreconditionError, ZeroProbabilityError, check_budget
from .gibbs import DiscreteDistribution, GibbsModel, broadcast_term
from .graph import Hypergraph


def _local_index(support, assignment):
    return tuple(int(assignment[v]) for v in support)


class PinnedModel:
    """Interaction terms plus pinning terms that favor one configuration of B.

    Parameters
    ----------
    graph : Hypergraph
        Interaction hypergraph; its ``dims`` give each site's local dimension.
    h_terms : sequence of array_like
        One interaction table per hyperedge, multiplied by ``beta``.
    pinning : sequence of (support, table)
        Pinning terms. A support is a single site or a subset of some
        hyperedge. Entries may be ``+inf``.
    b_region : iterable of int
        The pinned region B.
    favored : mapping or sequence
        Favored value of each B site (a sequence is read in sorted-B order).
    beta : float
        Multiplies the interaction tables only.
    """

    def __init__(self, graph, h_terms, pinning, b_region, favored, beta=1.0):
        if not isinstance(graph, Hypergraph):
            raise TypeError("graph must be a Hypergraph")
        h_terms = list(h_terms)
        if len(h_terms) != len(graph.hyperedges):
            raise ValueError("need one interaction table per hyperedge")
        self.graph = graph
        self.beta = float(beta)
        self.b_sites = tuple(sorted(graph.region(b_region)))
        b_set = frozenset(self.b_sites)
        self.ac_sites = tuple(v for v in range(graph.n_vertices) if v not in b_set)
        if not isinstance(favored, dict):
            favored = dict(zip(self.b_sites, favored))
        if set(favored) != b_set:
            raise ValueError("favored must assign every B site")
        for v, val in favored.items():
            if not 0 <= int(val) < graph.dims[v]:
                raise ValueError(f"favored value {val} out of range at site {v}")
        self.favored = {v: int(favored[v]) for v in self.b_sites}

        h_tables = []
        self.h_shift = 0.0
        for t, e in zip(h_terms, graph.hyperedges):
            arr = self.beta * np.asarray(t, dtype=float).reshape(tuple(graph.dims[v] for v in e))
            if not np.all(np.isfinite(arr)):
                raise ValueError("interaction energies must be finite")
            lo = float(arr.min())
            self.h_shift += lo
            h_tables.append(arr - lo)
        self.h_terms = tuple(h_tables)

        edge_sets = [frozenset(e) for e in graph.hyperedges]
        pins = []
        self.pin_shift = 0.0
        self.pin_raw = []
        for support, table in pinning:
            support = tuple(int(v) for v in support)
            if len(set(support)) != len(support):
                raise ValueError(f"pinning support {support} repeats a site")
            graph.region(support)
            if len(support) > 1 and not any(frozenset(support) <= e for e in edge_sets):
                raise PreconditionError(f"pinning support {support} is not inside a hyperedge")
            arr = np.asarray(table, dtype=float).reshape(tuple(graph.dims[v] for v in support))
            if np.any(np.isnan(arr)) or np.any(arr == -np.inf):
                raise ValueError("pinning energies must be finite or +inf")
            self.pin_raw.append(arr)
            if set(support) <= b_set:
                fav = arr[_local_index(support, self.favored)]
                if not np.isfinite(fav):
                    raise ZeroProbabilityError(f"favored configuration excluded by pinning on {support}")
                arr = arr - fav
                self.pin_shift += float(fav)
            pins.append((support, arr))
        self.pinning = tuple(pins)
        self.pin_raw = tuple(self.pin_raw)

    def __repr__(self):
        return f"PinnedModel(n={self.graph.n_vertices}, B={self.b_sites}, p_min={self.p_min:.4g})"

    @property
    def n(self):
        return self.graph.n_vertices

    @property
    def h_max(self):
        return max((float(t.max()) for t in self.h_terms), default=0.0)

    @property
    def p_min(self):
        """Smallest pinning energy of a non-favored configuration over terms inside B.

        Zero when some B site is not covered by any pinning term inside B.
        """
        b_set = frozenset(self.b_sites)
        covered = set()
        best = math.inf
        for support, arr in self.pinning:
            if not set(support) <= b_set:
                continue
            covered.update(support)
            mask = np.ones(arr.shape, dtype=bool)
            mask[_local_index(support, self.favored)] = False
            if mask.any():
                best = min(best, float(arr[mask].min()))
        if covered != b_set:
            return 0.0
        return best

    @property
    def degree(self):
        return self.graph.max_degree

    @property
    def q_eff(self):
        return max((self.graph.dims[v] for v in self.b_sites), default=1)

    def pinning_supports(self):
        return [s for s, _ in self.pinning]

    def touching_terms(self, sites):
        """(support, table) of every interaction or pinning term meeting ``sites``."""
        sites = frozenset(sites)
        out = [(e, t) for e, t in zip(self.graph.hyperedges, self.h_terms) if sites.intersection(e)]
        out += [(s, t) for s, t in self.pinning if sites.intersection(s)]
        return out

    def all_terms(self):
        return list(zip(self.graph.hyperedges, self.h_terms)) + list(self.pinning)

    def gibbs_model(self):
        """Equivalent GibbsModel at beta = 1 with pinning terms as extra hyperedges."""
        supports = [e for e, _ in self.all_terms()]
        g = Hypergraph(self.n, supports, dims=self.graph.dims)
        return GibbsModel(g, [t for _, t in self.all_terms()], beta=1.0)

    def energy(self, x):
        x = tuple(int(v) for v in x)
        if len(x) != self.n:
            raise ValueError("configuration length mismatch")
        return float(sum(t[tuple(x[v] for v in s)] for s, t in self.all_terms()))

    def energy_table(self):
        if getattr(self, "_energy_table", None) is None:
            check_budget(sum(math.log2(d) for d in self.graph.dims), "pinned enumeration")
            out = np.zeros(self.graph.dims)
            for s, t in self.all_terms():
                out = out + broadcast_term(t, s, self.graph.dims)
            self._energy_table = out
        return self._energy_table

    def exact_distribution(self):
        e = self.energy_table()
        lw = -e
        log_z = logsumexp(lw)
        if not np.isfinite(log_z):
            raise ZeroProbabilityError("every configuration is excluded")
        return DiscreteDistribution(range(self.n), np.exp(lw - log_z), normalize=True)

    def ac_assignments(self):
        """Iterate over every assignment of A and C as dicts."""
        dims = [self.graph.dims[v] for v in self.ac_sites]
        for idx in np.ndindex(*dims):
            yield dict(zip(self.ac_sites, idx))

    def _as_ac(self, x_ac):
        if x_ac is None:
            x_ac = {}
        if not isinstance(x_ac, dict):
            x_ac = dict(zip(self.ac_sites, x_ac))
        missing = set(self.ac_sites) - set(x_ac)
        if missing:
            raise ValueError(f"x_ac does not assign sites {sorted(missing)}")
        return x_ac

    def b_energy(self, x_ac):
        """Energy as a table over the B sites (sorted) for fixed ``x_ac``."""
        x_ac = self._as_ac(x_ac)
        e = self.energy_table()
        index = tuple(slice(None) if v in self.favored else int(x_ac[v]) for v in range(self.n))
        return e[index]

    def favored_index(self):
        return tuple(self.favored[v] for v in self.b_sites)

    def log_z0(self, x_ac):
        """log Z_0: minus the energy with B at its favored configuration."""
        return -float(self.b_energy(x_ac)[self.favored_index()])

    def log_p_tilde(self, x_ac, restrict=None):
        """log of the unnormalized marginal on A and C.

        ``restrict`` optionally lists B sites held at their favored values.
        """
        eb = self.b_energy(x_ac)
        if restrict:
            index = tuple(self.favored[v] if v in restrict else slice(None) for v in self.b_sites)
            eb = eb[index]
        return float(logsumexp(-eb))
