"""Polymer and cluster expansion for pinned Gibbs models.

Sites of B that leave their favored value form ``D``; the connected
components of ``D`` are polymers. ``log P~(x_AC) = log Z_0 + log Xi`` with
``Xi = sum_D Z_D``, and ``log Xi`` expands as a sum over connected clusters
weighted by Ursell coefficients. Two polymers are incompatible when they
overlap or share a hyperedge; the cluster graph joins incompatible copies.
"""

import itertools
import math
from collections import Counter
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.optimize import brentq

from .exceptions import BudgetExceededError, PreconditionError, ZeroProbabilityError, check_budget
from .gibbs import mutual_information
from .graph import INF, boundary_set, graph_distance

CLUSTER_LIMIT = 2_000_000


@dataclass(frozen=True, order=True)
class Polymer:
    """Connected set of B sites; ``|gamma|`` is its site count."""

    sites: tuple

    def __post_init__(self):
        sites = tuple(sorted(int(v) for v in self.sites))
        if not sites:
            raise ValueError("a polymer needs at least one site")
        object.__setattr__(self, "sites", sites)

    def __len__(self):
        return len(self.sites)

    @property
    def weight(self):
        return len(self.sites)

    def check(self, g, b=None):
        if not g.is_connected(self.sites):
            raise PreconditionError(f"polymer {self.sites} is not connected")
        if b is not None and not set(self.sites) <= set(b):
            raise PreconditionError(f"polymer {self.sites} leaves B")
        return self


def incompatible(g, p1, p2):
    """Polymers overlapping or joined by a hyperedge."""
    return g.touches(p1.sites, p2.sites)


@dataclass(frozen=True)
class Cluster:
    """Multiset of distinct polymers with multiplicities."""

    entries: tuple

    def __post_init__(self):
        entries = tuple(sorted((p, int(mu)) for p, mu in self.entries))
        if any(mu < 1 for _, mu in entries):
            raise ValueError("multiplicities must be positive")
        if len({p for p, _ in entries}) != len(entries):
            raise ValueError("cluster polymers must be distinct")
        object.__setattr__(self, "entries", entries)

    @classmethod
    def from_polymers(cls, polymers):
        return cls(tuple(Counter(polymers).items()))

    @property
    def weight(self):
        return sum(mu * p.weight for p, mu in self.entries)

    @property
    def size(self):
        return sum(mu for _, mu in self.entries)

    @property
    def factorial(self):
        return math.prod(math.factorial(mu) for _, mu in self.entries)

    def copies(self):
        return [p for p, mu in self.entries for _ in range(mu)]

    def graph_masks(self, g):
        """Adjacency bitmasks of the cluster graph (one vertex per copy)."""
        cs = self.copies()
        m = len(cs)
        masks = [0] * m
        for i in range(m):
            for j in range(i + 1, m):
                if incompatible(g, cs[i], cs[j]):
                    masks[i] |= 1 << j
                    masks[j] |= 1 << i
        return masks


def _connected_mask(masks):
    m = len(masks)
    if m == 0:
        return False
    seen = 1
    frontier = 1
    while frontier:
        nxt = 0
        for i in range(m):
            if frontier >> i & 1:
                nxt |= masks[i]
        frontier = nxt & ~seen
        seen |= nxt
    return seen == (1 << m) - 1


def ursell_from_masks(masks):
    """Signed count of connected spanning subgraphs, by subset recursion.

    With ``f(S) = 1`` when ``S`` is an independent set (the signed sum over all
    spanning subgraphs of the induced graph) and ``f = sum_T c(T) f(S - T)``
    over blocks ``T`` holding the lowest vertex of ``S``, ``c`` is the
    connected part.
    """
    m = len(masks)
    if m == 0:
        raise PreconditionError("empty cluster graph")
    check_budget(1.59 * m, "Ursell recursion")
    full = (1 << m) - 1
    f = [0] * (full + 1)
    for s in range(full + 1):
        ok = 1
        t = s
        while t:
            i = (t & -t).bit_length() - 1
            if masks[i] & s:
                ok = 0
                break
            t &= t - 1
        f[s] = ok
    c = [0] * (full + 1)
    for s in range(1, full + 1):
        low = s & -s
        rest = s ^ low
        total = f[s]
        sub = rest
        while True:
            t = sub | low
            if t != s:
                total -= c[t] * f[s ^ t]
            if sub == 0:
                break
            sub = (sub - 1) & rest
        c[s] = total
    return c[full]


def ursell(w, g):
    """Ursell coefficient of cluster ``w``; the cluster graph must be connected."""
    masks = w.graph_masks(g)
    if not _connected_mask(masks):
        raise PreconditionError("cluster graph is disconnected")
    if len(masks) == 1:
        return 1
    return ursell_from_masks(masks)


def enumerate_polymers(g, b, k_max):
    """All connected subsets of ``b`` with at most ``k_max`` sites, each once."""
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    b = g.region(b)
    level = {frozenset([v]) for v in b}
    found = set(level)
    for _ in range(1, k_max):
        nxt = set()
        for s in level:
            for v in s:
                for w in g.neighbors[v]:
                    if w in b and w not in s:
                        nxt.add(s | {w})
        nxt -= found
        found |= nxt
        level = nxt
        if not level:
            break
    return sorted((Polymer(tuple(s)) for s in found), key=lambda p: (p.weight, p.sites))


def count_polymers_at(g, b, site, k):
    """Number of polymers of size ``k`` inside ``b`` containing ``site``."""
    return sum(1 for p in enumerate_polymers(g, b, k) if p.weight == k and site in p.sites)


# --- weights -----------------------------------------------------------------


def _nonfavored(m, v):
    return [x for x in range(m.graph.dims[v]) if x != m.favored[v]]


def polymer_weight(m, g, x_ac):
    """Z_gamma from the terms touching ``gamma`` only; ``Z_empty = 1``."""
    sites = tuple(g.sites) if isinstance(g, Polymer) else tuple(sorted(g))
    if not sites:
        return 1.0
    if not set(sites) <= set(m.b_sites):
        raise PreconditionError("polymer must lie inside B")
    x_ac = m._as_ac(x_ac)
    fixed = dict(m.favored)
    fixed.update({v: int(x_ac[v]) for v in m.ac_sites})
    dims = tuple(m.graph.dims[v] for v in sites)
    pos = {v: k for k, v in enumerate(sites)}
    e = np.zeros(dims)
    for support, table in m.touching_terms(sites):
        index = tuple(slice(None) if v in pos else fixed[v] for v in support)
        sub = table[index]
        free = [v for v in support if v in pos]
        order = np.argsort([pos[v] for v in free])
        sub = np.transpose(sub, order)
        shape = [1] * len(sites)
        for v in free:
            shape[pos[v]] = m.graph.dims[v]
        e = e + sub.reshape(shape)
    e_fav = e[tuple(m.favored[v] for v in sites)]
    if not np.isfinite(e_fav):
        raise ZeroProbabilityError("favored configuration excluded for this x_AC")
    block = e[np.ix_(*[_nonfavored(m, v) for v in sites])]
    with np.errstate(over="ignore"):
        return float(np.exp(-(block - e_fav)).sum())


def global_zd(m, d, x_ac):
    """Z_D from the full energy: excited-D sum over the all-favored weight."""
    d = frozenset(d.sites if isinstance(d, Polymer) else d)
    if not d <= set(m.b_sites):
        raise PreconditionError("D must lie inside B")
    eb = m.b_energy(x_ac)
    fav = m.favored_index()
    if not np.isfinite(eb[fav]):
        raise ZeroProbabilityError("favored configuration excluded for this x_AC")
    return _zd_from_table(m, eb, d)


def _zd_from_table(m, eb, d):
    idx = [(_nonfavored(m, v) if v in d else [m.favored[v]]) for v in m.b_sites]
    block = eb[np.ix_(*idx)]
    return float(np.exp(-(block - eb[m.favored_index()])).sum())


def zd_delta(m):
    """delta = p_min / deg - deg h_max - log(q_eff - 1)."""
    deg = max(m.degree, 1)
    qe = m.q_eff
    log_q = math.log(qe - 1) if qe > 1 else -math.inf
    return m.p_min / deg - deg * m.h_max - log_q


def zd_exponential_bound_check(m):
    """Check ``|Z_D| <= exp(-delta |D|)`` for every nonempty D in B and every x_AC.

    Returns ``(ok, worst)`` with ``worst = max |Z_D| exp(delta |D|)``.
    """
    check_budget(len(m.b_sites), "subsets of B")
    delta = zd_delta(m)
    worst = 0.0
    subsets = [
        frozenset(s) for k in range(1, len(m.b_sites) + 1) for s in itertools.combinations(m.b_sites, k)
    ]
    for x_ac in m.ac_assignments():
        eb = m.b_energy(x_ac)
        if not np.isfinite(eb[m.favored_index()]):
            continue
        for d in subsets:
            z = _zd_from_table(m, eb, d)
            if z == 0.0:
                continue
            worst = max(worst, z * math.exp(delta * len(d)) if delta < math.inf else math.inf)
    return worst <= 1.0 + 1e-12, worst


def z_factorization_check(m, d1, d2, tol=1e-12):
    """Check ``Z_{D1 u D2} = Z_{D1} Z_{D2}`` for every x_AC; D1, D2 must be disconnected."""
    s1 = frozenset(d1.sites if isinstance(d1, Polymer) else d1)
    s2 = frozenset(d2.sites if isinstance(d2, Polymer) else d2)
    if s1 and s2 and m.graph.touches(s1, s2):
        raise PreconditionError("D1 and D2 are not disconnected")
    worst = 0.0
    for x_ac in m.ac_assignments():
        eb = m.b_energy(x_ac)
        if not np.isfinite(eb[m.favored_index()]):
            continue
        z12 = _zd_from_table(m, eb, s1 | s2)
        z1 = _zd_from_table(m, eb, s1)
        z2 = _zd_from_table(m, eb, s2)
        worst = max(worst, abs(z12 - z1 * z2))
    return worst <= tol, worst


def disconnected_splits(m):
    """Every (D1, D2) with D = D1 u D2 in B, D1 a union of components, both nonempty."""
    g = m.graph
    out = []
    for k in range(2, len(m.b_sites) + 1):
        for d in itertools.combinations(m.b_sites, k):
            comps = g.components(d)
            if len(comps) < 2:
                continue
            for r in range(1, len(comps)):
                for pick in itertools.combinations(range(len(comps)), r):
                    if 0 not in pick:
                        continue
                    d1 = frozenset().union(*(comps[i] for i in pick))
                    out.append((d1, frozenset(d) - d1))
    return out


# --- clusters ----------------------------------------------------------------


@dataclass
class ClusterTerm:
    cluster: Cluster
    coefficient: float
    category: str


def neighbors_in_b(m, region):
    """B sites sharing a hyperedge with ``region``."""
    region = frozenset(region)
    return frozenset(v for v in m.b_sites if m.graph.neighbors[v] & region)


def _category(hit_a, hit_c):
    if hit_a and hit_c:
        return "AC"
    if hit_a:
        return "A"
    if hit_c:
        return "C"
    return "0"


def enumerate_clusters(m, t, w_max):
    """Connected clusters of polymers in B with weight at most ``w_max``.

    Each term carries ``phi(G_W) / W!`` and its class: ``"0"`` (no polymer
    touches A or C), ``"A"``, ``"C"`` or ``"AC"`` (polymers touching both).
    """
    g = m.graph
    polys = enumerate_polymers(g, m.b_sites, w_max)
    na = neighbors_in_b(m, t.A)
    nc = neighbors_in_b(m, t.C)
    inc = [[incompatible(g, p, r) for r in polys] for p in polys]
    out = []
    count = 0

    def rec(start, chosen, weight):
        nonlocal count
        if chosen:
            idx = chosen
            masks = [0] * len(idx)
            for i in range(len(idx)):
                for j in range(i + 1, len(idx)):
                    if inc[idx[i]][idx[j]]:
                        masks[i] |= 1 << j
                        masks[j] |= 1 << i
            if _connected_mask(masks):
                w = Cluster.from_polymers([polys[i] for i in idx])
                phi = 1 if len(idx) == 1 else ursell_from_masks(masks)
                hit_a = any(na.intersection(polys[i].sites) for i in idx)
                hit_c = any(nc.intersection(polys[i].sites) for i in idx)
                out.append(ClusterTerm(w, phi / w.factorial, _category(hit_a, hit_c)))
        for k in range(start, len(polys)):
            pw = polys[k].weight
            if weight + pw > w_max:
                break
            count += 1
            if count > CLUSTER_LIMIT:
                raise BudgetExceededError(f"more than {CLUSTER_LIMIT} cluster candidates")
            chosen.append(k)
            rec(k, chosen, weight + pw)
            chosen.pop()

    rec(0, [], 0)
    out.sort(key=lambda c: (c.cluster.weight, c.cluster.entries))
    return out


@dataclass
class KPCertificate:
    a: float
    b: float
    satisfied: bool
    margin: float
    worst_polymer: Polymer = None


@dataclass
class ExpansionReport:
    """Partial sums of the cluster expansion at one x_AC, indexed by weight 1..w_max."""

    w_max: int
    x_ac: dict
    log_z0: float
    exact_log_p: float
    partial_log_p: list
    partial_f: dict
    residuals: list
    min_fac_weight: float
    d_ac: float
    kp: KPCertificate = None
    exact_f: dict = field(default_factory=dict)

    @property
    def truncated_log_p(self):
        return self.partial_log_p[-1]

    @property
    def residual(self):
        return self.residuals[-1]


def exact_free_energy_split(m, t, x_ac):
    """Exact F_0, F_A, F_C, F_AC from four restricted sums over B.

    Holding the B neighbours of A (or C) at their favored values sums only
    the polymer configurations compatible with A (or C).
    """
    na = neighbors_in_b(m, t.A)
    nc = neighbors_in_b(m, t.C)
    log_z0 = m.log_z0(x_ac)
    l_all = m.log_p_tilde(x_ac) - log_z0
    l_na = m.log_p_tilde(x_ac, restrict=na) - log_z0
    l_nc = m.log_p_tilde(x_ac, restrict=nc) - log_z0
    l_none = m.log_p_tilde(x_ac, restrict=na | nc) - log_z0
    return {
        "0": l_none,
        "A": l_nc - l_none,
        "C": l_na - l_none,
        "AC": l_all - l_na - l_nc + l_none,
    }


def exact_f_ac(m, t, x_ac):
    return exact_free_energy_split(m, t, x_ac)["AC"]


def _check_tripartition(m, t):
    if frozenset(t.B) != frozenset(m.b_sites):
        raise PreconditionError("tripartition B differs from the pinned region")
    t.check(m.graph)


class ClusterExpansion:
    """Cluster list for one pinned model and tripartition, evaluated per x_AC."""

    def __init__(self, m, t, w_max):
        if w_max < 1:
            raise ValueError("w_max must be >= 1")
        _check_tripartition(m, t)
        self.model = m
        self.t = t
        self.w_max = int(w_max)
        self.terms = enumerate_clusters(m, t, self.w_max)

    @cached_property
    def polymers(self):
        return sorted({p for c in self.terms for p, _ in c.cluster.entries})

    @cached_property
    def d_ac(self):
        if not self.t.A or not self.t.C:
            return INF
        return graph_distance(self.model.graph, self.t.A, self.t.C)

    @cached_property
    def min_fac_weight(self):
        return min((c.cluster.weight for c in self.terms if c.category == "AC"), default=INF)

    def weights(self, x_ac):
        return {p: polymer_weight(self.model, p, x_ac) for p in self.polymers}

    def evaluate(self, x_ac):
        m = self.model
        x_ac = m._as_ac(x_ac)
        z = self.weights(x_ac)
        by_w = {cat: np.zeros(self.w_max) for cat in ("0", "A", "C", "AC")}
        for c in self.terms:
            val = c.coefficient * math.prod(z[p] ** mu for p, mu in c.cluster.entries)
            by_w[c.category][c.cluster.weight - 1] += val
        partial_f = {cat: list(np.cumsum(v)) for cat, v in by_w.items()}
        log_z0 = m.log_z0(x_ac)
        total = np.cumsum(sum(by_w.values()))
        partial = [log_z0 + float(s) for s in total]
        exact = m.log_p_tilde(x_ac)
        return ExpansionReport(
            w_max=self.w_max,
            x_ac=dict(x_ac),
            log_z0=log_z0,
            exact_log_p=exact,
            partial_log_p=partial,
            partial_f=partial_f,
            residuals=[abs(p - exact) for p in partial],
            min_fac_weight=self.min_fac_weight,
            d_ac=self.d_ac,
            exact_f=exact_free_energy_split(m, self.t, x_ac),
        )


def truncated_log_expansion(m, x_ac, w_max, t):
    """Cluster expansion of log P~ at ``x_ac`` truncated at total weight ``w_max``."""
    return ClusterExpansion(m, t, w_max).evaluate(x_ac)


# --- convergence criteria ----------------------------------------------------


def _relevant_ac(m, p):
    """A/C sites sharing a term with polymer ``p``."""
    sites = set(p.sites)
    out = set()
    for support, _ in m.touching_terms(sites):
        out.update(v for v in support if v not in m.favored)
    return sorted(out)


def max_polymer_weight(m, p):
    """sup over x_AC of |Z_gamma|, maximizing over the adjacent A/C sites only."""
    rel = _relevant_ac(m, p)
    base = {v: 0 for v in m.ac_sites}
    best = 0.0
    for vals in itertools.product(*[range(m.graph.dims[v]) for v in rel]):
        x = dict(base)
        x.update(zip(rel, vals))
        try:
            best = max(best, abs(polymer_weight(m, p, x)))
        except ZeroProbabilityError:
            continue
    return best


def kp_certificate(m, a, b, k_max):
    """Check sum over incompatible gamma' of sup|Z| e^{(a+b)|gamma'|} <= a |gamma|."""
    if a <= 0 or b < 0:
        raise ValueError("need a > 0 and b >= 0")
    g = m.graph
    polys = enumerate_polymers(g, m.b_sites, k_max)
    sup = {p: max_polymer_weight(m, p) for p in polys}
    margin = math.inf
    worst = None
    for p in polys:
        lhs = sum(sup[r] * math.exp((a + b) * r.weight) for r in polys if incompatible(g, p, r))
        slack = a * p.weight - lhs
        if slack < margin:
            margin, worst = slack, p
    return KPCertificate(a=a, b=b, satisfied=margin >= 0, margin=margin, worst_polymer=worst)


def critical_pinning(d_deg, h_max, q_eff):
    """deg (1 + log(1 + deg) + deg h_max + log(q_eff - 1))."""
    if d_deg < 1 or q_eff < 2:
        raise ValueError("need d_deg >= 1 and q_eff >= 2")
    return d_deg * (1.0 + math.log1p(d_deg) + d_deg * h_max + math.log(q_eff - 1))


def threshold_rhs(degree_param, beta, q, depth):
    k = degree_param
    return k * (1.0 + math.log1p(k) + k * beta + depth * math.log(q))


def threshold_lhs(eps, depth):
    return depth * math.log1p(-eps) - math.log(eps)


def critical_epsilon(degree_param, beta, q, depth, tol=1e-12):
    """Root in (0, 1) of ``d log(1 - e) - log e = k (1 + log(1 + k) + k beta + d log q)``.

    The left side is strictly decreasing in ``e``; the root is bracketed in
    ``u = log e``, where the slope is close to -1, so ``tol`` also bounds the
    residual of the defining equation.
    """
    if degree_param <= 0 or q <= 0 or depth <= 0 or beta < 0:
        raise ValueError("arguments must be positive")
    rhs = threshold_rhs(degree_param, beta, q, depth)
    f = lambda u: depth * math.log1p(-math.exp(u)) - u - rhs  # noqa: E731
    lo, hi = -2.0 * rhs - 50.0, -1e-12
    u = brentq(f, lo, hi, xtol=tol, rtol=4 * np.finfo(float).eps, maxiter=500)
    return math.exp(u)


def induced_p_min(eps, depth):
    """Pinning strength implied by noise strength: d log(1 - eps) - log eps."""
    return threshold_lhs(eps, depth)


@dataclass
class FacBoundReport:
    ok: bool
    bound: float
    b: float
    d_ac: float
    boundary: int
    rows: list


def f_ac_bound_check(m, t, w_max):
    """Compare |F_AC| at every x_AC with min(|dA|, |dC|) exp(-(p_min - p_min,c) d_AC)."""
    _check_tripartition(m, t)
    pc = critical_pinning(max(m.degree, 1), m.h_max, m.q_eff)
    if not m.p_min > pc:
        raise PreconditionError(f"p_min = {m.p_min:.4g} does not exceed p_min,c = {pc:.4g}")
    g = m.graph
    b = m.p_min - pc
    d_ac = graph_distance(g, t.A, t.C)
    boundary = min(len(boundary_set(g, t.A)), len(boundary_set(g, t.C)))
    bound = boundary * math.exp(-b * d_ac)
    exp_ = ClusterExpansion(m, t, w_max)
    tail = boundary * math.exp(-b * (w_max + 1))
    rows = []
    ok = True
    for x_ac in m.ac_assignments():
        rep = exp_.evaluate(x_ac)
        exact = rep.exact_f["AC"]
        trunc = rep.partial_f["AC"][-1]
        good = abs(exact) <= bound
        ok = ok and good
        rows.append({"x_ac": x_ac, "exact": exact, "truncated": trunc, "tail": tail, "bound": bound, "ok": good})
    return FacBoundReport(ok=ok, bound=bound, b=b, d_ac=d_ac, boundary=boundary, rows=rows)


def mi_from_f_ac_check(m, t):
    """(MI(A:C), 2 max |F_AC|) for the pinned distribution."""
    p = m.exact_distribution()
    mi = mutual_information(p, sorted(t.A), sorted(t.C))
    fmax = max(abs(exact_f_ac(m, t, x)) for x in m.ac_assignments())
    return mi, 2 * fmax
