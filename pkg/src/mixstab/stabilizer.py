"""Commuting Pauli Hamiltonians, stabilizer distributions and stabilizer-mixing channels.

Generalized Paulis on prime-dimension qudits: ``X|j> = |j+1>``,
``Z|j> = w^j |j>`` with ``w = exp(2 pi i / q)``, so ``Z X = w X Z``. An
operator is stored as ``u^phase X^x Z^z`` with ``u = exp(i pi / q)``.
A term ``(J, P)`` contributes ``-J (P + P^dag) / 2`` to the Hamiltonian,
which is ``-J P`` for qubits.
"""

import itertools
import math
import re

import numpy as np

from .exceptions import BudgetExceededError, NotStabilizerMixingError, PreconditionError, check_budget
from .gibbs import DiscreteDistribution, GibbsModel, cmi
from .graph import Hypergraph
from .noise import LayeredProcess, LocalChannel, apply_process

DENSE_MAX_LOG2 = 10.0
_TERM_RE = re.compile(r"^(\d+):([XYZ])(?:\^(\d+))?$")


def _is_prime(q):
    return q >= 2 and all(q % k for k in range(2, int(math.isqrt(q)) + 1))


class PauliOperator:
    """``u^phase X^x Z^z`` on ``n`` qudits of prime dimension ``q``."""

    def __init__(self, x, z, phase=0, q=2):
        if not _is_prime(q):
            raise ValueError(f"local dimension {q} is not prime")
        self.q = int(q)
        self.x = np.asarray(x, dtype=np.int64) % q
        self.z = np.asarray(z, dtype=np.int64) % q
        if self.x.shape != self.z.shape or self.x.ndim != 1:
            raise ValueError("x and z exponents must be equal-length vectors")
        self.phase = int(phase) % (2 * q)

    @classmethod
    def identity(cls, n, q=2):
        return cls(np.zeros(n, int), np.zeros(n, int), 0, q)

    @classmethod
    def from_string(cls, text, n, q=2):
        """Parse ``"0:X 1:Z^2 3:Y"``; ``Y = i X Z`` is available for qubits only."""
        op = cls.identity(n, q)
        for tok in text.replace(",", " ").split():
            m = _TERM_RE.match(tok)
            if not m:
                raise ValueError(f"cannot parse Pauli factor {tok!r}")
            site, letter, power = int(m.group(1)), m.group(2), int(m.group(3) or 1)
            if not 0 <= site < n:
                raise ValueError(f"site {site} out of range")
            x = np.zeros(n, int)
            z = np.zeros(n, int)
            phase = 0
            if letter == "X":
                x[site] = power
            elif letter == "Z":
                z[site] = power
            else:
                if q != 2:
                    raise ValueError("Y is only defined for qubits")
                if power % 2 == 0:
                    continue
                x[site] = z[site] = 1
                phase = 1
            op = op @ cls(x, z, phase, q)
        return op

    @property
    def n(self):
        return len(self.x)

    @property
    def support(self):
        return tuple(int(i) for i in np.flatnonzero((self.x != 0) | (self.z != 0)))

    def is_identity(self):
        return not self.support

    def vector(self):
        return np.concatenate([self.x, self.z])

    def symplectic(self, other):
        """``k`` with ``self @ other = w^k other @ self``."""
        return int((self.z @ other.x - self.x @ other.z) % self.q)

    def commutes(self, other):
        return self.symplectic(other) == 0

    def __matmul__(self, other):
        if self.q != other.q or self.n != other.n:
            raise ValueError("operators live on different spaces")
        phase = self.phase + other.phase + 2 * int(self.z @ other.x)
        return PauliOperator(self.x + other.x, self.z + other.z, phase, self.q)

    def __pow__(self, k):
        out = PauliOperator.identity(self.n, self.q)
        for _ in range(int(k) % (2 * self.q * self.q) if k >= 0 else 0):
            out = out @ self
        return out

    def __eq__(self, other):
        return (
            isinstance(other, PauliOperator)
            and self.q == other.q
            and np.array_equal(self.x, other.x)
            and np.array_equal(self.z, other.z)
            and self.phase == other.phase
        )

    def __hash__(self):
        return hash((self.q, self.x.tobytes(), self.z.tobytes(), self.phase))

    def __repr__(self):
        parts = []
        for i in self.support:
            if self.x[i]:
                parts.append(f"{i}:X" + (f"^{self.x[i]}" if self.x[i] > 1 else ""))
            if self.z[i]:
                parts.append(f"{i}:Z" + (f"^{self.z[i]}" if self.z[i] > 1 else ""))
        return f"PauliOperator('{' '.join(parts)}', phase={self.phase}, q={self.q})"

    def has_order_q(self):
        """True iff ``P^q`` is the identity (eigenvalues are q-th roots of unity)."""
        xz = int(self.x @ self.z)
        if self.q == 2:
            return (self.phase - xz) % 2 == 0
        return self.phase % 2 == 0

    def local_matrix(self, sites):
        """Dense matrix of the restriction to ``sites`` (first site most significant)."""
        q = self.q
        xm = np.roll(np.eye(q), 1, axis=0)
        zm = np.diag(np.exp(2j * np.pi * np.arange(q) / q))
        out = np.array([[1.0 + 0j]])
        for i in sites:
            f = np.linalg.matrix_power(xm, int(self.x[i])) @ np.linalg.matrix_power(zm, int(self.z[i]))
            out = np.kron(out, f)
        return np.exp(1j * np.pi * self.phase / q) * out

    def dense(self):
        check_budget(2 * self.n * math.log2(self.q), "dense Pauli")
        return self.local_matrix(range(self.n))


def _rank_mod_q(rows, q):
    """Row-reduce over GF(q); returns indices of rows independent of earlier ones."""
    basis = []
    pivots = []
    chosen = []
    for k, r in enumerate(rows):
        v = np.array(r, dtype=np.int64) % q
        for b, p in zip(basis, pivots):
            if v[p]:
                v = (v - v[p] * b) % q
        nz = np.flatnonzero(v)
        if len(nz) == 0:
            continue
        p = int(nz[0])
        v = (v * pow(int(v[p]), q - 2, q)) % q
        for i, b in enumerate(basis):
            if b[p]:
                basis[i] = (b - b[p] * v) % q
        basis.append(v)
        pivots.append(p)
        chosen.append(k)
    return chosen


def _solve_mod_q(gen_rows, target, q):
    """Coefficients ``c`` with ``sum_j c_j gen_rows[j] = target`` mod q, or None."""
    g = np.array(gen_rows, dtype=np.int64).T % q
    t = np.array(target, dtype=np.int64) % q
    aug = np.concatenate([g, t[:, None]], axis=1)
    rows, cols = g.shape
    r = 0
    piv = []
    for c in range(cols):
        nz = [i for i in range(r, rows) if aug[i, c] % q]
        if not nz:
            continue
        i = nz[0]
        aug[[r, i]] = aug[[i, r]]
        aug[r] = (aug[r] * pow(int(aug[r, c]), q - 2, q)) % q
        for i in range(rows):
            if i != r and aug[i, c]:
                aug[i] = (aug[i] - aug[i, c] * aug[r]) % q
        piv.append(c)
        r += 1
    if np.any(aug[r:, -1] % q):
        return None
    sol = np.zeros(cols, dtype=np.int64)
    for i, c in enumerate(piv):
        sol[c] = aug[i, -1]
    return sol


class StabilizerHamiltonian:
    """Commuting Pauli terms and a generating set for their eigenspace labels.

    Parameters
    ----------
    n : int
    terms : sequence of (coefficient, PauliOperator)
    q : int
        Prime local dimension.
    generators : sequence of PauliOperator, optional
        Independent commuting Paulis whose group contains every term up to a
        phase. By default the first independent subset of the terms in order.
    """

    def __init__(self, n, terms, q=2, generators=None):
        if not _is_prime(q):
            raise ValueError(f"local dimension {q} is not prime")
        self.n = int(n)
        self.q = int(q)
        self.terms = tuple((float(c), p) for c, p in terms)
        for _, p in self.terms:
            if p.q != q or p.n != n:
                raise ValueError("term lives on a different space")
            if p.is_identity():
                raise ValueError("identity terms are not allowed")
            if not p.has_order_q():
                raise ValueError(f"term {p} does not satisfy P^q = I")
        self.graph = Hypergraph(n, [p.support for _, p in self.terms], q=q)
        if not check_commuting(self):
            raise PreconditionError("Hamiltonian terms do not commute")
        if generators is None:
            idx = _rank_mod_q([p.vector() for _, p in self.terms], q)
            generators = [self.terms[k][1] for k in idx]
        self.generators = tuple(generators)
        for g in self.generators:
            if not g.has_order_q():
                raise ValueError(f"generator {g} does not satisfy P^q = I")
        if len(_rank_mod_q([g.vector() for g in self.generators], q)) != len(self.generators):
            raise PreconditionError("generators are not independent")
        for g in self.generators:
            for h in self.generators:
                if not g.commutes(h):
                    raise PreconditionError("generators do not commute")
            for _, p in self.terms:
                if not g.commutes(p):
                    raise PreconditionError("generators do not commute with the terms")
        self.expansions = tuple(self._expand(p) for _, p in self.terms)

    def __repr__(self):
        return f"StabilizerHamiltonian(n={self.n}, terms={len(self.terms)}, generators={self.n_labels})"

    @property
    def n_labels(self):
        return len(self.generators)

    @property
    def rank(self):
        """Common rank R of the joint eigenspace projectors."""
        return self.q ** (self.n - self.n_labels)

    def _expand(self, p):
        c = _solve_mod_q([g.vector() for g in self.generators], p.vector(), self.q)
        if c is None:
            raise PreconditionError(f"term {p} is not generated by the generators")
        prod = PauliOperator.identity(self.n, self.q)
        for g, k in zip(self.generators, c):
            prod = prod @ (g ** int(k))
        diff = (p.phase - prod.phase) % (2 * self.q)
        if diff % 2:
            raise PreconditionError("term phase is not a power of w times the generator product")
        return c, diff // 2

    def dependency_sets(self):
        return [tuple(int(j) for j in np.flatnonzero(c)) for c, _ in self.expansions]

    def term_energy_table(self, k):
        """h_a over the labels of the generators term ``k`` depends on."""
        coef, _ = self.terms[k]
        c, m = self.expansions[k]
        dep = np.flatnonzero(c)
        q = self.q
        table = np.zeros((q,) * len(dep))
        for s in np.ndindex(*table.shape):
            power = (m + int(np.dot(c[dep], s))) % q
            table[s] = -coef * math.cos(2 * math.pi * power / q)
        return table

    def generator_supports(self):
        return [g.support for g in self.generators]

    def dual_graph(self):
        """One vertex per generator; one hyperedge per term, joining generators sharing its support."""
        edges = []
        for _, p in self.terms:
            s = set(p.support)
            e = tuple(j for j, g in enumerate(self.generators) if s.intersection(g.support))
            if e:
                edges.append(e)
        return Hypergraph(self.n_labels, edges, q=self.q)


def check_commuting(h):
    terms = [p for _, p in h.terms]
    return all(a.commutes(b) for a, b in itertools.combinations(terms, 2))


class StabilizerDistribution:
    """Classical Gibbs distribution over generator labels."""

    def __init__(self, h, beta):
        self.hamiltonian = h
        self.beta = float(beta)
        deps = h.dependency_sets()
        graph = Hypergraph(h.n_labels, deps, q=h.q)
        self.model = GibbsModel(graph, [h.term_energy_table(k) for k in range(len(deps))], beta)
        self.dual_graph = h.dual_graph()

    def distribution(self):
        return self.model.exact_distribution()


def stabilizer_distribution(h, beta):
    return StabilizerDistribution(h, beta)


def pauli_ising(g, coupling=1.0, single_site_generators=False):
    """Classical Ising model as Z Z terms on the edges of ``g`` (qubits)."""
    n = g.n_vertices
    terms = []
    for e in g.hyperedges:
        z = np.zeros(n, int)
        z[list(e)] = 1
        terms.append((coupling, PauliOperator(np.zeros(n, int), z)))
    gens = None
    if single_site_generators:
        gens = []
        for i in range(n):
            z = np.zeros(n, int)
            z[i] = 1
            gens.append(PauliOperator(np.zeros(n, int), z))
    return StabilizerHamiltonian(n, terms, 2, gens)


def cluster_chain(n, coupling=1.0):
    """Open cluster-state chain: X_0 Z_1, Z_{i-1} X_i Z_{i+1}, Z_{n-2} X_{n-1}."""
    if n < 2:
        raise ValueError("need at least two qubits")
    terms = []
    for i in range(n):
        x = np.zeros(n, int)
        z = np.zeros(n, int)
        x[i] = 1
        if i > 0:
            z[i - 1] = 1
        if i < n - 1:
            z[i + 1] = 1
        terms.append((coupling, PauliOperator(x, z)))
    return StabilizerHamiltonian(n, terms, 2)


def toric_edge(i, j, direction, L):
    """Qubit index of the horizontal (0) or vertical (1) edge leaving vertex (i, j)."""
    return 2 * ((i % L) * L + (j % L)) + direction


def toric_patch(L, coupling=1.0):
    """Toric code on an L x L torus: star (X) and plaquette (Z) terms, 2 L^2 qubits."""
    if L < 2:
        raise ValueError("L must be at least 2")
    n = 2 * L * L
    terms = []
    for i in range(L):
        for j in range(L):
            x = np.zeros(n, int)
            for e in (toric_edge(i, j, 0, L), toric_edge(i, j - 1, 0, L), toric_edge(i, j, 1, L), toric_edge(i - 1, j, 1, L)):
                x[e] = 1
            terms.append((coupling, PauliOperator(x, np.zeros(n, int))))
    for i in range(L):
        for j in range(L):
            z = np.zeros(n, int)
            for e in (toric_edge(i, j, 0, L), toric_edge(i + 1, j, 0, L), toric_edge(i, j, 1, L), toric_edge(i, j + 1, 1, L)):
                z[e] = 1
            terms.append((coupling, PauliOperator(np.zeros(n, int), z)))
    return StabilizerHamiltonian(n, terms, 2)


# --- dense verification path -------------------------------------------------


def _check_dense(n, q):
    if n * math.log2(q) > DENSE_MAX_LOG2 + 1e-9:
        raise BudgetExceededError(f"dense check on {n} qudits exceeds 2^{DENSE_MAX_LOG2:g} dimensions")


def dense_hamiltonian(h):
    _check_dense(h.n, h.q)
    dim = h.q**h.n
    out = np.zeros((dim, dim), dtype=complex)
    for c, p in h.terms:
        m = p.dense()
        out -= 0.5 * c * (m + m.conj().T)
    return out


def gibbs_state(h, beta):
    w, v = np.linalg.eigh(dense_hamiltonian(h))
    lw = -beta * w
    lw -= lw.max()
    p = np.exp(lw)
    p /= p.sum()
    return (v * p) @ v.conj().T


def label_projector(h, s):
    """Pi_s = prod_j (1/q) sum_k w^{-k s_j} g_j^k."""
    _check_dense(h.n, h.q)
    q = h.q
    dim = q**h.n
    out = np.eye(dim, dtype=complex)
    for g, sj in zip(h.generators, s):
        gm = g.dense()
        proj = np.zeros((dim, dim), dtype=complex)
        gk = np.eye(dim, dtype=complex)
        for k in range(q):
            proj += np.exp(-2j * np.pi * k * sj / q) * gk
            gk = gk @ gm
        out = out @ (proj / q)
    return out


def all_labels(h):
    return list(np.ndindex(*([h.q] * h.n_labels)))


def dense_label_distribution(h, rho):
    """Oracle: Tr[Pi_s rho] for every label, as a DiscreteDistribution."""
    table = np.zeros((h.q,) * h.n_labels)
    for s in all_labels(h):
        table[s] = np.real(np.trace(label_projector(h, s) @ rho))
    return DiscreteDistribution(range(h.n_labels), np.clip(table, 0, None), normalize=True)


def reconstruct_state(h, p):
    """sum_s P(s) Pi_s / R."""
    dim = h.q**h.n
    out = np.zeros((dim, dim), dtype=complex)
    for s in all_labels(h):
        w = p.table[s]
        if w:
            out += w * label_projector(h, s)
    return out / h.rank


def trace_norm(a):
    return float(np.abs(np.linalg.eigvalsh((a + a.conj().T) / 2)).sum())


def check_density_matrix(rho, tol=1e-10):
    if np.abs(rho - rho.conj().T).max() > tol:
        raise ValueError("density matrix is not Hermitian")
    if abs(np.trace(rho) - 1) > tol:
        raise ValueError("density matrix does not have unit trace")
    if np.linalg.eigvalsh((rho + rho.conj().T) / 2).min() < -tol:
        raise ValueError("density matrix is not positive semidefinite")
    return rho


def partial_trace(rho, keep, n, q):
    keep = sorted(keep)
    drop = [i for i in range(n) if i not in keep]
    t = rho.reshape((q,) * (2 * n))
    for k, i in enumerate(sorted(drop, reverse=True)):
        m = t.ndim // 2
        t = np.trace(t, axis1=i, axis2=i + m)
    d = q ** len(keep)
    return t.reshape(d, d)


def von_neumann_entropy(rho):
    w = np.linalg.eigvalsh((rho + rho.conj().T) / 2)
    w = w[w > 1e-300]
    return float(-(w * np.log(w)).sum())


def quantum_cmi(rho, t, n, q=2):
    """I(A:C|B) in nats from von Neumann entropies of reduced states."""
    _check_dense(n, q)
    check_density_matrix(rho, tol=1e-9)
    a, b, c = sorted(t.A), sorted(t.B), sorted(t.C)
    if not a or not c:
        return 0.0

    def s(region):
        return von_neumann_entropy(partial_trace(rho, region, n, q)) if region else 0.0

    return s(a + b) + s(b + c) - s(b) - s(a + b + c)


# --- channels ----------------------------------------------------------------


class QuantumChannel:
    """Kraus channel on ``support``; Pauli channels also keep their mixture."""

    def __init__(self, support, kraus, q=2, pauli_mixture=None):
        self.support = tuple(int(v) for v in support)
        self.q = int(q)
        k = q ** len(self.support)
        self.kraus = [np.asarray(m, dtype=complex).reshape(k, k) for m in kraus]
        s = sum(m.conj().T @ m for m in self.kraus)
        if np.abs(s - np.eye(k)).max() > 1e-10:
            raise ValueError("channel is not trace preserving")
        self.pauli_mixture = pauli_mixture

    def __repr__(self):
        return f"QuantumChannel(support={self.support}, kraus={len(self.kraus)})"

    def apply(self, rho, n):
        """Dense action on an ``n``-qudit operator."""
        q = self.q
        sup = list(self.support)
        k = len(sup)
        t = rho.reshape((q,) * (2 * n))
        out = np.zeros_like(t)
        for m in self.kraus:
            mt = m.reshape((q,) * (2 * k))
            r = np.tensordot(mt, t, axes=(list(range(k, 2 * k)), sup))
            r = np.moveaxis(r, list(range(k)), sup)
            r = np.tensordot(r, mt.conj(), axes=([n + i for i in sup], list(range(k, 2 * k))))
            r = np.moveaxis(r, list(range(2 * n - k, 2 * n)), [n + i for i in sup])
            out = out + r
        return out.reshape(rho.shape)


def pauli_channel(site, probs, q=2):
    """Mixture of X^a Z^b on one qudit; ``probs[(a, b)]`` gives each weight."""
    kraus = []
    mixture = []
    total = 0.0
    for (a, b), p in probs.items():
        if p < 0:
            raise ValueError("probabilities must be nonnegative")
        if p == 0:
            continue
        op = PauliOperator([a], [b], 0, q)
        kraus.append(math.sqrt(p) * op.local_matrix([0]))
        mixture.append((p, int(a) % q, int(b) % q))
        total += p
    if abs(total - 1) > 1e-12:
        raise ValueError("Pauli probabilities must sum to 1")
    return QuantumChannel((site,), kraus, q, pauli_mixture=mixture)


def depolarizing(site, eps, q=2):
    """(1 - eps) rho + eps Tr_site(rho) (x) I / q."""
    probs = {(a, b): eps / q**2 for a in range(q) for b in range(q)}
    probs[(0, 0)] += 1 - eps
    return pauli_channel(site, probs, q)


def dephasing(site, p, q=2):
    probs = {(0, b): p / (q - 1) for b in range(1, q)}
    probs[(0, 0)] = 1 - p
    return pauli_channel(site, probs, q)


def bit_flip(site, p, q=2):
    probs = {(a, 0): p / (q - 1) for a in range(1, q)}
    probs[(0, 0)] = 1 - p
    return pauli_channel(site, probs, q)


def amplitude_damping(site, gamma):
    k0 = np.array([[1, 0], [0, math.sqrt(1 - gamma)]])
    k1 = np.array([[0, math.sqrt(gamma)], [0, 0]])
    return QuantumChannel((site,), [k0, k1], 2)


def identity_quantum_channel(site, q=2):
    return QuantumChannel((site,), [np.eye(q)], q)


def near_generators(h, support):
    s = set(support)
    return tuple(j for j, g in enumerate(h.generators) if s.intersection(g.support))


def _full_label(h, near, s_near):
    s = [0] * h.n_labels
    for j, v in zip(near, s_near):
        s[j] = v
    return tuple(s)


def _dense_label_channel(channel, h):
    """(1/R) Tr[E(Pi_s) Pi_s'] over the generators touching the support, with residual check."""
    near = near_generators(h, channel.support)
    q = h.q
    k = len(near)
    locals_ = list(np.ndindex(*([q] * k)))
    projs = {sl: label_projector(h, _full_label(h, near, sl)) for sl in locals_}
    t = np.zeros((q**k, q**k))
    worst_resid = 0.0
    worst_neg = 0.0
    for ci, sl in enumerate(locals_):
        out = channel.apply(projs[sl], h.n)
        recon = np.zeros_like(out)
        for ri, sl2 in enumerate(locals_):
            val = np.trace(out @ projs[sl2]) / h.rank
            t[ri, ci] = float(np.real(val))
            recon += val * projs[sl2]
        worst_resid = max(worst_resid, float(np.abs(out - recon).max()))
        worst_neg = min(worst_neg, float(t[:, ci].min()))
    return near, t, worst_resid, worst_neg


def is_stabilizer_mixing(channel, h, tol=1e-10):
    """True iff E(Pi_s) is a nonnegative combination of label projectors for every local label."""
    _, _, resid, neg = _dense_label_channel(channel, h)
    return resid < tol and neg >= -1e-12


def induced_classical_channel_dense(channel, h):
    """Trace-formula label channel, computed with dense matrices."""
    near, t, resid, neg = _dense_label_channel(channel, h)
    if resid >= 1e-10 or neg < -1e-12:
        raise NotStabilizerMixingError("channel is not stabilizer mixing")
    return LocalChannel(near, np.clip(t, 0, None) / np.clip(t, 0, None).sum(axis=0), (h.q,) * len(near))


def induced_classical_channel(channel, h):
    """Label channel T(s'|s) on the generators touching the channel's support.

    Pauli channels shift labels by symplectic products; other channels go
    through the dense trace formula.
    """
    if channel.pauli_mixture is None:
        return induced_classical_channel_dense(channel, h)
    near = near_generators(h, channel.support)
    q = h.q
    k = len(near)
    t = np.zeros((q**k, q**k))
    site = channel.support[0]
    for p, a, b in channel.pauli_mixture:
        x = np.zeros(h.n, int)
        z = np.zeros(h.n, int)
        x[site], z[site] = a, b
        op = PauliOperator(x, z, 0, q)
        shift = [h.generators[j].symplectic(op) for j in near]
        for ci, sl in enumerate(np.ndindex(*([q] * k))):
            new = tuple((v + d) % q for v, d in zip(sl, shift))
            ri = int(np.ravel_multi_index(new, (q,) * k)) if k else 0
            t[ri, ci] += p
    return LocalChannel(near, t, (q,) * k)


def induced_label_process(h, channels):
    """One label layer per quantum channel, in application order."""
    layers = []
    for ch in channels:
        lc = induced_classical_channel(ch, h)
        if lc.support:
            layers.append([lc])
    return LayeredProcess(layers)


def label_regions(h, t):
    """Generator labels inside A, B, C and straddling A-B or B-C."""
    a, b, c = set(t.A), set(t.B), set(t.C)
    out = {"A": [], "dA": [], "B": [], "dC": [], "C": []}
    for j, g in enumerate(h.generators):
        s = set(g.support)
        if s & a and s & c:
            raise PreconditionError(f"generator {j} touches both A and C")
        if s <= a:
            out["A"].append(j)
        elif s <= b:
            out["B"].append(j)
        elif s <= c:
            out["C"].append(j)
        elif s & a:
            out["dA"].append(j)
        else:
            out["dC"].append(j)
    return out


def hidden_products(h, region):
    """Number of independent group elements supported in ``region`` beyond those generated inside it.

    Nonzero means some product of generators that each leave ``region`` is
    itself supported in ``region``, so the reduced state there sees a label
    combination no single region class carries.
    """
    region = set(region)
    outside = [i for i in range(h.n) if i not in region]
    cols = outside + [h.n + i for i in outside]
    rows = [g.vector()[cols] for g in h.generators]
    inside = sum(1 for g in h.generators if set(g.support) <= region)
    kernel = h.n_labels - len(_rank_mod_q(rows, h.q))
    return kernel - inside


def check_label_reduction(h, t):
    """Raise PreconditionError unless B, AB and BC carry no hidden generator products."""
    a, b, c = set(t.A), set(t.B), set(t.C)
    for name, region in (("B", b), ("AB", a | b), ("BC", b | c)):
        k = hidden_products(h, region)
        if k:
            raise PreconditionError(f"region {name} supports {k} hidden generator product(s)")
    label_regions(h, t)


def noisy_label_distribution(h, beta, channels):
    p = stabilizer_distribution(h, beta).distribution()
    return apply_process(p, induced_label_process(h, channels))


def label_cmi(h, p_labels, t):
    check_label_reduction(h, t)
    r = label_regions(h, t)
    return cmi(p_labels, (r["A"] + r["dA"], r["B"], r["C"] + r["dC"]))


def cmi_equality_check(h, beta, channels, t):
    """(quantum CMI of the noisy state, classical CMI of the noisy label distribution)."""
    rho = gibbs_state(h, beta)
    for ch in channels:
        rho = ch.apply(rho, h.n)
    rho = (rho + rho.conj().T) / 2
    iq = quantum_cmi(rho, t, h.n, h.q)
    ic = label_cmi(h, noisy_label_distribution(h, beta, channels), t)
    return iq, ic
