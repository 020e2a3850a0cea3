import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mixstab.exceptions import BudgetExceededError, NotStabilizerMixingError, PreconditionError
from mixstab.gibbs import ising_model, total_variation
from mixstab.graph import annulus_tripartition, path
from mixstab.stabilizer import (
    PauliOperator,
    StabilizerHamiltonian,
    amplitude_damping,
    bit_flip,
    check_label_reduction,
    cluster_chain,
    cmi_equality_check,
    dense_hamiltonian,
    dense_label_distribution,
    dephasing,
    depolarizing,
    gibbs_state,
    hidden_products,
    induced_classical_channel,
    induced_classical_channel_dense,
    is_stabilizer_mixing,
    label_projector,
    partial_trace,
    pauli_ising,
    quantum_cmi,
    reconstruct_state,
    stabilizer_distribution,
    toric_patch,
    trace_norm,
    von_neumann_entropy,
)


def paulis(n, q):
    return st.tuples(
        st.lists(st.integers(0, q - 1), min_size=n, max_size=n),
        st.lists(st.integers(0, q - 1), min_size=n, max_size=n),
        st.integers(0, 2 * q - 1),
    ).map(lambda t: PauliOperator(t[0], t[1], t[2], q))


@pytest.mark.parametrize("q", [2, 3])
@given(data=st.data())
def test_pauli_algebra_matches_dense(q, data):
    a = data.draw(paulis(2, q))
    b = data.draw(paulis(2, q))
    da, db = a.dense(), b.dense()
    assert np.allclose((a @ b).dense(), da @ db)
    w = np.exp(2j * np.pi * a.symplectic(b) / q)
    assert np.allclose(da @ db, w * db @ da)
    assert a.commutes(b) == np.allclose(da @ db, db @ da)
    assert np.allclose((a**q).dense(), np.linalg.matrix_power(da, q))


def test_parse_y_and_powers():
    y = PauliOperator.from_string("0:Y", 1)
    assert np.allclose(y.dense(), [[0, -1j], [1j, 0]])
    z2 = PauliOperator.from_string("1:Z^2", 2, q=3)
    assert z2.support == (1,) and int(z2.z[1]) == 2
    with pytest.raises(ValueError):
        PauliOperator.from_string("0:Y", 1, q=3)
    with pytest.raises(ValueError):
        PauliOperator.from_string("5:X", 2)
    with pytest.raises(ValueError):
        PauliOperator.from_string("0-X", 2)


def test_term_order_condition():
    xz = PauliOperator([1], [1], 0, 2)  # X Z is anti-Hermitian
    assert not xz.has_order_q()
    with pytest.raises(ValueError):
        StabilizerHamiltonian(1, [(1.0, xz)])


def test_noncommuting_terms_rejected():
    x = PauliOperator.from_string("0:X", 1)
    z = PauliOperator.from_string("0:Z", 1)
    with pytest.raises(PreconditionError):
        StabilizerHamiltonian(1, [(1.0, x), (1.0, z)])


def test_toric_generators_and_rank():
    h = toric_patch(2)
    assert h.n == 8 and len(h.terms) == 8
    assert h.n_labels == 6 and h.rank == 4
    # every term expands in the generators
    for (c, p), (coef, m) in zip(h.terms, h.expansions):
        prod = PauliOperator.identity(8)
        for g, k in zip(h.generators, coef):
            prod = prod @ (g ** int(k))
        assert np.array_equal(prod.x, p.x) and np.array_equal(prod.z, p.z)


@pytest.mark.parametrize("h", [cluster_chain(6), toric_patch(2)], ids=["cluster", "toric"])
def test_projectors_resolve_identity(h):
    dim = 2**h.n
    total = np.zeros((dim, dim), dtype=complex)
    for s in itertools.product(range(2), repeat=h.n_labels):
        pr = label_projector(h, s)
        assert np.allclose(pr @ pr, pr)
        assert np.trace(pr).real == pytest.approx(h.rank)
        total += pr
    assert np.allclose(total, np.eye(dim))


@pytest.mark.parametrize("beta", [0.0, 0.4, 1.3])
@pytest.mark.parametrize("h", [cluster_chain(6), toric_patch(2)], ids=["cluster", "toric"])
def test_stabilizer_distribution_matches_dense(h, beta):
    rho = gibbs_state(h, beta)
    p = stabilizer_distribution(h, beta).distribution()
    assert np.abs(dense_label_distribution(h, rho).table - p.table).max() < 1e-12
    assert trace_norm(reconstruct_state(h, p) - rho) < 1e-10


def test_qutrit_clock_model():
    n, q = 3, 3
    terms = []
    for i in range(n - 1):
        z = np.zeros(n, int)
        z[i], z[i + 1] = 1, 2
        terms.append((1.0, PauliOperator(np.zeros(n, int), z, 0, q)))
    terms.append((0.5, PauliOperator(np.ones(n, int), np.zeros(n, int), 0, q)))
    h = StabilizerHamiltonian(n, terms, q)
    assert np.allclose(dense_hamiltonian(h), dense_hamiltonian(h).conj().T)
    rho = gibbs_state(h, 0.8)
    p = stabilizer_distribution(h, 0.8).distribution()
    assert np.abs(dense_label_distribution(h, rho).table - p.table).max() < 1e-12
    for ch in (depolarizing(1, 0.2, 3), dephasing(0, 0.3, 3), bit_flip(2, 0.1, 3)):
        a = induced_classical_channel(ch, h).matrix
        b = induced_classical_channel_dense(ch, h).matrix
        assert np.abs(a - b).max() < 1e-12


def test_ising_with_single_site_generators_is_classical_gibbs():
    g = path(6)
    h = pauli_ising(g, 1.0, single_site_generators=True)
    p = stabilizer_distribution(h, 0.4).distribution()
    assert total_variation(p, ising_model(g, 0.4).exact_distribution()) < 1e-14


def test_generator_choice_changes_only_labels():
    # default generators Z_i Z_{i+1} give the product law of domain walls
    g = path(5)
    h = pauli_ising(g)
    p = stabilizer_distribution(h, 0.7).distribution()
    want = np.exp(0.7) / (np.exp(0.7) + np.exp(-0.7))
    for j in range(h.n_labels):
        assert p.marginal([j]).table[0] == pytest.approx(want)


@pytest.mark.parametrize("h", [cluster_chain(6), toric_patch(2)], ids=["cluster", "toric"])
def test_pauli_channels_are_stabilizer_mixing(h):
    for ch in (depolarizing(2, 0.3), dephasing(1, 0.2), bit_flip(0, 0.4)):
        assert is_stabilizer_mixing(ch, h)
        a = induced_classical_channel(ch, h).matrix
        b = induced_classical_channel_dense(ch, h).matrix
        assert np.abs(a - b).max() < 1e-12


def test_amplitude_damping_is_not_stabilizer_mixing():
    h = cluster_chain(4)
    ch = amplitude_damping(1, 0.3)
    assert not is_stabilizer_mixing(ch, h)
    with pytest.raises(NotStabilizerMixingError):
        induced_classical_channel(ch, h)


def test_amplitude_damping_mixes_for_z_only_models():
    h = pauli_ising(path(3), single_site_generators=True)
    assert is_stabilizer_mixing(amplitude_damping(1, 0.3), h)


def test_partial_trace_and_entropy():
    bell = np.zeros(4)
    bell[[0, 3]] = 1 / math.sqrt(2)
    rho = np.outer(bell, bell)
    red = partial_trace(rho, [0], 2, 2)
    assert np.allclose(red, np.eye(2) / 2)
    assert von_neumann_entropy(red) == pytest.approx(math.log(2))
    assert von_neumann_entropy(rho) == pytest.approx(0.0, abs=1e-12)


def test_quantum_cmi_vanishes_for_clean_cluster_chain():
    h = cluster_chain(7)
    rho = gibbs_state(h, 1.1)
    for c in range(7):
        for r in (1, 2):
            t = annulus_tripartition(h.graph, {c}, r)
            if t.C:
                assert abs(quantum_cmi(rho, t, 7)) < 1e-9


def test_hidden_products_detected():
    h = cluster_chain(8)
    # K_2 K_4 = Z1 X2 X4 Z5 sits inside {1, 2, 4, 5}
    assert hidden_products(h, {1, 2, 4, 5}) == 1
    assert hidden_products(h, {1, 2, 3}) == 0
    t = annulus_tripartition(h.graph, {3}, 1)
    with pytest.raises(PreconditionError):
        check_label_reduction(h, t)


def test_label_reduction_on_admissible_tripartitions():
    h = cluster_chain(8)
    chans = [depolarizing(v, 0.15) for v in range(8)] + [dephasing(v, 0.1) for v in (2, 5)]
    for c in (0, 7):
        for r in (1, 2, 3):
            t = annulus_tripartition(h.graph, {c}, r)
            iq, ic = cmi_equality_check(h, 0.9, chans, t)
            assert iq == pytest.approx(ic, abs=1e-9)
            assert iq > 0


def test_label_reduction_breaks_with_hidden_products():
    # the reduced state on B sees s_2 + s_4, which the label split omits
    h = cluster_chain(8)
    t = annulus_tripartition(h.graph, {3}, 1)
    chans = [depolarizing(v, 0.1) for v in range(8)]
    rho = gibbs_state(h, 0.7)
    for ch in chans:
        rho = ch.apply(rho, 8)
    from mixstab.gibbs import cmi
    from mixstab.stabilizer import label_regions, noisy_label_distribution

    r = label_regions(h, t)
    ic = cmi(noisy_label_distribution(h, 0.7, chans), (r["A"] + r["dA"], r["B"], r["C"] + r["dC"]))
    assert abs(quantum_cmi(rho, t, 8) - ic) > 1e-4


def test_dense_budget():
    h = cluster_chain(11)
    with pytest.raises(BudgetExceededError):
        gibbs_state(h, 1.0)


@pytest.mark.parametrize("beta", [0.3, 1.0])
def test_generator_choice_is_a_relabeling(beta):
    h = toric_patch(2)
    ops = [p for _, p in h.terms]
    h2 = StabilizerHamiltonian(h.n, h.terms, 2, generators=[ops[k] for k in (7, 6, 5, 3, 2, 1)])
    p = stabilizer_distribution(h, beta).distribution()
    p2 = stabilizer_distribution(h2, beta).distribution()
    maps = [h._expand(g) for g in h2.generators]
    mapped = np.zeros_like(p2.table)
    for s in itertools.product(range(2), repeat=h.n_labels):
        s2 = tuple(int((m + np.dot(c, s)) % 2) for c, m in maps)
        mapped[s2] += p.table[s]
    assert np.abs(mapped - p2.table).max() < 1e-14
