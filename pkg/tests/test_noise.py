import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mixstab.exceptions import PreconditionError, ZeroProbabilityError
from mixstab.gibbs import ising_model, total_variation
from mixstab.graph import path
from mixstab.noise import (
    LayeredProcess,
    LocalChannel,
    apply_process,
    bayes_posterior_spacetime,
    block_spins,
    blocked_to_spacetime,
    correlated_flip_channel,
    epsilon_decomposition,
    flip_channel,
    identity_channel,
    noisy_joint,
    pin_single_site,
    pinning_bounds_check,
    replacement_channel,
    single_site_process,
    spacetime_model,
)


@given(st.floats(0.0, 1.0), st.integers(1, 2), st.integers(2, 3))
def test_replacement_epsilon(eps, k, q):
    ch = replacement_channel(tuple(range(k)), eps, q)
    assert ch.epsilon == pytest.approx(eps * (1 - 1 / q**k), abs=1e-12)
    if ch.epsilon > 0:
        # T = (1 - eps') I + eps' N with N stochastic
        assert ch.residual.min() >= -1e-12
        assert ch.residual.sum(axis=0) == pytest.approx(np.ones(q**k))


def test_epsilon_decomposition_of_flip():
    e, n = epsilon_decomposition(np.array([[0.9, 0.2], [0.1, 0.8]]))
    assert e == pytest.approx(0.2)
    assert np.allclose(n, [[0.5, 1.0], [0.5, 0.0]])


def test_non_stochastic_rejected():
    with pytest.raises(ValueError):
        LocalChannel((0,), [[0.5, 0.5], [0.4, 0.5]])
    with pytest.raises(ValueError):
        flip_channel(0, 1.5)


def test_layers_must_be_disjoint():
    with pytest.raises(PreconditionError):
        LayeredProcess([[flip_channel(0, 0.1), replacement_channel((0, 1), 0.1)]])
    proc = LayeredProcess([[replacement_channel((0, 2), 0.1)]])
    with pytest.raises(PreconditionError):
        proc.check_graph(path(3))


def test_apply_process_matches_dense_matrix():
    p = ising_model(path(3), 0.8).exact_distribution()
    proc = LayeredProcess([[replacement_channel((0, 1), 0.2)], [flip_channel(2, 0.1), correlated_flip_channel((0, 1), 0.3)]])
    out = apply_process(p, proc)
    # oracle: explicit 8x8 matrices built by kron with reordering
    i2 = np.eye(2)
    m1 = np.kron(replacement_channel((0, 1), 0.2).matrix, i2)
    m2 = np.kron(correlated_flip_channel((0, 1), 0.3).matrix, flip_channel(2, 0.1).matrix)
    want = m2 @ m1 @ p.table.reshape(-1)
    assert np.allclose(out.table.reshape(-1), want, atol=1e-14)


def test_noisy_joint_marginals():
    p = ising_model(path(3), 0.5).exact_distribution()
    proc = single_site_process(range(3), 0.1)
    j = noisy_joint(p, proc)
    assert total_variation(j.marginal([0, 1, 2]), p) < 1e-14
    noisy = j.marginal([(v, "noisy") for v in range(3)])
    want = apply_process(p, proc)
    assert np.allclose(noisy.table, want.table)


def test_pinned_favored_is_argmin_and_fields():
    m = ising_model(path(3), 0.5)
    ch = flip_channel(1, 0.7)
    pm = pin_single_site(m, [ch], {1: 0})
    # eps > 1/2 makes the flipped value more likely
    assert pm.favored[1] == 1
    ch2 = flip_channel(1, 0.1)
    pm2 = pin_single_site(m, [ch2], {1: 0})
    assert pm2.favored[1] == 0
    assert pm2.p_min == pytest.approx(math.log(0.9 / 0.1))


@pytest.mark.parametrize("q", [2, 3])
def test_pinned_equals_posterior_for_qudits(q):
    g = path(4, q=q)
    rng = np.random.default_rng(q)
    from mixstab.gibbs import GibbsModel

    m = GibbsModel(g, [rng.normal(size=q * q) for _ in g.hyperedges], 0.9)
    chans = [flip_channel(v, 0.15, q) for v in (1, 2)]
    for b in itertools.product(range(q), repeat=2):
        b_prime = dict(zip((1, 2), b))
        pm = pin_single_site(m, chans, b_prime)
        t = m.exact_distribution().table.copy()
        for ch, (i, bi) in zip(chans, b_prime.items()):
            shape = [1] * 4
            shape[i] = q
            t = t * ch.matrix[bi, :].reshape(shape)
        assert np.abs(pm.exact_distribution().table - t / t.sum()).sum() / 2 < 1e-12


def test_zero_likelihood_observation():
    from mixstab.gibbs import GibbsModel

    hard = GibbsModel(path(2), [np.array([[0.0, np.inf], [np.inf, 0.0]])])
    with pytest.raises(ZeroProbabilityError):
        spacetime_model(hard, LayeredProcess([[identity_channel((0, 1))]]), {0: 0, 1: 1})


LAYOUTS = {
    "brick": [[(0, 1), (2, 3)], [(1, 2)]],
    "brick_reversed": [[(1, 2)], [(0, 1), (2, 3)]],
    "single": [[(0,), (1,), (2,), (3,)], [(0,), (1,), (2,), (3,)]],
}


def make_process(layout, eps):
    return LayeredProcess([[replacement_channel(s, eps) for s in layer] for layer in layout])


@pytest.mark.parametrize("name", sorted(LAYOUTS))
def test_spacetime_and_blocking_match_oracle(name):
    m = ising_model(path(4), 0.6)
    proc = make_process(LAYOUTS[name], 0.1)
    for b in itertools.product(range(2), repeat=2):
        b_final = {1: b[0], 2: b[1]}
        oracle = bayes_posterior_spacetime(m, proc, b_final)
        st_ = spacetime_model(m, proc, b_final)
        assert total_variation(st_.exact_distribution(), oracle) < 1e-12
        blocked = block_spins(st_)
        lifted = blocked_to_spacetime(blocked.exact_distribution(), blocked, st_)
        assert total_variation(lifted, oracle) < 1e-12


def test_pinning_bounds_single_site_layout():
    m = ising_model(path(4), 0.6)
    proc = make_process(LAYOUTS["single"], 0.05)
    blocked = block_spins(spacetime_model(m, proc, {0: 0, 1: 1, 2: 1, 3: 0}))
    ok, rows = pinning_bounds_check(blocked, max(ch.epsilon for _, ch in proc.gates()))
    assert ok and len(rows) == 4


def test_pinning_bounds_fail_when_slices_are_split_across_terms():
    # A slice shared by gates on different hyperedges is penalized by only one
    # of them, so the other term sees a cheap misaligned configuration.
    m = ising_model(path(4), 0.4)
    blocked = block_spins(spacetime_model(m, make_process(LAYOUTS["brick"], 0.05), {0: 0, 1: 0, 2: 0, 3: 0}))
    ok, rows = pinning_bounds_check(blocked, 0.05)
    assert not ok
    bad = [r for r in rows if not r["ok"]]
    assert {r["support"] for r in bad} == {(0, 1), (2, 3)}
    blocked2 = block_spins(spacetime_model(m, make_process(LAYOUTS["brick_reversed"], 0.05), {1: 0, 2: 1}))
    ok2, _ = pinning_bounds_check(blocked2, 0.05)
    assert not ok2


def test_blocked_model_shape():
    m = ising_model(path(4), 0.4)
    st_ = spacetime_model(m, make_process(LAYOUTS["brick"], 0.05), {1: 0, 2: 1})
    blocked = block_spins(st_)
    assert blocked.graph.dims == (8, 4, 4, 8)
    assert blocked.b_sites == (1, 2)
    assert blocked.favored == {1: 0, 2: 0}
