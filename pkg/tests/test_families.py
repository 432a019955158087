import numpy as np
import pytest

from hypothesis import given, settings, strategies as st

from dynkin_tools.common import BadLambda, RegionMismatch
from dynkin_tools.filtration import build_tree, conditional_expectation
from dynkin_tools.families import (
    Family,
    StoppingTime,
    immediate,
    terminal,
    precedes,
    first_hitting,
    is_supermartingale,
    is_martingale_on,
    snell_envelope,
    lambda_hitting,
    minimal_optimal,
    check_optimality_criterion,
)
from dynkin_tools.generator import generate_model, random_family, dominating_supermartingale
from dynkin_tools import oracle


def _labels(time):
    return sorted(time.labels())


def test_is_supermartingale(chain_tree):
    assert is_supermartingale(Family.constant(chain_tree))
    assert is_supermartingale(Family(chain_tree, [1, 1, 0]))
    assert not is_supermartingale(Family(chain_tree, [0, 1, 0]))


def test_is_martingale_on(chain_tree):
    f = Family(chain_tree, [1, 1, 0])
    t0, t1, t2 = (StoppingTime(chain_tree, [n]) for n in range(3))
    assert is_martingale_on(f, t1, t1)
    assert is_martingale_on(f, t0, t1)
    assert not is_martingale_on(f, t0, t2)
    with pytest.raises(RegionMismatch):
        is_martingale_on(f, t2, t0)


def test_stopping_time_basics(binomial_tree):
    tau = StoppingTime(binomial_tree, [1, 5, 6])
    assert _labels(tau) == ["dd", "du", "u"]
    assert tau.stop_times().tolist() == [1, 1, 2, 2]
    assert tau.restrict(2).labels() == ["du", "dd"]
    assert tau == StoppingTime(binomial_tree, {6, 5, 1})
    assert precedes(immediate(binomial_tree), tau)
    assert precedes(tau, terminal(binomial_tree))
    assert not precedes(terminal(binomial_tree), tau)
    with pytest.raises(RegionMismatch):
        tau.restrict(3)  # already stopped at u
    with pytest.raises(RegionMismatch):
        StoppingTime(binomial_tree, [3, 4], origin=2)


def test_snell_envelope_examples(chain_tree, binomial_tree):
    assert snell_envelope(Family.constant(chain_tree)).envelope.values.tolist() == [0, 0, 0]
    assert snell_envelope(Family(chain_tree, [0, 1, 0])).envelope.values.tolist() == [1, 1, 0]

    phi = Family(binomial_tree, [0, 1, 0, 0, 0, 0, 0])
    result = snell_envelope(phi)
    assert result.reward is phi
    assert result.envelope.values.tolist() == [0.5, 1, 0, 0, 0, 0, 0]


def test_lambda_hitting_examples(chain_tree, binomial_tree):
    zero = Family.constant(chain_tree)
    start = immediate(chain_tree)
    assert lambda_hitting(zero, zero, 0.3, start) == start

    phi, v = Family(chain_tree, [0, 1, 0]), Family(chain_tree, [1, 1, 0])
    assert _labels(lambda_hitting(v, phi, 0.9, start)) == ["t1"]
    assert _labels(lambda_hitting(v, phi, 0.999999, start)) == _labels(minimal_optimal(v, phi, start))

    phi = Family(binomial_tree, [0, 1, 0, 0, 0, 0, 0])
    v = snell_envelope(phi).envelope
    assert _labels(lambda_hitting(v, phi, 0.5, immediate(binomial_tree))) == ["d", "u"]

    # negative rewards still hit, at the latest where v = phi
    phi = Family(chain_tree, [-1, -1, -1])
    v = snell_envelope(phi).envelope
    assert _labels(lambda_hitting(v, phi, 0.5, start)) == ["t0"]
    phi = Family(chain_tree, [-3, -1, -2])
    v = snell_envelope(phi).envelope
    assert v.values.tolist() == [-1, -1, -2]
    assert _labels(lambda_hitting(v, phi, 0.5, start)) == ["t1"]
    assert _labels(lambda_hitting(v, phi, 0.5, start)) == _labels(minimal_optimal(v, phi, start))

    for lam in (0.0, 1.0, -0.5, 1.5):
        with pytest.raises(BadLambda):
            lambda_hitting(v, phi, lam, start)


def test_minimal_optimal_examples(chain_tree, binomial_tree):
    zero = Family.constant(chain_tree)
    assert minimal_optimal(zero, zero, immediate(chain_tree)) == immediate(chain_tree)

    phi = Family(chain_tree, [0, 1, 0])
    v = snell_envelope(phi).envelope
    assert _labels(minimal_optimal(v, phi, immediate(chain_tree))) == ["t1"]

    phi = Family(binomial_tree, [0, 1, 0, 0, 0, 0, 0])
    v = snell_envelope(phi).envelope
    assert _labels(minimal_optimal(v, phi, immediate(binomial_tree))) == ["d", "u"]


def test_optimality_criterion_examples(chain_tree):
    phi = Family(chain_tree, [0, 1, 0])
    v = snell_envelope(phi).envelope
    start = immediate(chain_tree)
    assert check_optimality_criterion(v, phi, start, minimal_optimal(v, phi, start))
    assert not check_optimality_criterion(v, phi, start, terminal(chain_tree))

    already = Family(chain_tree, [1, 1, 0])
    assert check_optimality_criterion(already, already, start, start)


def test_first_hitting_needs_a_hit(chain_tree):
    with pytest.raises(RegionMismatch):
        first_hitting(chain_tree, np.zeros(3, dtype=bool), immediate(chain_tree))


def _random_tree(seed, horizon, branching):
    return build_tree(generate_model(seed, horizon=horizon, branching=branching, ragged=True))


@given(seed=st.integers(0, 2**32 - 1), horizon=st.integers(1, 4), branching=st.integers(1, 3))
@settings(max_examples=200, deadline=None)
def test_snell_envelope_is_smallest_supermartingale(seed, horizon, branching):
    tree = _random_tree(seed, horizon, branching)
    rng = np.random.default_rng(seed)
    phi = random_family(tree, rng)
    v = snell_envelope(phi).envelope

    assert v.dominates(phi)
    assert is_supermartingale(v)
    for _ in range(20):
        h = dominating_supermartingale(phi, rng)
        assert is_supermartingale(h)
        assert h.dominates(v)


@given(seed=st.integers(0, 2**32 - 1), horizon=st.integers(1, 3), branching=st.integers(1, 2))
@settings(max_examples=200, deadline=None)
def test_snell_envelope_is_the_best_stopping_value(seed, horizon, branching):
    tree = _random_tree(seed, horizon, branching)
    phi = random_family(tree, np.random.default_rng(seed))
    v = snell_envelope(phi).envelope
    for node in range(len(tree)):
        best = max(conditional_expectation(tree, phi, node, theta) for theta in oracle.enumerate_stopping_times(tree, node))
        assert v[node] == pytest.approx(best, abs=1e-9)


@given(seed=st.integers(0, 2**32 - 1), horizon=st.integers(1, 4), branching=st.integers(1, 3), low=st.sampled_from([0.0, -5.0]))
@settings(max_examples=200, deadline=None)
def test_hitting_times_from_random_starts(seed, horizon, branching, low):
    tree = _random_tree(seed, horizon, branching)
    rng = np.random.default_rng(seed)
    phi = random_family(tree, rng, low=low, high=5.0)
    v = snell_envelope(phi).envelope
    shift = max(0.0, -float(phi.values.min()))

    for _ in range(5):
        mask = rng.random(len(tree)) < 0.4
        mask[tree.leaves] = True
        start = first_hitting(tree, mask, immediate(tree))

        optimal = minimal_optimal(v, phi, start)
        assert check_optimality_criterion(v, phi, start, optimal)

        previous = start
        for lam in (0.5, 0.9, 0.99):
            hit = lambda_hitting(v, phi, lam, start)
            assert precedes(previous, hit)
            assert precedes(hit, optimal)
            # lam * (v + c)(S) <= E[phi(theta^lam) + c | S] on every node of S
            for node in start.region:
                expected = conditional_expectation(tree, phi, node, hit.restrict(node))
                assert lam * (v[node] + shift) <= expected + shift + 1e-9
            previous = hit


@given(seed=st.integers(0, 2**32 - 1), horizon=st.integers(1, 3), branching=st.integers(1, 2), dominated=st.booleans())
@settings(max_examples=100, deadline=None)
def test_one_step_check_matches_stopping_definition(seed, horizon, branching, dominated):
    tree = _random_tree(seed, horizon, branching)
    rng = np.random.default_rng(seed)
    f = random_family(tree, rng)
    if dominated:
        f = dominating_supermartingale(f, rng)

    taus = oracle.enumerate_stopping_times(tree)
    holds = all(
        conditional_expectation(tree, f, node, later.restrict(node)) <= f[node] + 1e-9
        for earlier in taus
        for later in taus
        if precedes(earlier, later)
        for node in earlier.region
    )
    assert is_supermartingale(f) == holds
    if dominated:
        assert holds
