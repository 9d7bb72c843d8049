import random

import pytest
from hypothesis import given, strategies as st

from mpcnet.quorum import (
    QuorumError, VerificationFailure, commit_seed, drf_round, honest_tickets, knows_selected,
    lottery_step, make_tickets, select_quorum,
)

P61 = 2 ** 61 - 1


def test_fixed_seeds_sum():
    tickets = make_tickets({0: 1, 1: 2, 2: 3})
    assert drf_round(tickets, {0: 1, 1: 2, 2: 3}) == 6


def test_forged_reveal_names_node():
    tickets = make_tickets({0: 1, 1: 2, 2: 3})
    with pytest.raises(VerificationFailure) as exc:
        drf_round(tickets, {0: 1, 1: 5, 2: 3})
    assert exc.value.nodes == [1]
    assert [t.node for t in honest_tickets(tickets, {0: 1, 1: 5, 2: 3})] == [0, 2]


def test_missing_reveal_is_a_failure():
    tickets = make_tickets({0: 1, 1: 2})
    with pytest.raises(VerificationFailure) as exc:
        drf_round(tickets, {0: 1})
    assert exc.value.nodes == [1]


def test_seed_length_checked():
    with pytest.raises(QuorumError):
        commit_seed(b"short")


@given(st.lists(st.binary(min_size=32, max_size=32), min_size=2, max_size=8), st.randoms())
def test_reveal_order_does_not_matter(seeds, rnd):
    reveals = dict(enumerate(seeds))
    tickets = make_tickets(reveals)
    shuffled = list(reveals.items())
    rnd.shuffle(shuffled)
    expected = sum(int.from_bytes(s, "little") for s in seeds) % P61
    assert drf_round(tickets, dict(shuffled)) == expected
    assert drf_round(make_tickets(reveals), reveals) == expected


def test_full_quorum_selects_everyone():
    res = select_quorum(12345, range(7), 7)
    assert sorted(res.selected) == list(range(7))


def test_quorum_too_large():
    with pytest.raises(QuorumError):
        select_quorum(1, range(3), 4)
    with pytest.raises(QuorumError):
        select_quorum(1, range(3), 2, must_include=[9])


def test_must_include_always_present():
    for P in range(1000):
        res = select_quorum(P, range(10), 3, must_include=[4])
        assert 4 in res.selected and len(set(res.selected)) == 3


def test_selection_is_local_and_deterministic():
    a = select_quorum(99, range(10), 4)
    b = select_quorum(99, range(10), 4)
    assert a == b
    assert [knows_selected(n, a) for n in range(10)].count(True) == 4


def test_selection_frequency_uniform():
    counts = [0] * 10
    trials = 10 ** 5
    rng = random.Random(1)
    for _ in range(trials):
        for node in select_quorum(rng.getrandbits(61), range(10), 3).selected:
            counts[node] += 1
    assert all(abs(c / trials - 0.3) <= 0.01 for c in counts)


def test_weights_bias_selection():
    counts = {0: 0, 1: 0}
    for P in range(4000):
        counts[select_quorum(P, [0, 1], 1, weights={0: 3.0, 1: 1.0}).selected[0]] += 1
    assert abs(counts[0] / 4000 - 0.75) < 0.03


@pytest.mark.parametrize("P,prover", [(6, 0), (7, 1)])
def test_lottery_examples(P, prover):
    chosen, validators = lottery_step(["a", "b", "c"], P)
    assert chosen == "abc"[prover]
    assert sorted(validators + [chosen]) == ["a", "b", "c"]


def test_lottery_needs_two():
    with pytest.raises(QuorumError):
        lottery_step([1], 3)


def test_lottery_distribution():
    rng = random.Random(2)
    counts = [0] * 4
    for _ in range(10 ** 4):
        counts[lottery_step(range(4), rng.getrandbits(61))[0]] += 1
    assert all(abs(c / 10 ** 4 - 0.25) < 0.02 for c in counts)
