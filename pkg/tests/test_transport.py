import pytest
from hypothesis import given, strategies as st

from mpcnet.field import pack_elements
from mpcnet.transport import (
    GENESIS, AdversarySpec, AdversarySpecError, Transcript, Transport, TransportTimeout,
    parse_transcript_line, replay_head, verify_transcript,
)

P = 2 ** 61 - 1


def broadcast_round(t, values, msg_type="open"):
    return t.round_exchange({i: [(None, msg_type, [v])] for i, v in enumerate(values)})


def test_spec_roundtrip():
    text = "2:tamper-open:+1@5;4:abort-at:10"
    spec = AdversarySpec.parse(text)
    assert spec.corrupted == [2, 4]
    assert AdversarySpec.parse(spec.render()) == spec


@pytest.mark.parametrize("bad", ["x:honest", "1:explode", "1:abort-at", "1 tamper-open"])
def test_spec_rejects_garbage(bad):
    with pytest.raises(AdversarySpecError):
        AdversarySpec.parse(bad)


def test_spec_rejects_full_corruption_and_unknown_party():
    with pytest.raises(AdversarySpecError):
        Transport(2, P, AdversarySpec.parse("0:tamper-mac;1:tamper-mac"))
    with pytest.raises(AdversarySpecError):
        Transport(2, P, AdversarySpec.parse("5:tamper-mac"))


def test_broadcast_is_consistent():
    t = Transport(3, P)
    d = broadcast_round(t, [1, 2, 3])
    assert d.opened("open") == [6]
    assert d.shares("open") == {0: [1], 1: [2], 2: [3]}
    assert t.messages == 3 * 2 and t.envelopes == 3


def test_three_broadcasts_in_one_round():
    t = Transport(4, P)
    out = {i: [(None, kind, [i]) for kind in ("a", "b", "c")] for i in range(4)}
    d = t.round_exchange(out)
    assert t.round == 1
    assert [d.opened(k) for k in "abc"] == [[6]] * 3


def test_direct_messages_reach_only_receiver():
    t = Transport(3, P)
    d = t.round_exchange({0: [(2, "pin", [9])], 1: [(2, "pin", [1])], 2: []})
    assert [e.ints for e in d.inbox(2)] == [[9], [1]]
    assert d.inbox(0) == [] and t.messages == 2


def test_abort_at_times_out():
    t = Transport(3, P, AdversarySpec.parse("1:abort-at:2"))
    broadcast_round(t, [1, 1, 1])
    with pytest.raises(TransportTimeout) as exc:
        broadcast_round(t, [1, 1, 1])
    assert (exc.value.party, exc.value.round) == (1, 2)


def test_timeout_counts_extra_rounds():
    t = Transport(3, P, AdversarySpec.parse("1:abort-at:1"), timeout_rounds=4)
    with pytest.raises(TransportTimeout) as exc:
        broadcast_round(t, [0, 0, 0])
    assert exc.value.round == 4


def test_tamper_open_adds_offset_in_target_round():
    t = Transport(3, P, AdversarySpec.parse("1:tamper-open:+1@2"))
    assert broadcast_round(t, [1, 2, 3]).opened("open") == [6]
    assert broadcast_round(t, [1, 2, 3]).opened("open") == [7]
    assert broadcast_round(t, [1, 2, 3], "commit-y").opened("commit-y") == [6]


def test_wrong_epsilon_and_delta_are_type_specific():
    t = Transport(3, P, AdversarySpec.parse("0:wrong-epsilon:+3;1:wrong-delta:-1"))
    d = t.round_exchange({i: [(None, "mul-eps", [0]), (None, "mul-delta", [0])] for i in range(3)})
    assert d.opened("mul-eps") == [3] and d.opened("mul-delta") == [P - 1]


def test_transcript_starts_at_genesis_and_chains():
    tr = Transcript()
    assert tr.head == GENESIS
    t = Transport(2, P, transcript=tr)
    broadcast_round(t, [1, 2])
    h1 = tr.head
    broadcast_round(t, [1, 2])
    assert tr.head not in (GENESIS, h1) and tr.count == 4


def test_transcript_replay_and_edit_detection(tmp_path):
    t = Transport(3, P)
    for k in range(4):
        broadcast_round(t, [k, k + 1, k + 2])
    path = tmp_path / "t.txt"
    t.transcript.dump(path)
    assert verify_transcript(path)
    assert replay_head(path.read_text().splitlines()) == t.transcript.head
    lines = path.read_text().splitlines()
    env = parse_transcript_line(lines[5])
    edited = lines[5][:-1] + ("0" if lines[5][-1] != "0" else "1")
    assert parse_transcript_line(edited).round == env.round
    path.write_text("\n".join(lines[:5] + [edited] + lines[6:]) + "\n")
    assert not verify_transcript(path)
    path.write_text("\n".join(lines[:5] + lines[6:]) + "\n")
    assert not verify_transcript(path)


@given(st.lists(st.integers(0, P - 1), min_size=2, max_size=6))
def test_line_roundtrip(values):
    tr = Transcript()
    t = Transport(len(values), P, transcript=tr)
    broadcast_round(t, values)
    for env, line in zip(tr.entries, tr.lines()):
        back = parse_transcript_line(line)
        assert (back.round, back.sender, back.receiver, back.msg_type, back.payload) == \
            (env.round, env.sender, env.receiver, env.msg_type, env.payload)
    assert tr.entries[0].payload == pack_elements([values[0]])
