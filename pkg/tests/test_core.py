import threading

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from structq.core import (
    MASK,
    Alphabet,
    EmptyBufferError,
    InvalidStructureError,
    RecordLog,
    StructBuffer,
    Structure,
    VampEnv,
    buffer_best,
    buffer_insert,
    buffer_sample_uniform,
    reward,
    rollout,
    transition,
)
from structq.objectives import TableObjective


def test_alphabet_roundtrip_and_eos():
    a = Alphabet("ACD", includes_eos=True)
    assert a.symbols == ("A", "C", "D", ".")
    assert a.eos_code == 3 and a.size == 4
    s = a.encode("CA.", length=5)
    assert str(s) == "CA.__" and s.is_complete and s.effective_str() == "CA"


@pytest.mark.parametrize("bad", ["A", "AA", "A_", "A,", "A "])
def test_alphabet_rejects_bad_symbols(bad):
    with pytest.raises(ValueError):
        Alphabet(bad)


def test_alphabet_amino_acids_has_twenty():
    assert Alphabet.amino_acids().size == 20


def test_transition_fills_leftmost_mask(ab):
    s = Structure.empty(ab, 3)
    s = transition(s, "B")
    s = transition(s, "A")
    assert str(s) == "BA_" and s.allocated == 2 and not s.is_complete
    s = transition(s, 1)
    assert str(s) == "BAB" and s.is_complete
    with pytest.raises(InvalidStructureError):
        transition(s, "A")


def test_transition_rejects_unknown_symbol(ab):
    with pytest.raises(InvalidStructureError):
        transition(Structure.empty(ab, 2), "Z")
    with pytest.raises(InvalidStructureError):
        transition(Structure.empty(ab, 2), "_")


def test_transition_stops_at_eos():
    a = Alphabet("AB", includes_eos=True)
    s = transition(Structure.empty(a, 3), ".")
    assert s.is_complete and s.effective() == ()


def test_reward_zero_until_complete(ab, table_ab):
    o = ab.encode("B_")
    assert reward(ab.encode("__"), "B", o, table_ab) == 0.0
    assert table_ab.eval_count == 0
    assert reward(o, "A", ab.encode("BA"), table_ab) == 2.0
    assert table_ab.eval_count == 1


def test_rollout_return_is_objective_value(ab, table_ab):
    env = VampEnv(ab, 2, table_ab)
    res = rollout(env, lambda obs: "B")
    assert str(res.structure) == "BB"
    assert res.ret == 3.0 and res.rewards == (0.0, 3.0)


def test_rollout_discount_applies_to_terminal_reward(ab, table_ab):
    env = VampEnv(ab, 2, table_ab, gamma=0.5)
    assert rollout(env, lambda obs: "A").ret == 0.0
    assert rollout(env, lambda obs: "B").ret == 1.5


@given(st.integers(0, 2**32 - 1), st.integers(1, 4), st.integers(2, 6))
def test_rollout_return_equals_f_at_gamma_one(seed, L, n):
    alphabet = Alphabet.first(n)
    obj = TableObjective.random(alphabet, L, seed)
    rng = np.random.default_rng(seed)
    res = rollout(VampEnv(alphabet, L, obj), lambda obs: int(rng.integers(n)))
    assert res.ret == obj.table[obj.index(res.structure.codes)]


def test_buffer_insert_sample_best(ab, rng):
    buf = StructBuffer(ab, 2)
    with pytest.raises(EmptyBufferError):
        buffer_sample_uniform(buf, rng)
    with pytest.raises(EmptyBufferError):
        buffer_best(buf)
    buffer_insert(buf, ab.encode("AB"), 1.0)
    buffer_insert(buf, ab.encode("BA"), 5.0)
    buffer_insert(buf, ab.encode("BB"), 5.0)
    s, v = buffer_best(buf)
    assert (str(s), v) == ("BA", 5.0)  # earliest of the ties
    assert buffer_sample_uniform(buf, rng)[0].is_complete
    with pytest.raises(InvalidStructureError):
        buf.insert(ab.encode("A_"), 0.0)


def test_buffer_sampling_is_uniform(ab):
    buf = StructBuffer(ab, 2)
    for text in ("AA", "AB", "BA", "BB"):
        buf.insert(ab.encode(text), 0.0)
    counts = np.bincount(buf.sample_index(np.random.default_rng(0), 40_000), minlength=4)
    assert np.all(np.abs(counts / 40_000 - 0.25) < 0.01)


def test_buffer_growth_and_capacity(ab):
    buf = StructBuffer(ab, 1, capacity=100)
    for i in range(250):
        buf.insert(ab.encode("AB"[i % 2]), float(i))
    assert len(buf) == 100
    assert buf.values[0] == 150.0 and buf.values[-1] == 249.0


def test_buffer_concurrent_inserts(ab):
    buf = StructBuffer(ab, 2)

    def work():
        for _ in range(500):
            buf.insert(ab.encode("AB"), 1.0)

    threads = [threading.Thread(target=work) for _ in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert len(buf) == 2000 and np.all(buf.codes == [0, 1])


def test_record_log_tracks_best(ab):
    log = RecordLog("X")
    for v in (1.0, 3.0, 2.0):
        log.log(ab.encode("AB"), v)
    assert [r.best_so_far for r in log.records] == [1.0, 3.0, 3.0]
    assert [r.step for r in log.records] == [0, 1, 2]


def test_mask_constant_is_negative():
    assert MASK < 0
