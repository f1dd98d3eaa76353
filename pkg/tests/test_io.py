import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from timing_leak_lab.attacker import build_probe_schedule, observe_queue, reconstruct, reconstruction_table
from timing_leak_lab.core import SlotTrace, bernoulli_arrivals, extract_pattern
from timing_leak_lab.errors import ParameterError
from timing_leak_lab.io import (
    outcome_to_csv,
    queue_to_csv,
    read_commented_csv,
    reconstruction_to_csv,
    traces_from_csv,
    traces_from_json,
    traces_to_csv,
    traces_to_json,
)
from timing_leak_lab.schedulers import fcfs_run

pairs = st.integers(0, 40).flatmap(
    lambda n: st.tuples(
        st.lists(st.integers(0, 1), min_size=n, max_size=n),
        st.lists(st.integers(0, 1), min_size=n, max_size=n),
    )
)


def _pair(u, a):
    return SlotTrace(np.array(u, dtype=np.int8)), SlotTrace(np.array(a, dtype=np.int8))


@given(pairs)
def test_trace_csv_round_trip(pair):
    user, att = _pair(*pair)
    back_u, back_a = traces_from_csv(traces_to_csv(user, att))
    assert back_u == user and back_a == att


@given(pairs)
def test_trace_json_round_trip(pair):
    user, att = _pair(*pair)
    back_u, back_a = traces_from_json(traces_to_json(user, att))
    assert back_u == user and back_a == att


def test_trace_csv_layout(tmp_path):
    user, att = _pair([1, 0], [0, 1])
    path = tmp_path / "t.csv"
    traces_to_csv(user, att, path)
    assert path.read_text() == "slot,user_indicator,attacker_indicator\n0,1,0\n1,0,1\n"
    assert traces_from_csv(path)[0] == user


def test_trace_csv_rejects_gaps_and_columns():
    with pytest.raises(ParameterError):
        traces_from_csv("slot,user_indicator,attacker_indicator\n0,1,0\n2,0,1\n")
    with pytest.raises(ParameterError):
        traces_from_csv("t,u,a\n0,1,0\n")
    with pytest.raises(ParameterError):
        traces_to_csv(SlotTrace(np.zeros(2)), SlotTrace(np.zeros(3)))


def test_outcome_csv_sorted_by_departure():
    user, att = _pair([1, 1, 0, 0], [0, 1, 0, 0])
    lines = outcome_to_csv(fcfs_run(user, att)).splitlines()
    assert lines[0] == "job_id,party,arrival,departure"
    assert lines[1:] == ["0,user,0,1", "1,attacker,1,2", "2,user,1,3"]


def test_queue_csv():
    user, att = _pair([1, 1, 0], [1, 0, 0])
    text = queue_to_csv(fcfs_run(user, att))
    assert text.splitlines()[:4] == ["slot,q", "0,0", "1,1", "2,1"]


def test_reconstruction_csv_header_round_trip(tmp_path):
    probe = build_probe_schedule(3, 0.5, 10, seed=6)
    user = bernoulli_arrivals(0.3, probe.horizon_slots, 7).indicators.copy()
    user[-1] = 0
    rec = reconstruct(observe_queue(probe, fcfs_run(SlotTrace(user), probe.to_slot_trace())))
    rows = reconstruction_table(rec, extract_pattern(SlotTrace(user[:-1]), 3).counts)
    path = tmp_path / "r.csv"
    reconstruction_to_csv(rows, probe.header(), path)
    header, body = read_commented_csv(path.read_text())
    assert header["seed"] == "6" and header["T"] == "3"
    assert list(body[0]) == ["period", "true_X", "est_X", "status"]
    assert [int(r["est_X"]) for r in body] == [r[2] for r in rows]
