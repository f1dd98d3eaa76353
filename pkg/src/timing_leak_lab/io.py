"""CSV and JSON serialisation of traces, outcomes and reconstructions.

File layouts
------------
trace CSV
    ``slot,user_indicator,attacker_indicator`` - one row per slot.
trace JSON
    ``{"horizon_slots": H, "user": [...], "attacker": [...]}`` with the
    arrival slots of each party.
outcome CSV
    ``job_id,party,arrival,departure`` - ``party`` is ``user`` or ``attacker``,
    rows sorted by departure.
queue CSV
    ``slot,q``.
reconstruction CSV
    ``period,true_X,est_X,status`` preceded by ``# key=value`` header lines
    that record the probe parameters (T, omega, n_periods, seed).
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path
from typing import Iterable, Mapping, Optional

import numpy as np

from .core import SlotTrace, slot_trace_from_times
from .errors import ParameterError
from .schedulers import ScheduleOutcome

TRACE_COLUMNS = ("slot", "user_indicator", "attacker_indicator")
OUTCOME_COLUMNS = ("job_id", "party", "arrival", "departure")
QUEUE_COLUMNS = ("slot", "q")
RECONSTRUCTION_COLUMNS = ("period", "true_X", "est_X", "status")


def _write(path, text):
    if path is None:
        return text
    Path(path).write_text(text, encoding="utf-8", newline="")
    return text


def traces_to_csv(user: SlotTrace, attacker: SlotTrace, path=None) -> str:
    if user.horizon_slots != attacker.horizon_slots:
        raise ParameterError("traces must share a horizon")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_COLUMNS)
    for t, (u, a) in enumerate(zip(user.indicators.tolist(), attacker.indicators.tolist())):
        w.writerow((t, u, a))
    return _write(path, buf.getvalue())


def traces_from_csv(source) -> tuple[SlotTrace, SlotTrace]:
    text = Path(source).read_text(encoding="utf-8") if isinstance(source, Path) else source
    rows = list(csv.DictReader(io.StringIO(text)))
    if rows and tuple(rows[0].keys()) != TRACE_COLUMNS:
        raise ParameterError(f"expected columns {TRACE_COLUMNS}")
    slots = [int(r["slot"]) for r in rows]
    if slots != list(range(len(rows))):
        raise ParameterError("slots must run 0, 1, 2, ... without gaps")
    user = SlotTrace(np.array([int(r["user_indicator"]) for r in rows], dtype=np.int8))
    att = SlotTrace(np.array([int(r["attacker_indicator"]) for r in rows], dtype=np.int8))
    return user, att


def traces_to_json(user: SlotTrace, attacker: SlotTrace) -> str:
    return json.dumps(
        {
            "horizon_slots": user.horizon_slots,
            "user": user.arrival_times().tolist(),
            "attacker": attacker.arrival_times().tolist(),
        },
        separators=(",", ":"),
    )


def traces_from_json(text: str) -> tuple[SlotTrace, SlotTrace]:
    d = json.loads(text)
    h = int(d["horizon_slots"])
    return slot_trace_from_times(d["user"], h), slot_trace_from_times(d["attacker"], h)


def outcome_to_csv(outcome: ScheduleOutcome, path=None) -> str:
    jobs = []
    for party, trace in (("user", outcome.user_trace), ("attacker", outcome.attacker_trace)):
        for a, d in zip(trace.arrivals.tolist(), trace.departures.tolist()):
            jobs.append((d, a, party))
    jobs.sort()
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(OUTCOME_COLUMNS)
    for i, (d, a, party) in enumerate(jobs):
        w.writerow((i, party, a, d))
    return _write(path, buf.getvalue())


def queue_to_csv(outcome: ScheduleOutcome, path=None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(QUEUE_COLUMNS)
    for t, q in enumerate(outcome.queue_lengths.tolist()):
        w.writerow((t, q))
    return _write(path, buf.getvalue())


def reconstruction_to_csv(
    rows: Iterable[tuple], header: Optional[Mapping] = None, path=None
) -> str:
    buf = io.StringIO()
    for key, value in (header or {}).items():
        buf.write(f"# {key}={value}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RECONSTRUCTION_COLUMNS)
    for row in rows:
        w.writerow(row)
    return _write(path, buf.getvalue())


def read_commented_csv(text: str) -> tuple[dict, list[dict]]:
    """Split ``# key=value`` header lines from a CSV body."""
    header, body = {}, []
    for line in text.splitlines(keepends=True):
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition("=")
            header[key.strip()] = value.strip()
        else:
            body.append(line)
    return header, list(csv.DictReader(io.StringIO("".join(body))))
