"""HTTP service administering the choice experiment.

Sessions assign 16 feedback-condition and 4 no-feedback-condition problems
(least-covered-first over the pool), five trials per problem. Each submitted
choice samples a correlated payoff pair server-side; the forgone payoff is
revealed only in feedback trials. Finalization applies the same-side exclusion
rule (strictly more than 80% of trials on one side). Completed sessions
aggregate into the standard target CSV: participant-level choice fractions
averaged per (problem, condition).

State lives in memory behind a lock, mirrored to an append-only JSONL record
log that is replayed on restart. Money crosses the wire as fixed-precision
decimal strings.
"""

from __future__ import annotations

import io
import json
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from pydantic import BaseModel

from .datasets import TARGET_CSV_HEADER, TargetRecord
from .gambles import Problem, ValidationError, expand, sample_joint, to_cents

AggregateRecord = TargetRecord

FEEDBACK = "feedback"
NO_FEEDBACK = "no_feedback"
# Exported block codes: the no-feedback condition is block 1, feedback block 2.
BLOCK_OF_CONDITION = {NO_FEEDBACK: 1, FEEDBACK: 2}


class NotFoundError(KeyError):
    """Unknown session or problem id."""


class StateError(RuntimeError):
    """Request is valid but the session is in the wrong state for it."""


def _money(cents: int) -> str:
    sign = "-" if cents < 0 else ""
    cents = abs(cents)
    return f"{sign}{cents // 100}.{cents % 100:02d}"


@dataclass
class AssignedProblem:
    problem: Problem
    condition: str
    a_side: str  # "left" or "right"
    trials_done: int = 0
    a_choices: int = 0


@dataclass
class TrialRecord:
    session_id: str
    problem_id: str
    trial_index: int
    condition: str
    choice: str
    side: str
    payoff_obtained_cents: int
    payoff_forgone_cents: int | None
    timestamp: float


@dataclass
class Session:
    id: str
    participant_id: str
    assigned: list[AssignedProblem]
    trials_per_problem: int
    status: str = "active"
    cumulative_cents: int = 0
    trials: list[TrialRecord] = field(default_factory=list)

    def total_trials(self) -> int:
        return self.trials_per_problem * len(self.assigned)

    def trials_submitted(self) -> int:
        return len(self.trials)

    def find(self, problem_id: str) -> AssignedProblem:
        for ap in self.assigned:
            if ap.problem.id == problem_id:
                return ap
        raise NotFoundError(f"problem {problem_id!r} is not assigned to this session")

    def current(self) -> AssignedProblem | None:
        for ap in self.assigned:
            if ap.trials_done < self.trials_per_problem:
                return ap
        return None


class ExperimentServer:
    """In-memory experiment state with an append-only persistence log."""

    def __init__(
        self,
        problems: Sequence[Problem],
        seed: int = 0,
        trials_per_problem: int = 5,
        feedback_count: int = 16,
        no_feedback_count: int = 4,
        exclusion_threshold: float = 0.8,
        log_path: str | Path | None = None,
    ):
        if not problems:
            raise ValidationError("problem pool is empty")
        self.pool = list(problems)
        self.by_id = {p.id: p for p in self.pool}
        if len(self.by_id) != len(self.pool):
            raise ValidationError("problem pool contains duplicate ids")
        self.rng = np.random.default_rng(seed)
        self.trials_per_problem = trials_per_problem
        self.feedback_count = feedback_count
        self.no_feedback_count = no_feedback_count
        self.exclusion_threshold = exclusion_threshold
        self.sessions: dict[str, Session] = {}
        self.coverage = {p.id: 0 for p in self.pool}
        self.lock = threading.Lock()
        self.log_path = Path(log_path) if log_path else None
        if self.log_path and self.log_path.exists():
            self._replay_log()

    # -- persistence ------------------------------------------------------------

    def _append_log(self, event: dict) -> None:
        if self.log_path is None:
            return
        with open(self.log_path, "a") as fh:
            fh.write(json.dumps(event, sort_keys=True) + "\n")

    def _replay_log(self) -> None:
        assert self.log_path is not None
        with open(self.log_path) as fh:
            for line in fh:
                if line.strip():
                    self._apply_event(json.loads(line))

    def _apply_event(self, ev: dict) -> None:
        kind = ev["event"]
        if kind == "session":
            assigned = [
                AssignedProblem(self.by_id[pid], cond, side)
                for pid, cond, side in ev["assigned"]
            ]
            s = Session(ev["session_id"], ev["participant_id"], assigned, ev["trials_per_problem"])
            self.sessions[s.id] = s
            for ap in assigned:
                self.coverage[ap.problem.id] += 1
        elif kind == "trial":
            s = self.sessions[ev["session_id"]]
            ap = s.find(ev["problem_id"])
            ap.trials_done += 1
            if ev["choice"] == "A":
                ap.a_choices += 1
            s.cumulative_cents += ev["obtained_cents"]
            s.trials.append(
                TrialRecord(
                    s.id, ev["problem_id"], ev["trial_index"], ap.condition,
                    ev["choice"], ev["side"], ev["obtained_cents"],
                    ev.get("forgone_cents"), ev.get("timestamp", 0.0),
                )
            )
        elif kind == "finalize":
            self.sessions[ev["session_id"]].status = ev["status"]

    # -- operations ----------------------------------------------------------------

    def create_session(self, participant_id: str) -> Session:
        with self.lock:
            n_assign = self.feedback_count + self.no_feedback_count
            if len(self.pool) < n_assign:
                raise ValidationError(
                    f"pool holds {len(self.pool)} problems; {n_assign} needed per session"
                )
            # least-covered-first with a seeded shuffle among ties
            tiebreak = self.rng.permutation(len(self.pool))
            order = sorted(range(len(self.pool)), key=lambda i: (self.coverage[self.pool[i].id], tiebreak[i]))
            chosen = [self.pool[i] for i in order[:n_assign]]
            conditions = [FEEDBACK] * self.feedback_count + [NO_FEEDBACK] * self.no_feedback_count
            self.rng.shuffle(conditions)  # interleave the two conditions
            assigned = [
                AssignedProblem(p, cond, "left" if self.rng.random() < 0.5 else "right")
                for p, cond in zip(chosen, conditions)
            ]
            session = Session(uuid.uuid4().hex[:12], participant_id, assigned, self.trials_per_problem)
            self.sessions[session.id] = session
            for ap in assigned:
                self.coverage[ap.problem.id] += 1
            self._append_log({
                "event": "session",
                "session_id": session.id,
                "participant_id": participant_id,
                "trials_per_problem": self.trials_per_problem,
                "assigned": [[ap.problem.id, ap.condition, ap.a_side] for ap in assigned],
            })
            return session

    def _session(self, session_id: str) -> Session:
        s = self.sessions.get(session_id)
        if s is None:
            raise NotFoundError(f"unknown session {session_id!r}")
        return s

    def _gamble_descriptor(self, p: Problem, which: str) -> dict:
        g = p.gamble_a if which == "A" else p.gamble_b
        dist = expand(g)
        hide = which == "B" and p.amb
        outcomes = []
        for payoff, prob in dist.outcomes:
            entry: dict = {"payoff": _money(to_cents(payoff))}
            if not hide:
                entry["probability"] = prob
            outcomes.append(entry)
        return {"gamble": which, "outcomes": outcomes, "probabilities_hidden": hide}

    def trial_descriptor(self, session_id: str) -> dict:
        with self.lock:
            s = self._session(session_id)
            if s.status != "active":
                return {"done": True, "status": s.status,
                        "cumulative_reward": _money(s.cumulative_cents)}
            ap = s.current()
            if ap is None:
                return {"done": True, "status": "awaiting_finalize",
                        "cumulative_reward": _money(s.cumulative_cents)}
            left_g = "A" if ap.a_side == "left" else "B"
            right_g = "B" if ap.a_side == "left" else "A"
            return {
                "done": False,
                "problem_id": ap.problem.id,
                "condition": ap.condition,
                "trial_index": s.trials_submitted() + 1,
                "trials_total": s.total_trials(),
                "trial_in_problem": ap.trials_done + 1,
                "trials_per_problem": s.trials_per_problem,
                "left": self._gamble_descriptor(ap.problem, left_g),
                "right": self._gamble_descriptor(ap.problem, right_g),
                "cumulative_reward": _money(s.cumulative_cents),
            }

    def submit_choice(self, session_id: str, problem_id: str, choice: str) -> dict:
        if choice not in ("A", "B"):
            raise ValidationError(f"choice must be 'A' or 'B', got {choice!r}")
        with self.lock:
            s = self._session(session_id)
            if s.status != "active":
                raise StateError(f"session is {s.status}")
            ap = s.find(problem_id)
            if ap.trials_done >= s.trials_per_problem:
                raise StateError(f"problem {problem_id!r} has no trials remaining")
            pay_a, pay_b = sample_joint(ap.problem, self.rng)
            obtained = to_cents(pay_a if choice == "A" else pay_b)
            forgone = to_cents(pay_b if choice == "A" else pay_a)
            side = ap.a_side if choice == "A" else ("right" if ap.a_side == "left" else "left")
            ap.trials_done += 1
            if choice == "A":
                ap.a_choices += 1
            s.cumulative_cents += obtained
            record = TrialRecord(
                s.id, problem_id, s.trials_submitted() + 1, ap.condition,
                choice, side, obtained, forgone if ap.condition == FEEDBACK else None,
                time.time(),
            )
            s.trials.append(record)
            self._append_log({
                "event": "trial",
                "session_id": s.id,
                "problem_id": problem_id,
                "trial_index": record.trial_index,
                "choice": choice,
                "side": side,
                "obtained_cents": obtained,
                "forgone_cents": record.payoff_forgone_cents,
                "timestamp": record.timestamp,
            })
            out = {
                "problem_id": problem_id,
                "trial_index": record.trial_index,
                "obtained": _money(obtained),
                "cumulative_reward": _money(s.cumulative_cents),
                "problem_exhausted": ap.trials_done >= s.trials_per_problem,
                "session_complete": s.current() is None,
            }
            if ap.condition == FEEDBACK:
                out["forgone"] = _money(forgone)
            return out

    def finalize_session(self, session_id: str) -> dict:
        with self.lock:
            s = self._session(session_id)
            if s.status != "active":
                return {"status": s.status, "cumulative_reward": _money(s.cumulative_cents)}
            if s.trials_submitted() < s.total_trials():
                raise StateError(
                    f"{s.trials_submitted()}/{s.total_trials()} trials submitted; session incomplete"
                )
            sides = [t.side for t in s.trials]
            same_side = max(sides.count("left"), sides.count("right")) / len(sides)
            s.status = "excluded" if same_side > self.exclusion_threshold else "complete"
            self._append_log({"event": "finalize", "session_id": s.id, "status": s.status,
                              "same_side_fraction": same_side})
            return {
                "status": s.status,
                "same_side_fraction": same_side,
                "cumulative_reward": _money(s.cumulative_cents),
            }

    def aggregate(self, problem_ids: Sequence[str] | None = None) -> list[AggregateRecord]:
        """Participant-mean choice-A rates per (problem, condition), over
        completed sessions only."""
        with self.lock:
            wanted = set(problem_ids) if problem_ids is not None else None
            fractions: dict[tuple[str, str], list[float]] = {}
            for s in self.sessions.values():
                if s.status != "complete":
                    continue
                for ap in s.assigned:
                    if wanted is not None and ap.problem.id not in wanted:
                        continue
                    if ap.trials_done == 0:
                        continue
                    key = (ap.problem.id, ap.condition)
                    fractions.setdefault(key, []).append(ap.a_choices / ap.trials_done)
            records = []
            for (pid, cond), fr in sorted(fractions.items()):
                records.append(
                    AggregateRecord(
                        pid, BLOCK_OF_CONDITION[cond], cond == FEEDBACK,
                        len(fr), float(np.mean(fr)),
                    )
                )
            return records

    def aggregates_csv(self) -> str:
        buf = io.StringIO()
        buf.write(",".join(TARGET_CSV_HEADER) + "\r\n")
        for r in self.aggregate():
            buf.write(f"{r.problem_id},{r.block},{int(r.feedback)},{r.n},{r.a_rate!r}\r\n")
        return buf.getvalue()


class SessionRequest(BaseModel):
    participant_id: str


class ChoiceRequest(BaseModel):
    problem_id: str
    choice: str


def create_app(server: ExperimentServer):
    """FastAPI wrapper exposing the HTTP+JSON surface."""
    from fastapi import FastAPI, HTTPException
    from fastapi.responses import PlainTextResponse

    app = FastAPI(title="choice experiment service")

    def guarded(fn, *args):
        try:
            return fn(*args)
        except NotFoundError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        except StateError as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        except ValidationError as exc:
            raise HTTPException(status_code=400, detail=str(exc))

    @app.post("/sessions")
    def create_session(req: SessionRequest):
        s = guarded(server.create_session, req.participant_id)
        return {
            "session_id": s.id,
            "participant_id": s.participant_id,
            "n_problems": len(s.assigned),
            "trials_per_problem": s.trials_per_problem,
            "trials_total": s.total_trials(),
        }

    @app.get("/sessions/{session_id}/next")
    def next_trial(session_id: str):
        return guarded(server.trial_descriptor, session_id)

    @app.post("/sessions/{session_id}/choices")
    def submit(session_id: str, req: ChoiceRequest):
        return guarded(server.submit_choice, session_id, req.problem_id, req.choice)

    @app.post("/sessions/{session_id}/finalize")
    def finalize(session_id: str):
        return guarded(server.finalize_session, session_id)

    @app.get("/aggregates")
    def aggregates(format: str = "json"):
        if format == "csv":
            return PlainTextResponse(server.aggregates_csv(), media_type="text/csv")
        return [
            {"problem_id": r.problem_id, "block": r.block, "feedback": r.feedback,
             "n": r.n, "a_rate": r.a_rate}
            for r in server.aggregate()
        ]

    return app
