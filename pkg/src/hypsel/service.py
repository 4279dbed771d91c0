"""HTTP service for human hypothesis selection.

Serves candidate transcript pairs from a running stage as one-shot tickets
(randomized left/right presentation, lease-and-reissue for abandoned
tickets), accepts selections, and feeds them to the trainer's selection
queue.  Selections are persisted to an append-only JSONL log before being
acknowledged, so an interrupted stage can resume without re-asking.

Public endpoints never expose reference transcripts or candidate WERs;
aggregate live WER appears in /api/status only when the service runs in
debug mode.
"""

import json
import threading
import time
from dataclasses import dataclass
from pathlib import Path

from .errors import HypselError, ValidationError
from .feedback import Selection

LEFT = "left"
RIGHT = "right"


class UnknownTicketError(HypselError):
    pass


class DuplicateSubmissionError(HypselError):
    pass


class NoActiveSessionError(HypselError):
    pass


@dataclass
class PairTicket:
    ticket_id: str
    utterance_id: str
    stage: int
    transcript1: tuple[int, ...]  # left pane
    transcript2: tuple[int, ...]  # right pane
    issued_at: float

    def to_json(self):
        return {
            "ticket_id": self.ticket_id,
            "utterance_id": self.utterance_id,
            "stage": self.stage,
            "transcript1": list(self.transcript1),
            "transcript2": list(self.transcript2),
            "issued_at": self.issued_at,
        }


_UNSERVED, _PENDING, _ANSWERED = 0, 1, 2


@dataclass
class _PairSlot:
    ticket_id: str
    utterance_id: str
    words1: tuple[int, ...]
    words2: tuple[int, ...]
    c1_side: str  # which pane shows candidate 1
    state: int = _UNSERVED
    lease_expiry: float = 0.0
    r: int | None = None
    wers: tuple[float, float] | None = None


class SelectionSession:
    """Linearizable ticket issue/submit state for one stage's pair set."""

    def __init__(self, pairs, stage_index, seed, *, lease_seconds=300.0,
                 log_path=None, clock=time.time, pair_wers=None):
        import numpy as np

        self.stage = stage_index
        self.lease_seconds = lease_seconds
        self.clock = clock
        self.log_path = Path(log_path) if log_path else None
        self._lock = threading.Lock()
        self._complete = threading.Condition(self._lock)
        rng = np.random.default_rng(np.random.SeedSequence([seed, 707, stage_index]))
        self.slots = []
        for i, pair in enumerate(pairs):
            side = LEFT if int(rng.integers(2)) == 0 else RIGHT
            self.slots.append(
                _PairSlot(
                    ticket_id=f"s{stage_index}-{i:06d}",
                    utterance_id=pair.utterance_id,
                    words1=tuple(int(w) for w in pair.candidate1.words),
                    words2=tuple(int(w) for w in pair.candidate2.words),
                    c1_side=side,
                    wers=pair_wers[i] if pair_wers else None,
                )
            )
        self._by_ticket = {s.ticket_id: s for s in self.slots}
        self._log_file = None
        if self.log_path is not None:
            self._replay_log()
            self._log_file = open(self.log_path, "a", encoding="utf-8")

    def _replay_log(self):
        if not self.log_path.exists():
            return
        for line in self.log_path.read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            entry = json.loads(line)
            slot = self._by_ticket.get(entry["ticket_id"])
            if slot is not None and slot.state != _ANSWERED:
                slot.state = _ANSWERED
                slot.r = int(entry["r"])

    def next_ticket(self) -> PairTicket | None:
        """Issue an unserved pair, or re-issue one whose lease expired."""
        now = self.clock()
        with self._lock:
            slot = next((s for s in self.slots if s.state == _UNSERVED), None)
            if slot is None:
                slot = next(
                    (s for s in self.slots
                     if s.state == _PENDING and s.lease_expiry <= now),
                    None,
                )
            if slot is None:
                return None
            slot.state = _PENDING
            slot.lease_expiry = now + self.lease_seconds
            t1 = slot.words1 if slot.c1_side == LEFT else slot.words2
            t2 = slot.words2 if slot.c1_side == LEFT else slot.words1
            return PairTicket(
                ticket_id=slot.ticket_id,
                utterance_id=slot.utterance_id,
                stage=self.stage,
                transcript1=t1,
                transcript2=t2,
                issued_at=now,
            )

    def submit(self, ticket_id: str, choice: str) -> Selection:
        """Map the choice through the recorded permutation; first answer wins."""
        if choice not in (LEFT, RIGHT):
            raise ValidationError(f"choice must be 'left' or 'right', got {choice!r}")
        with self._lock:
            slot = self._by_ticket.get(ticket_id)
            if slot is None:
                raise UnknownTicketError(f"unknown ticket {ticket_id!r}")
            if slot.state == _ANSWERED:
                raise DuplicateSubmissionError(f"ticket {ticket_id!r} already answered")
            if slot.state == _UNSERVED:
                raise UnknownTicketError(f"ticket {ticket_id!r} was never issued")
            r = 1 if choice == slot.c1_side else 0
            if self._log_file is not None:
                self._log_file.write(
                    json.dumps({"ticket_id": ticket_id, "choice": choice, "r": r}) + "\n"
                )
                self._log_file.flush()
            slot.state = _ANSWERED
            slot.r = r
            if all(s.state == _ANSWERED for s in self.slots):
                self._complete.notify_all()
            return Selection(r=r, source="human")

    def status(self, debug=False) -> dict:
        with self._lock:
            answered = sum(1 for s in self.slots if s.state == _ANSWERED)
            pending = sum(1 for s in self.slots if s.state == _PENDING)
            unserved = sum(1 for s in self.slots if s.state == _UNSERVED)
            info = {
                "stage": self.stage,
                "total": len(self.slots),
                "answered": answered,
                "pending": pending,
                "unserved": unserved,
                "remaining": pending + unserved,
                "complete": answered == len(self.slots),
            }
            if debug:
                done = [s for s in self.slots if s.state == _ANSWERED and s.wers]
                if done:
                    info["selected_wer_so_far"] = sum(
                        s.wers[0] if s.r == 1 else s.wers[1] for s in done
                    ) / len(done)
            return info

    def is_complete(self):
        with self._lock:
            return all(s.state == _ANSWERED for s in self.slots)

    def wait_complete(self, timeout=None) -> bool:
        deadline = None if timeout is None else time.monotonic() + timeout
        with self._complete:
            while not all(s.state == _ANSWERED for s in self.slots):
                remaining = None if deadline is None else deadline - time.monotonic()
                if remaining is not None and remaining <= 0:
                    return False
                self._complete.wait(remaining)
        return True

    def selections_in_order(self):
        with self._lock:
            return [Selection(r=s.r, source="human") for s in self.slots]

    def close(self):
        if self._log_file is not None:
            self._log_file.close()
            self._log_file = None


class SessionHub:
    """Single mutable slot publishing the active session to the HTTP layer."""

    def __init__(self):
        self._lock = threading.Lock()
        self._session = None

    def set(self, session):
        with self._lock:
            self._session = session

    def get(self):
        with self._lock:
            return self._session

    def require(self):
        session = self.get()
        if session is None:
            raise NoActiveSessionError("no interactive stage is active")
        return session


class ServiceSelector:
    """Trainer-side selector backed by the HTTP session queue.

    ``collect`` publishes a session for the stage's pairs and blocks until
    every pair is answered; answered selections persist in the append-only
    log, so a restarted stage resumes where it left off.
    """

    def __init__(self, hub: SessionHub, *, seed=0, lease_seconds=300.0,
                 log_dir=None, timeout=None, references=None):
        self.hub = hub
        self.seed = seed
        self.lease_seconds = lease_seconds
        self.log_dir = Path(log_dir) if log_dir else None
        self.timeout = timeout
        self.references = references
        self.stage_index = 0

    def collect(self, pairs):
        from .feedback import word_error_rate

        pair_wers = None
        if self.references is not None:
            pair_wers = [
                (
                    word_error_rate(p.candidate1.words, self.references[p.utterance_id]).wer,
                    word_error_rate(p.candidate2.words, self.references[p.utterance_id]).wer,
                )
                for p in pairs
            ]
        log_path = None
        if self.log_dir is not None:
            self.log_dir.mkdir(parents=True, exist_ok=True)
            log_path = self.log_dir / f"selections_stage_{self.stage_index}.jsonl"
        session = SelectionSession(
            pairs, self.stage_index, self.seed,
            lease_seconds=self.lease_seconds, log_path=log_path, pair_wers=pair_wers,
        )
        self.hub.set(session)
        try:
            if not session.wait_complete(self.timeout):
                raise TimeoutError(
                    f"stage {self.stage_index}: selection queue incomplete "
                    f"({session.status()['answered']}/{len(session.slots)} answered); "
                    "answered selections are checkpointed in the log"
                )
            return session.selections_in_order()
        finally:
            session.close()
            self.stage_index += 1


def create_app(hub: SessionHub, *, static_dir=None, debug=False):
    """FastAPI app over a SessionHub; optionally serves the UI bundle."""
    from fastapi import FastAPI, Request
    from fastapi.responses import JSONResponse

    app = FastAPI(title="hypsel selection service")

    @app.exception_handler(NoActiveSessionError)
    async def _no_session(request: Request, exc):
        return JSONResponse(status_code=409, content={"error": str(exc)})

    @app.get("/api/session")
    def get_session():
        session = hub.require()
        return {
            "stage": session.stage,
            "total_pairs": len(session.slots),
            "lease_seconds": session.lease_seconds,
        }

    @app.get("/api/pair")
    def get_pair():
        session = hub.require()
        ticket = session.next_ticket()
        if ticket is None:
            return {"exhausted": True, "complete": session.is_complete()}
        return {"exhausted": False, "ticket": ticket.to_json()}

    @app.post("/api/pair/{ticket_id}/selection")
    async def post_selection(ticket_id: str, request: Request):
        session = hub.require()
        try:
            payload = await request.json()
        except Exception:
            payload = None
        choice = payload.get("choice") if isinstance(payload, dict) else None
        try:
            session.submit(ticket_id, choice)
        except ValidationError as exc:
            return JSONResponse(status_code=422, content={"error": str(exc)})
        except UnknownTicketError as exc:
            return JSONResponse(status_code=404, content={"error": str(exc)})
        except DuplicateSubmissionError as exc:
            return JSONResponse(status_code=409, content={"error": str(exc)})
        return {"accepted": True}

    @app.get("/api/status")
    def get_status():
        session = hub.require()
        return session.status(debug=debug)

    if static_dir is not None and Path(static_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")
    return app
