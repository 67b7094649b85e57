"""Chain orchestration: locking, trial assignment, validation, replayable logs.

A chain alternates tone and sentence items. Each trial shows one agent the
chain tip and collects the complementary item; the agent only ever sees the
previous iteration's output, which is what makes the process a Gibbs sweep.
Every state transition is appended to a line-delimited JSON log; replaying
the log against the same config reconstructs the exact engine state.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .agents import MalformedResponseError, ParseError
from .core import (
    ChainItem,
    ConfigError,
    InputError,
    LogicalClock,
    Sentence,
    Tone,
    ToneLabError,
    WallClock,
    canonical_json,
    item_from_dict,
    item_kind,
    item_to_dict,
)
from .validation import (
    FilterConfig,
    Lexicons,
    ValidationError,
    default_lexicons,
    validate_sentence,
    validate_tone,
)

DOMAINS = ("human", "llm", "synthetic")
TRIAL_KINDS = ("S", "T")
TRIAL_STATUSES = ("open", "accepted", "rejected", "expired")


class QuotaExhaustedError(ToneLabError):
    pass


class UnknownTrialError(InputError):
    pass


class TrialNotOpenError(InputError):
    pass


class ChainCompleteError(InputError):
    pass


class AgentFailureError(ToneLabError):
    pass


class StalledError(ToneLabError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    experiment_id: str
    n_chains: int
    n_iterations: int
    rng_seed: int
    backend: dict
    seed_items: tuple[ChainItem, ...]
    trials_min: int = 10
    trials_max: int = 12
    filters: FilterConfig = FilterConfig()
    timeout_seconds: float = 600.0
    retry_limit: int = 3

    def __post_init__(self) -> None:
        if self.n_chains < 1 or self.n_iterations < 1:
            raise ConfigError("need at least one chain and one iteration")
        if not (0 < self.trials_min <= self.trials_max):
            raise ConfigError(
                f"bad trial quota range [{self.trials_min}, {self.trials_max}]"
            )
        if not self.seed_items:
            raise ConfigError("seed_items must not be empty")
        if not 0 <= self.rng_seed < 2**64:
            raise ConfigError("rng_seed must fit in 64 bits")
        if self.backend.get("kind") not in DOMAINS:
            raise ConfigError(f"unknown backend kind: {self.backend.get('kind')!r}")

    @property
    def domain(self) -> str:
        return self.backend["kind"]

    def to_dict(self) -> dict:
        return {
            "experiment_id": self.experiment_id,
            "n_chains": self.n_chains,
            "n_iterations": self.n_iterations,
            "rng_seed": self.rng_seed,
            "backend": self.backend,
            "seed_items": [item_to_dict(i) for i in self.seed_items],
            "trials_min": self.trials_min,
            "trials_max": self.trials_max,
            "filters": vars(self.filters),
            "timeout_seconds": self.timeout_seconds,
            "retry_limit": self.retry_limit,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        return cls(
            experiment_id=doc["experiment_id"],
            n_chains=doc["n_chains"],
            n_iterations=doc["n_iterations"],
            rng_seed=doc["rng_seed"],
            backend=doc["backend"],
            seed_items=tuple(item_from_dict(d) for d in doc["seed_items"]),
            trials_min=doc.get("trials_min", 10),
            trials_max=doc.get("trials_max", 12),
            filters=FilterConfig(**doc.get("filters", {})),
            timeout_seconds=doc.get("timeout_seconds", 600.0),
            retry_limit=doc.get("retry_limit", 3),
        )


@dataclass
class HistoryEntry:
    iteration: int
    item: ChainItem
    agent_id: str


@dataclass
class ChainState:
    chain_id: str
    domain: str
    history: list[HistoryEntry]
    locked_by: Optional[str] = None

    @property
    def iteration(self) -> int:
        return self.history[-1].iteration

    @property
    def tip(self) -> ChainItem:
        return self.history[-1].item

    def assert_alternating(self) -> None:
        kinds = [item_kind(e.item) for e in self.history]
        for a, b in zip(kinds, kinds[1:]):
            assert a != b, f"chain {self.chain_id} does not alternate"
        assert [e.iteration for e in self.history] == list(range(len(self.history)))


@dataclass
class Trial:
    trial_id: str
    chain_id: str
    kind: str
    prompt: ChainItem
    agent_id: str
    status: str
    created_at: float
    resolved_at: Optional[float] = None
    response: Optional[ChainItem] = None
    rejection_reason: Optional[ValidationError] = None
    attempts: int = 0

    def to_record(self) -> dict:
        reason = None
        if self.rejection_reason is not None:
            reason = {"kind": self.rejection_reason.kind,
                      "detail": self.rejection_reason.detail}
        return {
            "trial_id": self.trial_id,
            "chain_id": self.chain_id,
            "kind": self.kind,
            "prompt": item_to_dict(self.prompt),
            "response": None if self.response is None else item_to_dict(self.response),
            "agent_id": self.agent_id,
            "status": self.status,
            "reason": reason,
            "created_at": self.created_at,
            "resolved_at": self.resolved_at,
        }


@dataclass(frozen=True)
class SubmissionResult:
    accepted: bool
    trial: Trial
    error: Optional[ValidationError] = None


class AssignmentLedger:
    """Which chains each participant touched, and how many trials they used."""

    def __init__(self):
        self._visited: dict[str, set[str]] = {}
        self._counts: dict[str, int] = {}

    def visited(self, agent_id: str) -> set[str]:
        return self._visited.get(agent_id, set())

    def count(self, agent_id: str) -> int:
        return self._counts.get(agent_id, 0)

    def record(self, agent_id: str, chain_id: str) -> None:
        seen = self._visited.setdefault(agent_id, set())
        if chain_id in seen:
            raise InputError(f"agent {agent_id} already visited chain {chain_id}")
        seen.add(chain_id)
        self._counts[agent_id] = self._counts.get(agent_id, 0) + 1

    def to_dict(self) -> dict:
        return {agent: sorted(chains) for agent, chains in sorted(self._visited.items())}


class ChainEngine:
    """Single-writer coordinator for one experiment. Public methods are
    serialized behind a lock, so the service can call in from worker threads."""

    def __init__(self, config: ExperimentConfig, *, lexicons: Optional[Lexicons] = None,
                 clock=None, log_path=None, grammar_checker=None, _seed_chains=True):
        self.config = config
        self.lexicons = lexicons or default_lexicons()
        self.clock = clock or (WallClock() if config.domain == "human" else LogicalClock())
        self.grammar_checker = grammar_checker
        self.log_path = Path(log_path) if log_path else None
        self.chains: dict[str, ChainState] = {}
        self.trials: dict[str, Trial] = {}
        self.ledger = AssignmentLedger()
        # indexes so assignment stays O(chains), not O(all past trials)
        self._open_trials: set[str] = set()
        self._open_by_agent: dict[str, str] = {}
        self._serial = 0
        self._lock = threading.RLock()
        self.lexicons.check_seed_tones(
            [i.text for i in config.seed_items if isinstance(i, Tone)]
        )
        if _seed_chains:
            self._seed()

    # -- construction ------------------------------------------------------

    def _seed(self) -> None:
        rng = np.random.default_rng(np.random.SeedSequence(self.config.rng_seed,
                                                           spawn_key=(0,)))
        for i in range(self.config.n_chains):
            pick = int(rng.integers(len(self.config.seed_items)))
            chain = ChainState(
                chain_id=f"c-{i:04d}",
                domain=self.config.domain,
                history=[HistoryEntry(0, self.config.seed_items[pick], "seed")],
            )
            self.chains[chain.chain_id] = chain

    # -- trial lifecycle ----------------------------------------------------

    def next_trial(self, agent_id: str) -> Optional[Trial]:
        """Assign (or hand back) an open trial for this participant.

        A participant holding an unresolved trial gets that same trial again,
        which is what makes a browser refresh safe. Returns None when every
        remaining chain is complete, locked, or already visited by them.
        """
        with self._lock:
            self.expire_stale()
            held = self._open_by_agent.get(agent_id)
            if held is not None:
                return self.trials[held]
            if self.ledger.count(agent_id) >= self.config.trials_max:
                raise QuotaExhaustedError(
                    f"agent {agent_id} reached the {self.config.trials_max}-trial quota"
                )
            visited = self.ledger.visited(agent_id)
            candidates = [
                c for c in self.chains.values()
                if c.iteration < self.config.n_iterations
                and c.locked_by is None
                and c.chain_id not in visited
            ]
            if not candidates:
                return None
            chain = min(candidates, key=lambda c: (c.iteration, c.chain_id))
            kind = "S" if isinstance(chain.tip, Tone) else "T"
            self._serial += 1
            trial = Trial(
                trial_id=f"t-{self._serial:06d}",
                chain_id=chain.chain_id,
                kind=kind,
                prompt=chain.tip,
                agent_id=agent_id,
                status="open",
                created_at=self.clock.now(),
            )
            chain.locked_by = trial.trial_id
            self.ledger.record(agent_id, chain.chain_id)
            self.trials[trial.trial_id] = trial
            self._open_trials.add(trial.trial_id)
            self._open_by_agent[agent_id] = trial.trial_id
            self._append_log(trial)
            return trial

    def submit_response(self, trial_id: str, raw_text: str) -> SubmissionResult:
        with self._lock:
            trial = self.trials.get(trial_id)
            if trial is None:
                raise UnknownTrialError(f"no such trial: {trial_id}")
            if trial.status != "open":
                raise TrialNotOpenError(f"trial {trial_id} is {trial.status}")
            chain = self.chains[trial.chain_id]
            if chain.iteration >= self.config.n_iterations:
                raise ChainCompleteError(f"chain {chain.chain_id} is complete")

            error = self._validate(trial, raw_text)
            if error is not None:
                trial.attempts += 1
                trial.rejection_reason = error
                self._append_log(_with_status(trial, "rejected"))
                return SubmissionResult(accepted=False, trial=trial, error=error)

            item: ChainItem
            if trial.kind == "S":
                item = Sentence(raw_text.strip())
            else:
                item = Tone.canonical(raw_text)
            assert item_kind(item) != item_kind(chain.tip), "alternation violated"
            trial.status = "accepted"
            trial.response = item
            trial.rejection_reason = None
            trial.resolved_at = self.clock.now()
            chain.history.append(
                HistoryEntry(chain.iteration + 1, item, trial.agent_id)
            )
            chain.locked_by = None
            self._close(trial)
            self._append_log(trial)
            return SubmissionResult(accepted=True, trial=trial)

    def _validate(self, trial: Trial, raw_text: str) -> Optional[ValidationError]:
        if trial.kind == "S":
            return validate_sentence(raw_text, trial.prompt.text, self.lexicons,
                                     self.config.filters, self.grammar_checker)
        return validate_tone(raw_text, trial.prompt.text, self.lexicons,
                             self.config.filters)

    def expire_trial(self, trial_id: str) -> None:
        with self._lock:
            trial = self.trials.get(trial_id)
            if trial is None:
                raise UnknownTrialError(f"no such trial: {trial_id}")
            if trial.status != "open":
                raise TrialNotOpenError(f"trial {trial_id} is {trial.status}")
            self._expire(trial, self.clock.now())

    def expire_stale(self, now: Optional[float] = None) -> list[str]:
        """Expire open trials older than the configured timeout. Human
        sessions that walk away release their chain through this path."""
        with self._lock:
            if now is None:
                now = self.clock.now()
            expired = []
            for trial_id in sorted(self._open_trials):
                trial = self.trials[trial_id]
                if now - trial.created_at > self.config.timeout_seconds:
                    self._expire(trial, now)
                    expired.append(trial_id)
            return expired

    def _expire(self, trial: Trial, now: float) -> None:
        trial.status = "expired"
        trial.resolved_at = now
        self.chains[trial.chain_id].locked_by = None
        self._close(trial)
        self._append_log(trial)

    def _close(self, trial: Trial) -> None:
        self._open_trials.discard(trial.trial_id)
        if self._open_by_agent.get(trial.agent_id) == trial.trial_id:
            del self._open_by_agent[trial.agent_id]

    # -- derived views ------------------------------------------------------

    def all_complete(self) -> bool:
        return all(c.iteration >= self.config.n_iterations
                   for c in self.chains.values())

    def tone_trials(self) -> list[tuple[str, int, str]]:
        """Accepted tone responses as (chain_id, iteration, tone), ordered
        by chain then iteration. Seed items (iteration 0) are not responses."""
        out = []
        for chain_id in sorted(self.chains):
            for entry in self.chains[chain_id].history:
                if entry.iteration > 0 and isinstance(entry.item, Tone):
                    out.append((chain_id, entry.iteration, entry.item.text))
        return out

    def sentence_trials(self) -> list[tuple[str, int, str]]:
        """Accepted sentence responses, same shape and order as tone_trials."""
        out = []
        for chain_id in sorted(self.chains):
            for entry in self.chains[chain_id].history:
                if entry.iteration > 0 and isinstance(entry.item, Sentence):
                    out.append((chain_id, entry.iteration, entry.item.text))
        return out

    def agent_rng(self, trial: Trial, attempt: int) -> np.random.Generator:
        """Per-call stream split from the master seed; independent of timing."""
        serial = int(trial.trial_id.split("-")[1])
        seq = np.random.SeedSequence(self.config.rng_seed,
                                     spawn_key=(1, serial, attempt))
        return np.random.default_rng(seq)

    # -- persistence ---------------------------------------------------------

    def _append_log(self, trial: Trial) -> None:
        if self.log_path is None:
            return
        with open(self.log_path, "a", encoding="utf-8") as f:
            f.write(canonical_json(trial.to_record()) + "\n")

    def snapshot(self) -> dict:
        with self._lock:
            return {
                "config": self.config.to_dict(),
                "chains": {
                    cid: {
                        "domain": c.domain,
                        "locked_by": c.locked_by,
                        "history": [
                            {"iteration": e.iteration, "item": item_to_dict(e.item),
                             "agent_id": e.agent_id}
                            for e in c.history
                        ],
                    }
                    for cid, c in sorted(self.chains.items())
                },
                "trials": [self.trials[t].to_record() for t in sorted(self.trials)],
                "ledger": self.ledger.to_dict(),
                "serial": self._serial,
            }

    def save_snapshot(self, path) -> None:
        Path(path).write_text(canonical_json(self.snapshot()) + "\n", encoding="utf-8")

    @classmethod
    def load_snapshot(cls, path, **kwargs) -> "ChainEngine":
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        config = ExperimentConfig.from_dict(doc["config"])
        engine = cls(config, _seed_chains=False, **kwargs)
        for cid, cdoc in doc["chains"].items():
            chain = ChainState(
                chain_id=cid,
                domain=cdoc["domain"],
                locked_by=cdoc["locked_by"],
                history=[
                    HistoryEntry(e["iteration"], item_from_dict(e["item"]),
                                 e["agent_id"])
                    for e in cdoc["history"]
                ],
            )
            chain.assert_alternating()
            engine.chains[cid] = chain
        for rec in doc["trials"]:
            trial = _trial_from_record(rec)
            engine.trials[trial.trial_id] = trial
            if trial.status == "open":
                engine._open_trials.add(trial.trial_id)
                engine._open_by_agent[trial.agent_id] = trial.trial_id
        for agent_id, chains in doc["ledger"].items():
            engine.ledger._visited[agent_id] = set(chains)
            engine.ledger._counts[agent_id] = len(chains)
        engine._serial = doc["serial"]
        return engine


def _with_status(trial: Trial, status: str) -> Trial:
    """Copy for log records that do not change the live trial; a rejection is
    logged as such while the trial itself stays open for another attempt."""
    clone = Trial(**{k: getattr(trial, k) for k in (
        "trial_id", "chain_id", "kind", "prompt", "agent_id", "status",
        "created_at", "resolved_at", "response", "rejection_reason", "attempts")})
    clone.status = status
    return clone


def _trial_from_record(rec: dict) -> Trial:
    reason = None
    if rec.get("reason"):
        reason = ValidationError(rec["reason"]["kind"], rec["reason"].get("detail", ""))
    return Trial(
        trial_id=rec["trial_id"],
        chain_id=rec["chain_id"],
        kind=rec["kind"],
        prompt=item_from_dict(rec["prompt"]),
        agent_id=rec["agent_id"],
        status=rec["status"],
        created_at=rec["created_at"],
        resolved_at=rec.get("resolved_at"),
        response=item_from_dict(rec["response"]) if rec.get("response") else None,
        rejection_reason=reason,
    )


# --------------------------------------------------------------------------
# factory, replay, autonomous driver


def create_experiment(config: ExperimentConfig, **kwargs) -> ChainEngine:
    """Fresh engine with chains seeded deterministically from the config."""
    return ChainEngine(config, **kwargs)


def replay_log(config: ExperimentConfig, source, *, attach: bool = False,
               **kwargs) -> ChainEngine:
    """Rebuild engine state by applying a trial log to a fresh experiment.

    The log is the source of truth: every open/rejected/accepted/expired
    record is applied in order and structural invariants are re-asserted.
    Raises InputError naming the first offending line on corruption. With
    attach=True the engine keeps appending to the replayed file, which is
    how a restarted service resumes.
    """
    engine = ChainEngine(config, **kwargs)
    path = Path(source)
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                _apply_record(engine, rec)
            except (ToneLabError, KeyError, ValueError, AssertionError) as exc:
                raise InputError(
                    f"corrupt trial log {path} at line {lineno}: {exc}"
                ) from exc
    for chain in engine.chains.values():
        chain.assert_alternating()
    if attach:
        engine.log_path = path
    return engine


def _apply_record(engine: ChainEngine, rec: dict) -> None:
    status = rec["status"]
    if status == "open":
        trial = _trial_from_record(rec)
        chain = engine.chains[trial.chain_id]
        assert chain.locked_by is None, f"chain {chain.chain_id} double-locked"
        assert item_to_dict(chain.tip) == rec["prompt"], "prompt is not the chain tip"
        chain.locked_by = trial.trial_id
        engine.ledger.record(trial.agent_id, trial.chain_id)
        engine.trials[trial.trial_id] = trial
        engine._open_trials.add(trial.trial_id)
        engine._open_by_agent[trial.agent_id] = trial.trial_id
        engine._serial = max(engine._serial, int(trial.trial_id.split("-")[1]))
        return
    trial = engine.trials.get(rec["trial_id"])
    if trial is None:
        raise InputError(f"record for unassigned trial {rec['trial_id']}")
    if trial.status != "open":
        raise InputError(f"record for closed trial {rec['trial_id']}")
    chain = engine.chains[trial.chain_id]
    if status == "rejected":
        trial.attempts += 1
        trial.rejection_reason = ValidationError(rec["reason"]["kind"],
                                                 rec["reason"].get("detail", ""))
        return
    if status == "accepted":
        item = item_from_dict(rec["response"])
        assert item_kind(item) != item_kind(chain.tip), "alternation violated"
        trial.status = "accepted"
        trial.response = item
        trial.resolved_at = rec["resolved_at"]
        chain.history.append(HistoryEntry(chain.iteration + 1, item, trial.agent_id))
        chain.locked_by = None
        engine._close(trial)
        return
    if status == "expired":
        trial.status = "expired"
        trial.resolved_at = rec["resolved_at"]
        chain.locked_by = None
        engine._close(trial)
        return
    raise InputError(f"unknown trial status {status!r}")


def run_autonomous(engine: ChainEngine, agent, *, stall_limit: int = 25) -> None:
    """Drive every chain to n_iterations with generated participant ids.

    Each simulated participant works until their quota or eligibility runs
    out. Rejected responses are retried up to the config's retry budget; the
    trial then expires and a fresh participant takes over the chain. A run
    that keeps failing without any acceptance raises StalledError; an agent
    whose answers cannot be parsed at all after the budget raises
    AgentFailureError (transport and auth errors propagate immediately).
    """
    prefix = getattr(agent, "backend_kind", "agent")
    counter = 0

    def fresh() -> str:
        nonlocal counter
        counter += 1
        return f"{prefix}-{counter:05d}"

    agent_id = fresh()
    fruitless = 0
    while not engine.all_complete():
        try:
            trial = engine.next_trial(agent_id)
        except QuotaExhaustedError:
            agent_id = fresh()
            continue
        if trial is None:
            agent_id = fresh()
            fruitless += 1
            if fruitless >= stall_limit:
                raise StalledError("no eligible chains despite incomplete work")
            continue
        accepted = False
        agent_broke = None
        for attempt in range(engine.config.retry_limit):
            rng = engine.agent_rng(trial, attempt)
            try:
                raw = agent.answer(trial.kind, trial.prompt.text, rng)
            except (ParseError, MalformedResponseError) as exc:
                agent_broke = exc
                continue
            agent_broke = None
            result = engine.submit_response(trial.trial_id, raw)
            if result.accepted:
                accepted = True
                break
        if accepted:
            fruitless = 0
            continue
        if agent_broke is not None:
            raise AgentFailureError(
                f"agent failed trial {trial.trial_id} after "
                f"{engine.config.retry_limit} attempts: {agent_broke!r}"
            ) from agent_broke
        engine.expire_trial(trial.trial_id)
        fruitless += 1
        agent_id = fresh()
        if fruitless >= stall_limit:
            raise StalledError(
                f"{fruitless} consecutive failures without progress"
            )
