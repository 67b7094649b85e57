"""HTTP trial service: the bridge between the chain engine, the rating
stores, and participant-facing clients (the web UI or scripted agents).

All mutations funnel through the engine's internal lock; the service only
adds a lock of its own around rating-log appends. State lives in append-only
JSONL files under one state directory, so a restarted service replays the
trial log and resumes exactly where it stopped.
"""

from __future__ import annotations

import json
import threading
from importlib import resources
from pathlib import Path
from typing import Optional

from fastapi import Body, FastAPI
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from . import __version__
from .core import InputError, ToneLabError
from .chains import (ChainEngine, ExperimentConfig, QuotaExhaustedError,
                     TrialNotOpenError, UnknownTrialError, create_experiment,
                     replay_log)
from .ratings import (FeatureRecord, RatingRecord, SimilarityRecord,
                      read_records, write_records)

INSTRUCTION_KINDS = ("sampling", "rating", "similarity", "feature")

RATING_LOGS = {
    "fit": "ratings.jsonl",
    "similarity": "similarity.jsonl",
    "feature": "features.jsonl",
}


def load_instructions() -> dict[str, dict]:
    root = resources.files("tonelab").joinpath("data/instructions")
    out = {}
    for kind in INSTRUCTION_KINDS:
        out[kind] = json.loads(
            root.joinpath(f"{kind}.json").read_text(encoding="utf-8"))
    return out


def open_engine(config: ExperimentConfig, state_dir) -> ChainEngine:
    """Fresh engine, or a replay of the existing trial log in state_dir.

    Replay failures (a corrupt or inconsistent record) propagate as
    InputError naming the offending line; the service refuses to start
    rather than serving from a broken history.
    """
    state_dir = Path(state_dir)
    state_dir.mkdir(parents=True, exist_ok=True)
    trial_log = state_dir / "trials.jsonl"
    if trial_log.exists():
        engine = replay_log(config, trial_log, attach=True)
    else:
        engine = create_experiment(config, log_path=trial_log)
    for name in RATING_LOGS.values():
        path = state_dir / name
        if path.exists():
            read_records(path)
    return engine


def _trial_payload(engine: ChainEngine, trial) -> dict:
    # the ledger charges a visit at assignment, so the trial being handed
    # out is already counted; the participant-facing number excludes it
    return {
        "trial_id": trial.trial_id,
        "chain_id": trial.chain_id,
        "kind": trial.kind,
        "prompt": {"kind": "tone" if trial.kind == "S" else "sentence",
                   "text": trial.prompt.text},
        "completed": engine.ledger.count(trial.agent_id) - 1,
        "quota": engine.config.trials_max,
    }


def _done_payload(engine: ChainEngine, participant_id: str, reason: str) -> dict:
    return {
        "done": True,
        "reason": reason,
        "completed": engine.ledger.count(participant_id),
        "quota": engine.config.trials_max,
    }


def _bad_request(detail: str) -> JSONResponse:
    return JSONResponse(status_code=422,
                        content={"kind": "bad-request", "detail": detail})


def _field(payload: dict, name: str, kind=str):
    value = payload.get(name)
    if not isinstance(value, kind) or (kind is str and not value):
        raise KeyError(name)
    return value


def create_app(engine: ChainEngine, *, state_dir=None,
               static_dir=None) -> FastAPI:
    """Wire the HTTP API around one engine.

    state_dir receives the rating-stage logs; without it the rating
    endpoints still validate and acknowledge but nothing persists, which is
    only useful in tests.
    """
    app = FastAPI(title="tonelab trial service", version=__version__)
    instructions = load_instructions()
    state_path = Path(state_dir) if state_dir else None
    log_lock = threading.Lock()

    def append(kind: str, record) -> None:
        if state_path is None:
            return
        with log_lock:
            write_records(state_path / RATING_LOGS[kind], [record])

    @app.get("/api/health")
    def health() -> dict:
        return {
            "status": "ok",
            "version": __version__,
            "experiment": engine.config.experiment_id,
            "backend": engine.config.domain,
            "complete": engine.all_complete(),
        }

    @app.get("/api/instructions/{kind}")
    def get_instructions(kind: str):
        doc = instructions.get(kind)
        if doc is None:
            return JSONResponse(
                status_code=404,
                content={"detail": f"unknown instruction kind {kind!r}; "
                                   f"one of {list(INSTRUCTION_KINDS)}"})
        return doc

    @app.get("/api/participant/{participant_id}/next-trial")
    def next_trial(participant_id: str):
        try:
            trial = engine.next_trial(participant_id)
        except QuotaExhaustedError:
            return _done_payload(engine, participant_id, "quota-reached")
        if trial is None:
            return _done_payload(engine, participant_id, "no-eligible-chains")
        return _trial_payload(engine, trial)

    @app.post("/api/trial/{trial_id}/response")
    def submit_response(trial_id: str, payload: dict = Body(...)):
        text = payload.get("text")
        if not isinstance(text, str) or not text.strip():
            return _bad_request("response needs a non-empty 'text' field")
        try:
            result = engine.submit_response(trial_id, text)
        except UnknownTrialError as exc:
            return JSONResponse(status_code=404, content={"detail": str(exc)})
        except TrialNotOpenError as exc:
            return JSONResponse(status_code=409, content={"detail": str(exc)})
        if not result.accepted:
            return JSONResponse(
                status_code=422,
                content={"kind": result.error.kind,
                         "detail": result.error.detail})
        trial = result.trial
        return {
            "accepted": True,
            "trial_id": trial.trial_id,
            "response": {"kind": "sentence" if trial.kind == "S" else "tone",
                         "text": trial.response.text},
            "completed": engine.ledger.count(trial.agent_id),
            "quota": engine.config.trials_max,
        }

    @app.post("/api/rating")
    def post_rating(payload: dict = Body(...)):
        try:
            record = RatingRecord(
                tone=_field(payload, "tone"),
                sentence=_field(payload, "sentence"),
                rater_id=_field(payload, "rater_id"),
                value=_field(payload, "value", int),
            )
        except KeyError as exc:
            return _bad_request(f"missing or malformed field {exc}")
        except InputError as exc:
            return JSONResponse(status_code=422,
                                content={"kind": "bad-record",
                                         "detail": str(exc)})
        append("fit", record)
        return {"recorded": True}

    @app.post("/api/similarity")
    def post_similarity(payload: dict = Body(...)):
        try:
            record = SimilarityRecord(
                tone_a=_field(payload, "tone_a"),
                tone_b=_field(payload, "tone_b"),
                rater_id=_field(payload, "rater_id"),
                value=_field(payload, "value", int),
            )
        except KeyError as exc:
            return _bad_request(f"missing or malformed field {exc}")
        except InputError as exc:
            return JSONResponse(status_code=422,
                                content={"kind": "bad-record",
                                         "detail": str(exc)})
        append("similarity", record)
        return {"recorded": True}

    @app.post("/api/feature-rating")
    def post_feature_rating(payload: dict = Body(...)):
        try:
            record = FeatureRecord(
                tone=_field(payload, "tone"),
                feature=_field(payload, "feature"),
                rater_id=_field(payload, "rater_id"),
                value=_field(payload, "value", int),
            )
        except KeyError as exc:
            return _bad_request(f"missing or malformed field {exc}")
        except InputError as exc:
            return JSONResponse(status_code=422,
                                content={"kind": "bad-record",
                                         "detail": str(exc)})
        append("feature", record)
        return {"recorded": True}

    if static_dir is not None and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(static_dir), html=True),
                  name="ui")
    return app


def build_service(config: ExperimentConfig, state_dir,
                  static_dir=None) -> FastAPI:
    """Replay-or-create an engine from the state directory and wrap it."""
    engine = open_engine(config, state_dir)
    return create_app(engine, state_dir=state_dir, static_dir=static_dir)
