"""HTTP service exposing the record -> tag -> train -> talk -> correct loop.

One service owns one data directory: the corpus lives at its root, trained
heads in heads.ftmh, the turn log in turns.jsonl and correction records in
corrections.jsonl. Every mutation is persisted before the response goes out,
so killing and restarting the process retains all committed state. Mutations
serialize through one lock; training runs on a single background worker.
"""

from __future__ import annotations

import json
import os
import threading
import uuid
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, Query, Request, Response
from fastapi.responses import JSONResponse

from .corpus import Corpus, TaggedUtterance
from .errors import (
    EmptyScene,
    InvalidMarkers,
    IoFailure,
    MalformedContainer,
    MissingFile,
    MissingHead,
    SchemaVersionMismatch,
    UnknownClip,
    UnknownObject,
    UnknownTurn,
    UnsupportedEncoding,
    UntrainedHeads,
    VoxworldError,
)
from .features import FeatureConfig, visualization_bundle
from .model import Prediction, TrainConfig, load_heads, save_heads, train_all_heads
from .world import (
    AgentAction,
    AgentTurn,
    Correction,
    PlayerMessage,
    Scene,
    WorldSession,
    load_scene,
    preliminary_world,
)

HEADS_FILE = "heads.ftmh"
TURNS_FILE = "turns.jsonl"
CORRECTIONS_FILE = "corrections.jsonl"
SCENE_FILE = "scene.json"


@dataclass
class TrainingJob:
    job_id: str
    status: str = "running"  # running | done | failed
    error: str | None = None
    accuracies: dict[str, dict[str, float]] = field(default_factory=dict)


class SessionService:
    """State container behind the HTTP app; usable directly from Python too."""

    def __init__(self, data_dir: str, scene_path: str | None = None,
                 feature_cfg: FeatureConfig | None = None,
                 train_cfg: TrainConfig | None = None):
        self.data_dir = data_dir
        os.makedirs(data_dir, exist_ok=True)
        self.train_cfg = train_cfg or TrainConfig()
        self.lock = threading.Lock()
        self.jobs: dict[str, TrainingJob] = {}
        self._worker: threading.Thread | None = None

        if os.path.exists(os.path.join(data_dir, "manifest.json")):
            self.corpus = Corpus.load(data_dir)
        else:
            self.corpus = Corpus(feature_cfg=feature_cfg or FeatureConfig(), root=data_dir)

        scene_file = os.path.join(data_dir, SCENE_FILE)
        if os.path.exists(scene_file):
            scene = load_scene(scene_file)
        elif scene_path:
            scene = load_scene(scene_path)
        else:
            scene = preliminary_world()
        self.session = WorldSession(scene, self.corpus)
        self._persist_scene()

        heads_file = os.path.join(data_dir, HEADS_FILE)
        self.heads = load_heads(heads_file) if os.path.exists(heads_file) else {}

        self._load_turns()
        self._load_corrections()

    # --- persistence helpers ---------------------------------------------

    def _persist_scene(self) -> None:
        from .corpus import _atomic_write
        _atomic_write(os.path.join(self.data_dir, SCENE_FILE),
                      json.dumps(self.session.scene.to_json_dict(), indent=2).encode())

    def _append_line(self, filename: str, doc: dict) -> None:
        path = os.path.join(self.data_dir, filename)
        with open(path, "a") as fh:
            fh.write(json.dumps(doc) + "\n")
            fh.flush()
            os.fsync(fh.fileno())

    def _load_turns(self) -> None:
        path = os.path.join(self.data_dir, TURNS_FILE)
        if not os.path.exists(path):
            return
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                try:
                    doc = json.loads(line)
                except json.JSONDecodeError:
                    continue  # torn tail write; the turn was never acknowledged
                turn = AgentTurn(
                    turn_id=doc["turn_id"],
                    message=PlayerMessage(clip_id=doc["clip_id"],
                                          pointed_object=doc.get("pointed_object")),
                    prediction=Prediction(probs={k: np.asarray(v) for k, v in
                                                 doc.get("prediction", {}).items()}),
                    action=AgentAction(**{k: tuple(map(tuple, v)) if k == "path" else v
                                          for k, v in doc["action"].items()}),
                    resolved_tags=doc.get("resolved_tags", {}),
                )
                self.session.turns[turn.turn_id] = turn

    def _load_corrections(self) -> None:
        path = os.path.join(self.data_dir, CORRECTIONS_FILE)
        if not os.path.exists(path):
            return
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                try:
                    doc = json.loads(line)
                except json.JSONDecodeError:
                    continue
                self.session.corrections[doc["turn_id"]] = doc["utterance_id"]

    # --- operations --------------------------------------------------------

    def add_recording(self, wav_bytes: bytes) -> str:
        with self.lock:
            return self.corpus.add_clip(wav_bytes)

    def add_utterance(self, clip_id: str, markers: TaggedUtterance) -> str:
        with self.lock:
            utterance_id = self.session.register_training_phrase(clip_id, markers)
            self._persist_scene()
            return utterance_id

    def start_training(self) -> TrainingJob:
        with self.lock:
            if any(j.status == "running" for j in self.jobs.values()):
                raise IoFailure("a training job is already running")
            job = TrainingJob(job_id=uuid.uuid4().hex[:12])
            self.jobs[job.job_id] = job
            self._worker = threading.Thread(target=self._run_training, args=(job,),
                                            daemon=True)
            self._worker.start()
            return job

    def _run_training(self, job: TrainingJob) -> None:
        try:
            with self.lock:
                heads = train_all_heads(self.corpus, self.train_cfg)
                save_heads(heads, os.path.join(self.data_dir, HEADS_FILE))
                self.corpus.mark_corrections_consumed()
                self.heads = heads
                job.accuracies = {
                    name: {"train": th.train_accuracy, "test": th.test_accuracy}
                    for name, th in heads.items()
                }
                job.status = "done"
        except Exception as exc:  # report, never crash the worker
            job.status = "failed"
            job.error = f"{type(exc).__name__}: {exc}"

    def talk(self, wav_bytes: bytes, pointed_object: int | None) -> AgentTurn:
        with self.lock:
            if not self.heads:
                raise UntrainedHeads("train before talking")
            clip_id = self.corpus.add_clip(wav_bytes)
            turn = self.session.handle_turn(self.heads,
                                            PlayerMessage(clip_id, pointed_object))
            self._append_line(TURNS_FILE, turn.to_json_dict())
            self._persist_scene()
            return turn

    def correct(self, turn_id: str, markers: TaggedUtterance) -> str:
        with self.lock:
            utterance_id = self.session.apply_correction(Correction(turn_id, markers))
            self._append_line(CORRECTIONS_FILE,
                              {"turn_id": turn_id, "utterance_id": utterance_id})
            return utterance_id


_STATUS = {
    MalformedContainer: 400,
    UnsupportedEncoding: 400,
    InvalidMarkers: 422,
    UnknownClip: 404,
    UnknownTurn: 404,
    UnknownObject: 404,
    MissingFile: 404,
    MissingHead: 409,
    UntrainedHeads: 409,
    EmptyScene: 409,
    SchemaVersionMismatch: 409,
    IoFailure: 409,
}


def create_app(service: SessionService) -> FastAPI:
    app = FastAPI(title="voxworld")

    @app.exception_handler(VoxworldError)
    async def _handle(request: Request, exc: VoxworldError):
        status = next((code for cls, code in _STATUS.items() if isinstance(exc, cls)), 400)
        return JSONResponse(
            status_code=status,
            content={
                "code": exc.code,
                "message": str(exc),
                "detail_path": getattr(exc, "field_path", None),
            },
        )

    @app.post("/recordings")
    async def post_recording(request: Request):
        body = await request.body()
        return {"clip_id": service.add_recording(body)}

    @app.post("/utterances")
    async def post_utterance(doc: dict):
        try:
            markers = TaggedUtterance.from_json_dict(doc["markers"])
        except (KeyError, ValueError, TypeError) as exc:
            raise InvalidMarkers("markers", f"unparseable: {exc}")
        return {"utterance_id": service.add_utterance(doc.get("clip_id", markers.clip_id),
                                                      markers)}

    @app.get("/readiness")
    async def get_readiness():
        return {"patterns": {str(k): v for k, v in service.corpus.readiness().items()},
                "threshold": service.corpus.repetition_threshold}

    @app.post("/train", status_code=202)
    async def post_train():
        job = service.start_training()
        return {"job_id": job.job_id}

    @app.get("/train/{job_id}")
    async def get_train(job_id: str):
        job = service.jobs.get(job_id)
        if job is None:
            return JSONResponse(status_code=404, content={
                "code": "unknown_job", "message": job_id, "detail_path": None})
        return {"job_id": job.job_id, "status": job.status,
                "error": job.error, "accuracies": job.accuracies}

    @app.post("/talk")
    async def post_talk(request: Request, point: int | None = Query(default=None)):
        body = await request.body()
        return service.talk(body, point).to_json_dict()

    @app.post("/corrections")
    async def post_correction(doc: dict):
        try:
            markers = TaggedUtterance.from_json_dict(doc["markers"])
        except (KeyError, ValueError, TypeError) as exc:
            raise InvalidMarkers("markers", f"unparseable: {exc}")
        return {"utterance_id": service.correct(doc["turn_id"], markers)}

    @app.get("/world")
    async def get_world():
        return service.session.scene.to_json_dict()

    @app.get("/clips/{clip_id}")
    async def get_clip(clip_id: str):
        return Response(content=service.corpus.clip_bytes(clip_id),
                        media_type="audio/wav")

    @app.get("/viz/{clip_id}")
    async def get_viz(clip_id: str):
        clip = service.corpus.analysis_clip(clip_id)
        return visualization_bundle(clip, service.corpus.feature_cfg).to_json_dict()

    @app.get("/config")
    async def get_config():
        from dataclasses import asdict
        return {"feature_config": asdict(service.corpus.feature_cfg),
                "train_config": asdict(service.train_cfg),
                "config_hash": service.corpus.feature_cfg.config_hash()}

    return app
