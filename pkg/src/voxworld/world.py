"""The virtual world and the agent's conversational behavior.

A Scene holds objects with positions and property values (color, size). In
training mode the teacher's tagged phrases both feed the corpus and build a
chain registry: which patterns name objects, which ask questions, which carry
property checks, and which clips answer what. In talking mode the agent
classifies an incoming clip with the trained heads and dispatches on the
recognized intonation and pattern: reply with a taught clip, point, navigate,
or ask for clarification. Corrections append new training material without
rewriting past turns.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .corpus import Corpus, Intonation, TaggedUtterance, WordFunction
from .errors import (
    EmptyScene,
    InvalidMarkers,
    UnknownObject,
    UnknownTurn,
    UntrainedHeads,
)
from .model import Prediction, TrainedHead, predict

DEFAULT_CONFIDENCE_THRESHOLD = 0.5


@dataclass
class SceneObject:
    object_id: int
    position: tuple[float, float]
    color: str
    size: str
    name_hint: str = ""
    answer_clips: dict[int, str] = field(default_factory=dict)  # pattern -> clip

    def property_value(self, kind: str) -> str | None:
        return {"color": self.color, "size": self.size}.get(kind)


@dataclass
class Scene:
    """Up to ten objects, the agent marker, and the property vocabularies.

    `vocabularies` maps property kinds to value names and both to vocabulary
    slots, e.g. {"kinds": {"color": 7}, "values": {"color": {"green": 9}}}.
    """

    objects: dict[int, SceneObject]
    agent_position: tuple[float, float] = (0.0, 0.0)
    vocabularies: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.objects) > 10:
            raise ValueError("a scene holds at most 10 objects")

    def object(self, object_id: int) -> SceneObject:
        if object_id not in self.objects:
            raise UnknownObject(f"object {object_id} not in scene")
        return self.objects[object_id]

    def kind_of_vocab(self, vocab_id: int) -> str | None:
        for kind, vid in self.vocabularies.get("kinds", {}).items():
            if vid == vocab_id:
                return kind
        return None

    def value_of_vocab(self, vocab_id: int) -> tuple[str, str] | None:
        for kind, values in self.vocabularies.get("values", {}).items():
            for value, vid in values.items():
                if vid == vocab_id:
                    return kind, value
        return None

    def to_json_dict(self) -> dict:
        return {
            "objects": [
                {
                    "id": o.object_id,
                    "name_hint": o.name_hint,
                    "position": list(o.position),
                    "color": o.color,
                    "size": o.size,
                    "answer_clips": {str(k): v for k, v in o.answer_clips.items()},
                }
                for o in self.objects.values()
            ],
            "agent": list(self.agent_position),
            "vocabularies": self.vocabularies,
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "Scene":
        objects = {}
        for o in doc.get("objects", []):
            objects[o["id"]] = SceneObject(
                object_id=o["id"],
                position=tuple(o["position"]),
                color=o.get("color", ""),
                size=o.get("size", ""),
                name_hint=o.get("name_hint", ""),
                answer_clips={int(k): v for k, v in o.get("answer_clips", {}).items()},
            )
        return cls(objects=objects,
                   agent_position=tuple(doc.get("agent", (0.0, 0.0))),
                   vocabularies=doc.get("vocabularies", {}))


def load_scene(path: str) -> Scene:
    with open(path) as fh:
        return Scene.from_json_dict(json.load(fh))


def preliminary_world() -> Scene:
    """The deterministic two-object starter world: a block and a ball."""
    vocabularies = {
        "kinds": {"color": 7, "size": 8},
        "values": {
            "color": {"green": 9, "red": 10},
            "size": {"big": 11, "small": 12},
        },
    }
    return Scene(
        objects={
            0: SceneObject(0, (3.0, 4.0), color="red", size="big", name_hint="block"),
            1: SceneObject(1, (-2.0, 1.0), color="green", size="small", name_hint="ball"),
        },
        agent_position=(0.0, 0.0),
        vocabularies=vocabularies,
    )


@dataclass(frozen=True)
class PlayerMessage:
    clip_id: str
    pointed_object: int | None = None


@dataclass(frozen=True)
class AgentAction:
    kind: str  # reply | point_at | navigate_to | reply_and_point | ask_clarification
    clip_id: str | None = None
    object_id: int | None = None
    path: tuple[tuple[float, float], ...] | None = None

    def to_json_dict(self) -> dict:
        doc: dict = {"kind": self.kind}
        if self.clip_id is not None:
            doc["clip_id"] = self.clip_id
        if self.object_id is not None:
            doc["object_id"] = self.object_id
        if self.path is not None:
            doc["path"] = [list(p) for p in self.path]
        return doc


@dataclass
class AgentTurn:
    turn_id: str
    message: PlayerMessage
    prediction: Prediction
    action: AgentAction
    resolved_tags: dict

    def to_json_dict(self) -> dict:
        return {
            "turn_id": self.turn_id,
            "clip_id": self.message.clip_id,
            "pointed_object": self.message.pointed_object,
            "action": self.action.to_json_dict(),
            "resolved_tags": self.resolved_tags,
            "prediction": self.prediction.to_json_dict(),
        }


@dataclass(frozen=True)
class Correction:
    turn_id: str
    corrected: TaggedUtterance


def navigate(scene: Scene, target: int) -> list[tuple[float, float]]:
    """Straight-line waypoints from the agent to an object, one unit per step.

    The final waypoint is exactly the object position; the agent marker is
    moved there.
    """
    obj = scene.object(target)
    ax, ay = scene.agent_position
    tx, ty = obj.position
    dist = float(np.hypot(tx - ax, ty - ay))
    if dist == 0.0:
        return [(ax, ay)]
    steps = max(1, int(np.ceil(dist)))
    path = [(ax + (tx - ax) * k / steps, ay + (ty - ay) * k / steps)
            for k in range(1, steps + 1)]
    path[-1] = (tx, ty)
    scene.agent_position = (tx, ty)
    return path


@dataclass
class ChainRegistry:
    """What the teaching chain established, rebuilt deterministically from tags.

    Registration is keyed by what the markers show: statements naming an
    object store its answer clip, property statements store per-kind answers,
    questions are classified as plain / property / polarity-check, commands
    record whether they carry an action word.
    """

    pattern_roles: dict[int, str] = field(default_factory=dict)
    name_answers: dict[int, str] = field(default_factory=dict)  # object -> clip
    name_answer_any: str | None = None
    property_answers: dict[tuple[int, str], str] = field(default_factory=dict)
    property_answer_any: dict[str, str] = field(default_factory=dict)
    question_kinds: dict[int, str] = field(default_factory=dict)  # pattern -> kind
    polarity_checks: dict[int, tuple[str, str]] = field(default_factory=dict)
    command_has_action: dict[int, bool] = field(default_factory=dict)
    yes_clip: str | None = None
    no_clip: str | None = None

    def register(self, scene: Scene, markers: TaggedUtterance) -> str:
        """Classify one taught phrase and update the lookup tables; returns the role."""
        functions = [w.function for w in markers.words]
        pattern = markers.phrase_pattern_id

        if markers.phrase_intonation == Intonation.QUESTION:
            role = "question"
            value_word = next((w for w in markers.words
                               if w.function == WordFunction.OBJECT_PROPERTY), None)
            kind_word = next((w for w in markers.words
                              if w.function == WordFunction.PROPERTY_NAME), None)
            if value_word is not None:
                hit = scene.value_of_vocab(value_word.vocab_id)
                if hit is not None:
                    self.polarity_checks[pattern] = hit
                    role = "polarity_check"
            elif kind_word is not None:
                kind = scene.kind_of_vocab(kind_word.vocab_id)
                if kind is not None:
                    self.question_kinds[pattern] = kind
                    role = "property_question"
        elif markers.phrase_intonation == Intonation.COMMAND:
            role = "command"
            self.command_has_action[pattern] = WordFunction.ACTION in functions
        else:
            role = "name_statement"
            if WordFunction.POSITIVE in functions:
                self.yes_clip = markers.clip_id
                role = "positive_statement"
            elif WordFunction.NEGATIVE in functions:
                self.no_clip = markers.clip_id
                role = "negative_statement"
            elif WordFunction.OBJECT_PROPERTY in functions:
                role = "property_statement"
                value_word = next(w for w in markers.words
                                  if w.function == WordFunction.OBJECT_PROPERTY)
                hit = scene.value_of_vocab(value_word.vocab_id)
                if hit is not None:
                    kind, _ = hit
                    self.property_answers[(markers.object_id, kind)] = markers.clip_id
                    self.property_answer_any[kind] = markers.clip_id
            else:
                self.name_answers[markers.object_id] = markers.clip_id
                self.name_answer_any = markers.clip_id
                obj = scene.objects.get(markers.object_id)
                if obj is not None:
                    obj.answer_clips[pattern] = markers.clip_id

        self.pattern_roles[pattern] = role
        return role

    def name_answer(self, object_id: int) -> str | None:
        return self.name_answers.get(object_id, self.name_answer_any)

    def property_answer(self, object_id: int, kind: str) -> str | None:
        return self.property_answers.get((object_id, kind),
                                         self.property_answer_any.get(kind))


class WorldSession:
    """Single-writer state machine: scene + registry + append-only turn log."""

    def __init__(self, scene: Scene, corpus: Corpus,
                 confidence_threshold: float = DEFAULT_CONFIDENCE_THRESHOLD):
        self.scene = scene
        self.corpus = corpus
        self.registry = ChainRegistry()
        self.turns: dict[str, AgentTurn] = {}
        self.corrections: dict[str, str] = {}  # turn_id -> active utterance_id
        self.confidence_threshold = confidence_threshold
        # replay existing corpus so the registry survives a reload
        for stored in corpus.active_utterances():
            if stored.markers.object_id in scene.objects or not scene.objects:
                self.registry.register(scene, stored.markers)

    # --- training mode ---------------------------------------------------

    def register_training_phrase(self, clip_id: str, markers: TaggedUtterance) -> str:
        """Store a taught phrase and its chain role; returns the utterance id."""
        if markers.object_id not in self.scene.objects:
            raise UnknownObject(f"object {markers.object_id} not in scene")
        utterance_id = self.corpus.add_utterance(clip_id, markers)
        self.registry.register(self.scene, markers)
        return utterance_id

    # --- talking mode ----------------------------------------------------

    def handle_turn(self, heads: dict[str, TrainedHead],
                    message: PlayerMessage) -> AgentTurn:
        if not heads:
            raise UntrainedHeads("no trained heads")
        if not self.scene.objects:
            raise EmptyScene("scene has no objects")
        if message.pointed_object is not None:
            self.scene.object(message.pointed_object)  # raises UnknownObject

        grid = self.corpus.clip_grid(message.clip_id)
        prediction = predict(heads, grid)
        action, tags = self._dispatch(prediction, message.pointed_object)

        turn_id = f"turn{len(self.turns):06d}"
        turn = AgentTurn(turn_id=turn_id, message=message, prediction=prediction,
                         action=action, resolved_tags=tags)
        self.turns[turn_id] = turn
        return turn

    def _dispatch(self, prediction: Prediction,
                  pointed: int | None) -> tuple[AgentAction, dict]:
        pattern = prediction.argmax("phrase_pattern")
        confidence = prediction.confidence("phrase_pattern")
        intonation = Intonation(prediction.argmax("phrase_intonation"))
        heard_object = prediction.argmax("object")
        tags = {
            "phrase_pattern": pattern,
            "pattern_confidence": confidence,
            "phrase_intonation": int(intonation),
            "object": heard_object,
            "pointed_object": pointed,
        }

        if confidence < self.confidence_threshold:
            return AgentAction("ask_clarification"), tags

        if intonation == Intonation.QUESTION:
            return self._dispatch_question(pattern, heard_object, pointed, tags)
        if intonation == Intonation.COMMAND:
            return self._dispatch_command(pattern, heard_object, tags)
        # statements and stories have no reply contract; ask rather than guess
        return AgentAction("ask_clarification"), tags

    def _dispatch_question(self, pattern, heard_object, pointed, tags):
        registry = self.registry
        # (e) polarity check: does the named property match the world?
        if pattern in registry.polarity_checks:
            kind, value = registry.polarity_checks[pattern]
            target = pointed if pointed is not None else heard_object
            tags["checked"] = {"object": target, "kind": kind, "value": value}
            obj = self.scene.objects.get(target)
            matches = obj is not None and obj.property_value(kind) == value
            clip = registry.yes_clip if matches else registry.no_clip
            if clip is None:
                return AgentAction("ask_clarification"), tags
            return AgentAction("reply", clip_id=clip), tags
        # (d) property question: answer from the scene's ground truth
        if pattern in registry.question_kinds:
            kind = registry.question_kinds[pattern]
            target = pointed if pointed is not None else heard_object
            if target not in self.scene.objects:
                return AgentAction("ask_clarification"), tags
            tags["property"] = {"kind": kind,
                                "value": self.scene.objects[target].property_value(kind)}
            clip = registry.property_answer(target, kind)
            if clip is None:
                return AgentAction("ask_clarification"), tags
            return AgentAction("reply_and_point", clip_id=clip, object_id=target), tags
        # (a) pointing wins for plain questions
        if pointed is not None:
            clip = registry.name_answer(pointed)
            if clip is None:
                return AgentAction("ask_clarification"), tags
            return AgentAction("reply", clip_id=clip), tags
        # (c) question-answer pair keyed by the recognized object
        clip = registry.name_answer(heard_object)
        if clip is None:
            return AgentAction("ask_clarification"), tags
        return AgentAction("reply", clip_id=clip), tags

    def _dispatch_command(self, pattern, heard_object, tags):
        # (b) commands act on the object the audio names
        if heard_object not in self.scene.objects:
            return AgentAction("ask_clarification"), tags
        has_action_word = self.registry.command_has_action.get(pattern, True)
        if has_action_word:
            path = navigate(self.scene, heard_object)
            return AgentAction("navigate_to", object_id=heard_object,
                               path=tuple(path)), tags
        clip = self.registry.name_answer(heard_object)
        if clip is None:
            return AgentAction("point_at", object_id=heard_object), tags
        return AgentAction("reply_and_point", clip_id=clip, object_id=heard_object), tags

    # --- corrections -------------------------------------------------------

    def apply_correction(self, correction: Correction) -> str:
        """File corrected tags for a past turn as new (pending) training data."""
        turn = self.turns.get(correction.turn_id)
        if turn is None:
            raise UnknownTurn(correction.turn_id)
        if correction.corrected.clip_id != turn.message.clip_id:
            raise InvalidMarkers("clip_id", "correction must keep the turn's clip")
        previous = self.corrections.get(correction.turn_id)
        if previous is not None:
            self.corpus.supersede_utterance(previous)
        utterance_id = self.corpus.add_utterance(turn.message.clip_id,
                                                 correction.corrected,
                                                 pending_correction=True)
        self.registry.register(self.scene, correction.corrected)
        self.corrections[correction.turn_id] = utterance_id
        return utterance_id
