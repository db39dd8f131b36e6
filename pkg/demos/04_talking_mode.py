"""A conversation with the trained agent, exercising every capability.

After teaching and training, the (synthetic) player speaks fresh, jittered
phrases the agent has never heard. Each exchange shows what the heads
recognized and what the agent did: replying with a taught clip, pointing,
navigating, or answering a yes/no property check from the world's ground
truth.

Run:  python3 demos/04_talking_mode.py   (about a minute of training first)
"""

from voxworld.corpus import Intonation
from voxworld.model import TrainConfig, train_all_heads
from voxworld.synth import (
    EXTENDED_PATTERNS,
    PATTERN_COLOR_QUESTION,
    PATTERN_FIND_COMMAND,
    PATTERN_GREEN_CHECK,
    PATTERN_SIZE_QUESTION,
    PATTERN_WHAT_QUESTION,
    PATTERN_WHERE_QUESTION,
    build_fixture_session,
    talk_clip,
)
from voxworld.world import PlayerMessage

session = build_fixture_session(EXTENDED_PATTERNS, repetitions=5, seed=0)
print("teaching done; training...")
heads = train_all_heads(session.corpus, TrainConfig(seed=7, epochs=150, batch_size=16))
print("training done\n")

script = [
    ("points at the ball and asks what it is",
     PATTERN_WHAT_QUESTION, 1, 1, 3001),
    ("asks the agent to find the block",
     PATTERN_FIND_COMMAND, 0, None, 3002),
    ("asks where the ball is (no pointing)",
     PATTERN_WHERE_QUESTION, 1, None, 3003),
    ("points at the block, asks its color",
     PATTERN_COLOR_QUESTION, 0, 0, 3004),
    ("points at the ball, asks its size",
     PATTERN_SIZE_QUESTION, 1, 1, 3005),
    ("commands the agent to find the ball",
     PATTERN_FIND_COMMAND, 1, None, 3006),
    ("points at the ball: is it green?",
     PATTERN_GREEN_CHECK, 1, 1, 3007),
    ("points at the block: is it green?",
     PATTERN_GREEN_CHECK, 0, 0, 3008),
]

for description, pattern, obj, point, seed in script:
    clip_id = talk_clip(session, pattern, obj, seed=seed)
    turn = session.handle_turn(heads, PlayerMessage(clip_id, point))
    p = turn.prediction
    heard = (f"pattern {p.argmax('phrase_pattern')} "
             f"({p.confidence('phrase_pattern'):.2f}), "
             f"object {p.argmax('object')}, "
             f"{Intonation(p.argmax('phrase_intonation')).name.lower()}")
    action = turn.action
    if action.kind == "reply":
        did = f"replies with taught clip {action.clip_id}"
    elif action.kind == "reply_and_point":
        did = f"replies with {action.clip_id} and points at object {action.object_id}"
    elif action.kind == "navigate_to":
        did = (f"navigates to object {action.object_id} "
               f"via {len(action.path)} waypoints, ends at {action.path[-1]}")
    elif action.kind == "point_at":
        did = f"points at object {action.object_id}"
    else:
        did = "asks for clarification"
    print(f"player {description}")
    print(f"   heard: {heard}")
    print(f"   agent: {did}")
    if "property" in turn.resolved_tags:
        prop = turn.resolved_tags["property"]
        print(f"   world says the {prop['kind']} is {prop['value']}")
    print()

print(f"agent finished at position {session.scene.agent_position}; "
      f"{len(session.turns)} turns in the log")
