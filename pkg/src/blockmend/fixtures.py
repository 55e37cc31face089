"""Bundled buggy/fixed project pairs with their scenarios.

Ten small games, each seeded with exactly one bug: jerky movement, a
hide/show race, a variable-name mismatch, broadcast fan-out, a missing reset
script, a missing termination bound, a two-script race, a broadcast-name
mismatch, continuous score accrual under stuck contact, and a wrong
touch-color pick.  Every fixture ships a hand-fixed counterpart and a
scenario whose assertions the buggy build fails and the fixed build passes.

`python -m blockmend.fixtures <dir>` writes the suite to disk.
"""

from dataclasses import dataclass
import json
import os

from .builder import (
    ProjectBuilder,
    broadcast,
    change_var,
    change_x,
    change_y,
    clicked,
    eq,
    flag,
    forever,
    hide,
    if_,
    key_hat,
    not_,
    receive,
    set_var,
    show,
    stop,
    touching,
    touching_color,
    varr,
    wait,
)
from .scenario import Assertion, Scenario
from .sb3 import serialize_sb3

ORANGE = (230, 140, 40)
SLATE = (60, 60, 90)
RED = (200, 60, 50)
GREEN_SPRITE = (80, 180, 80)
BROWN = (139, 69, 19)
GRAY = (90, 90, 110)


@dataclass(frozen=True)
class Fixture:
    name: str
    title: str
    bug: str
    difficulty: str


def _cat_movement(fixed):
    pb = ProjectBuilder()
    cat = pb.sprite("Cat", x=-100, y=0, width=32, height=32, color=ORANGE)
    step = 10 if fixed else 50
    cat.script(key_hat("right arrow"), [change_x(step)], hat_id="a_step")
    return pb


def _cat_movement_scenario():
    events = []
    for i, tick in enumerate((2, 6, 10)):
        events.append({"tick": tick, "kind": "key_down", "key": "right arrow"})
        events.append({"tick": tick + 1, "kind": "key_up", "key": "right arrow"})
    return Scenario(
        name="three_steps_right",
        events=events,
        assertions=[
            Assertion("PositionWithin", "Cat", {"x": [-75, -65]}, at_tick=20),
        ],
        config={"max_ticks": 30},
    )


def _hide_show_race(fixed):
    pb = ProjectBuilder()
    ghost = pb.sprite("Ghost", x=0, y=0, visible=False, width=48, height=48, color=SLATE)
    ghost.script(key_hat("s"), [broadcast("show_force")], hat_id="k_show")
    ghost.script(key_hat("h"), [broadcast("hide_force")], hat_id="k_hide")
    if fixed:
        ghost.script(receive("show_force"), [wait(0.01), show()], hat_id="a_show")
        ghost.script(receive("hide_force"), [wait(0.01), hide()], hat_id="b_hide")
    else:
        ghost.script(receive("show_force"), [forever([wait(0.01), show()])], hat_id="a_show")
        ghost.script(receive("hide_force"), [forever([wait(0.01), hide()])], hat_id="b_hide")
    return pb


def _hide_show_race_scenario():
    return Scenario(
        name="show_hide_show",
        events=[
            {"tick": 0, "kind": "key_down", "key": "s"},
            {"tick": 1, "kind": "key_up", "key": "s"},
            {"tick": 1, "kind": "key_down", "key": "h"},
            {"tick": 2, "kind": "key_up", "key": "h"},
            {"tick": 30, "kind": "key_down", "key": "s"},
            {"tick": 31, "kind": "key_up", "key": "s"},
        ],
        assertions=[
            Assertion("VisibleAt", "Ghost", at_tick=2),
            Assertion("NotVisibleAt", "Ghost", at_tick=8),
            Assertion("VisibleAt", "Ghost", at_tick=40),
            Assertion("SymptomAbsent", "Flicker"),
        ],
        config={"max_ticks": 90},
    )


def _name_mismatch(fixed):
    pb = ProjectBuilder()
    pb.stage_var("count", 0)
    pb.stage_var("Count", 0)
    pb.monitor("count")
    pb.stage_builder().script(flag(), [set_var("count", 0)], hat_id="a_reset")
    cat = pb.sprite("Cat", x=0, y=0, width=32, height=32, color=ORANGE)
    cat.script(clicked(), [change_var("count" if fixed else "Count", 1)], hat_id="a_click")
    return pb


def _name_mismatch_scenario():
    return Scenario(
        name="click_counts_once",
        events=[
            {"tick": 0, "kind": "flag"},
            {"tick": 10, "kind": "click", "sprite": "Cat"},
        ],
        assertions=[
            Assertion("VarChangedBy", "count", 1, window=(10, 30)),
        ],
        config={"max_ticks": 40},
    )


def _broadcast_fanout(fixed):
    pb = ProjectBuilder()
    pb.stage_var("count", 0)
    pb.monitor("count")
    pb.stage_builder().script(flag(), [set_var("count", 0)], hat_id="a_reset")
    for i, x in ((1, -120), (2, 0), (3, 120)):
        cat = pb.sprite("Cat%d" % i, x=x, y=0, width=32, height=32, color=ORANGE)
        if fixed:
            cat.script(clicked(), [change_var("count", 1), hide()], hat_id="a_click%d" % i)
        else:
            cat.script(clicked(), [broadcast("cat caught"), hide()], hat_id="a_click%d" % i)
            cat.script(receive("cat caught"), [change_var("count", 1)], hat_id="b_recv%d" % i)
    return pb


def _broadcast_fanout_scenario():
    return Scenario(
        name="one_click_one_point",
        events=[
            {"tick": 0, "kind": "flag"},
            {"tick": 10, "kind": "click", "sprite": "Cat1"},
        ],
        assertions=[
            Assertion("VarChangedBy", "count", 1, window=(10, 40)),
            Assertion("SymptomAbsent", "JumpVariable"),
        ],
        config={"max_ticks": 60},
    )


def _missing_reset(fixed):
    pb = ProjectBuilder()
    pb.stage_var("count", 7)
    pb.monitor("count")
    if fixed:
        pb.stage_builder().script(flag(), [set_var("count", 0)], hat_id="a_reset")
    cat = pb.sprite("Cat", x=0, y=0, width=32, height=32, color=ORANGE)
    cat.script(clicked(), [change_var("count", 1)], hat_id="a_click")
    return pb


def _missing_reset_scenario():
    return Scenario(
        name="replay_starts_from_zero",
        events=[
            {"tick": 0, "kind": "flag"},
            {"tick": 5, "kind": "click", "sprite": "Cat"},
            {"tick": 20, "kind": "flag"},
            {"tick": 25, "kind": "click", "sprite": "Cat"},
        ],
        assertions=[
            Assertion("VarEquals", "count", 1, at_tick=40),
        ],
        config={"max_ticks": 50},
    )


def _no_termination(fixed):
    pb = ProjectBuilder()
    pb.stage_var("score", 0)
    pb.monitor("score")
    pb.stage_builder().script(flag(), [set_var("score", 5)], hat_id="a_init")
    cat = pb.sprite("Cat", x=0, y=0, width=16, height=16, color=ORANGE)
    pb.sprite("Bat", x=8, y=0, width=16, height=16, color=SLATE)
    if fixed:
        body = [change_var("score", -1), if_(eq(varr("score"), 0), [stop("all")])]
    else:
        body = [change_var("score", -1)]
    cat.script(flag(), [forever([if_(touching("Bat"), body)])], hat_id="b_drain")
    return pb


def _no_termination_scenario():
    return Scenario(
        name="score_stops_at_zero",
        events=[{"tick": 0, "kind": "flag"}],
        assertions=[
            Assertion("EventuallyVarEquals", "score", 0, window=(0, 30)),
            Assertion("VarEquals", "score", 0, at_tick=60),
        ],
        config={"max_ticks": 80},
    )


def _script_race(fixed):
    pb = ProjectBuilder()
    pb.stage_var("score", 0)
    pb.monitor("score")
    pb.stage_builder().script(
        flag(), [set_var("score", 0), broadcast("start")], hat_id="a_init")
    cat = pb.sprite("Cat", x=0, y=0, width=16, height=16, color=ORANGE)
    pb.sprite("Bat", x=8, y=0, width=16, height=16, color=SLATE)
    if fixed:
        cat.script(
            receive("start"),
            [forever([if_(touching("Bat"), [change_x(-10), change_var("score", -1)])])],
            hat_id="p_bounce")
    else:
        cat.script(
            receive("start"),
            [forever([if_(touching("Bat"), [change_x(-10)])])],
            hat_id="p_bounce")
        cat.script(
            receive("start"),
            [forever([if_(touching("Bat"), [change_var("score", -1)])])],
            hat_id="q_score")
    return pb


def _script_race_scenario():
    return Scenario(
        name="bounce_and_score",
        events=[{"tick": 0, "kind": "flag"}],
        assertions=[
            Assertion("VarChangedBy", "score", -1, window=(0, 30)),
            Assertion("SymptomAbsent", "StuckVariable"),
        ],
        race_flagged=True,
        config={"max_ticks": 60},
    )


def _broadcast_name_mismatch(fixed):
    pb = ProjectBuilder()
    pb.stage_var("count", 0)
    pb.monitor("count")
    pb.stage_builder().script(flag(), [set_var("count", 0)], hat_id="a_reset")
    cat = pb.sprite("Cat", x=0, y=0, width=32, height=32, color=ORANGE)
    sent = "cat caught" if fixed else "cat cauht"
    cat.script(clicked(), [broadcast(sent), hide()], hat_id="a_click")
    cat.script(receive("cat caught"), [change_var("count", 1)], hat_id="b_recv")
    return pb


def _broadcast_name_mismatch_scenario():
    return Scenario(
        name="click_scores_via_message",
        events=[
            {"tick": 0, "kind": "flag"},
            {"tick": 10, "kind": "click", "sprite": "Cat"},
        ],
        assertions=[
            Assertion("VarChangedBy", "count", 1, window=(10, 40)),
        ],
        config={"max_ticks": 50},
    )


def _continuous_accrual(fixed):
    pb = ProjectBuilder()
    pb.stage_var("score", 0)
    pb.monitor("score")
    pb.stage_builder().script(flag(), [set_var("score", 0)], hat_id="a_init")
    pb.sprite("Player", x=0, y=0, width=24, height=24, color=GREEN_SPRITE)
    apple = pb.sprite("Apple", x=5, y=0, width=24, height=24, color=RED)
    if fixed:
        body = [change_var("score", 1), hide()]
    else:
        body = [change_var("score", 1)]
    apple.script(flag(), [forever([if_(touching("Player"), body)])], hat_id="b_collect")
    return pb


def _continuous_accrual_scenario():
    return Scenario(
        name="apple_collects_once",
        events=[{"tick": 0, "kind": "flag"}],
        assertions=[
            Assertion("VarChangedBy", "score", 1, window=(0, 90)),
            Assertion("SymptomAbsent", "ContinuousAccrual"),
        ],
        config={"max_ticks": 100},
    )


def _wrong_edge_color(fixed):
    pb = ProjectBuilder()
    pb.sprite("Ground", x=0, y=-150, width=480, height=60, color=BROWN)
    bat = pb.sprite("Bat", x=0, y=60, width=16, height=16, color=GRAY)
    color = "#8b4513" if fixed else "#00ff00"
    bat.script(
        flag(),
        [forever([if_(not_(touching_color(color)), [change_y(-5)])])],
        hat_id="a_fall")
    return pb


def _wrong_edge_color_scenario():
    return Scenario(
        name="bat_lands_on_ground",
        events=[{"tick": 0, "kind": "flag"}],
        assertions=[
            Assertion("PositionWithin", "Bat", {"y": [-130, -100]}, at_tick=60),
            Assertion("SymptomAbsent", "OffStageLoss"),
        ],
        config={"max_ticks": 100},
    )


_BUILDERS = {
    "cat_movement": (_cat_movement, _cat_movement_scenario),
    "hide_show_race": (_hide_show_race, _hide_show_race_scenario),
    "name_mismatch": (_name_mismatch, _name_mismatch_scenario),
    "broadcast_fanout": (_broadcast_fanout, _broadcast_fanout_scenario),
    "missing_reset": (_missing_reset, _missing_reset_scenario),
    "no_termination": (_no_termination, _no_termination_scenario),
    "script_race": (_script_race, _script_race_scenario),
    "broadcast_name_mismatch": (_broadcast_name_mismatch, _broadcast_name_mismatch_scenario),
    "continuous_accrual": (_continuous_accrual, _continuous_accrual_scenario),
    "wrong_edge_color": (_wrong_edge_color, _wrong_edge_color_scenario),
}

FIXTURES = {
    "cat_movement": Fixture("cat_movement", "Cat Movement",
                            "movement is jerky: each step is too large", "easy"),
    "hide_show_race": Fixture("hide_show_race", "Cat Hide/Show Toggle",
                              "sprite keeps flashing: hide/show scripts race", "easy"),
    "name_mismatch": Fixture("name_mismatch", "Cat Catcher I",
                             "count never updates: variable name mismatch", "easy"),
    "broadcast_fanout": Fixture("broadcast_fanout", "Cat Catcher II",
                                "count increases N per click: global broadcast fans out", "easy"),
    "missing_reset": Fixture("missing_reset", "Cat Catcher III",
                             "count carries over between plays: no reset script", "easy"),
    "no_termination": Fixture("no_termination", "Cat/Bat Collision I",
                              "score goes below zero: no terminating condition", "easy"),
    "script_race": Fixture("script_race", "Cat/Bat Collision II",
                           "score never updates: bounce and score scripts race", "medium"),
    "broadcast_name_mismatch": Fixture("broadcast_name_mismatch", "Cat Catcher IV",
                                       "count never updates: broadcast name mismatch", "medium"),
    "continuous_accrual": Fixture("continuous_accrual", "Apple Collector",
                                  "score accrues continuously: no collect script", "hard"),
    "wrong_edge_color": Fixture("wrong_edge_color", "Bugs Eater",
                                "bat falls through the ground: wrong color picked", "hard"),
}

# The three motivating examples by their informal names.
MOTIVATING = {
    "flicker": "hide_show_race",
    "race": "script_race",
    "fanout": "broadcast_fanout",
}


def build_fixture(name, fixed=False):
    """Returns (Project, sidecar meta dict)."""
    builder_fn, _scenario_fn = _BUILDERS[name]
    pb = builder_fn(fixed)
    return pb.build(), pb.meta


def get_scenario(name):
    _builder_fn, scenario_fn = _BUILDERS[name]
    return scenario_fn()


def write_all(root):
    """Write every fixture pair plus scenario and sidecar meta under `root`."""
    written = []
    for name in FIXTURES:
        d = os.path.join(root, name)
        os.makedirs(d, exist_ok=True)
        for variant, fixed in (("buggy", False), ("fixed", True)):
            project, meta = build_fixture(name, fixed=fixed)
            with open(os.path.join(d, "%s.sb3" % variant), "wb") as fh:
                fh.write(serialize_sb3(project))
        with open(os.path.join(d, "fixture.meta.json"), "w", encoding="utf-8") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)
            fh.write("\n")
        with open(os.path.join(d, "scenario.json"), "w", encoding="utf-8") as fh:
            fh.write(get_scenario(name).to_json())
        written.append(d)
    return written


def main(argv=None):
    import argparse

    parser = argparse.ArgumentParser(description="write the bundled fixture suite")
    parser.add_argument("dest", help="output directory")
    args = parser.parse_args(argv)
    for d in write_all(args.dest):
        print(d)


if __name__ == "__main__":
    main()
