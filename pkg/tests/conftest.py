import pytest

from blockmend import fixtures as fixture_lib
from blockmend.builder import (
    ProjectBuilder,
    change_var,
    change_x,
    clicked,
    flag,
    forever,
    hide,
    receive,
    set_var,
    show,
    wait,
)


@pytest.fixture
def empty_stage_project():
    return ProjectBuilder().build()


@pytest.fixture
def tiny_project():
    """One sprite, one clicked script that bumps a global counter."""
    pb = ProjectBuilder()
    pb.stage_var("count", 0)
    cat = pb.sprite("Cat", x=0, y=0, width=32, height=32)
    cat.script(clicked(), [change_var("count", 1)], hat_id="a_click")
    return pb.build()


@pytest.fixture
def flicker_pair():
    buggy, meta = fixture_lib.build_fixture("hide_show_race")
    fixed, _ = fixture_lib.build_fixture("hide_show_race", fixed=True)
    return buggy, fixed, fixture_lib.get_scenario("hide_show_race")


def build_named(name, fixed=False):
    project, _meta = fixture_lib.build_fixture(name, fixed=fixed)
    return project
