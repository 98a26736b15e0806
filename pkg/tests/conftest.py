import json
from importlib import resources

import pytest

from imobe.config import Config
from imobe.system import System
from imobe.util import ManualClock


def demo_fixture() -> dict:
    return json.loads(resources.files("imobe.fixtures").joinpath("demo.json").read_text())


def demo_scores_csv() -> str:
    return resources.files("imobe.fixtures").joinpath("demo_scores.csv").read_text()


@pytest.fixture
def clock():
    return ManualClock(1_000_000)


@pytest.fixture
def make_system(tmp_path, clock):
    counter = [0]

    def _make(deterministic=True, seed=True, scores=True, config=None, use_clock=True):
        counter[0] += 1
        cfg = config or Config(store_path=str(tmp_path / f"store{counter[0]}.ndjson"))
        system = System(cfg, clock=clock if use_clock else None,
                        deterministic=deterministic)
        if seed:
            system.seed(demo_fixture())
        if seed and scores:
            session = system.login("prof.amin", "amin-pw")
            system.import_scores_csv(session.credentials, demo_scores_csv())
            system.close_session(session)
        return system

    return _make


@pytest.fixture
def seeded_system(make_system):
    return make_system()
