import json
from pathlib import Path

import pytest

from craftbench.world import ablation_env, default_env, load_tasks

DATA_DIR = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def env():
    return default_env()


@pytest.fixture(scope="session")
def abl_env():
    return ablation_env()


@pytest.fixture(scope="session")
def tasks():
    return {t.id: t for t in load_tasks()}


@pytest.fixture(scope="session")
def ablation_tasks():
    return {t.id: t for t in load_tasks("ablation_tasks.json")}


@pytest.fixture(scope="session")
def golden():
    return json.loads((DATA_DIR / "golden_episodes.json").read_text())


def empty_state(env, biome="plains"):
    state = env.reset(0, biome=biome)
    state.inventory = {}
    state.acquisition_order = []
    state.high_water = {}
    return state


@pytest.fixture()
def fresh_state(env):
    return empty_state(env)
