"""Shared builders for hand-crafted environments and tasks."""

import numpy as np
import pytest

from refgame.features import RawFeatures
from refgame.lexicon import default_lexicon, parse_description
from refgame.model import Environment, EnvObject
from refgame.training import IdentificationTask, target_distribution


def raw(
    x_pos=0.5,
    y_pos=0.5,
    width=0.2,
    height=0.2,
    size=0.04,
    hue=0.0,
    light=0.5,
    achromatic=False,
):
    return RawFeatures(x_pos, y_pos, width, height, size, hue, light, achromatic)


def make_env(rows, env_id="e1", category="cat"):
    """Environment from a list of RawFeatures (ids o1, o2, ...)."""
    objects = tuple(EnvObject(f"o{i + 1}", r) for i, r in enumerate(rows))
    return Environment(env_id, category, objects)


def random_raw(rng: np.random.Generator) -> RawFeatures:
    return RawFeatures(
        x_pos=float(rng.uniform(0, 1)),
        y_pos=float(rng.uniform(0, 1)),
        width=float(rng.uniform(0.05, 0.9)),
        height=float(rng.uniform(0.05, 0.9)),
        size=float(rng.uniform(0.01, 0.8)),
        hue=float(rng.uniform(0, 1)),
        light=float(rng.uniform(0, 1)),
    )


def random_env(rng: np.random.Generator, n_objects: int, env_id="e1", category="cat"):
    return make_env([random_raw(rng) for _ in range(n_objects)], env_id, category)


def make_task(env, tokens, selected, lex):
    desc = parse_description(tokens, lex)
    sel = frozenset(selected)
    return IdentificationTask(env.id, desc, sel, target_distribution(sel, env))


def random_instance(rng, lex, n_envs=3, n_objects=5, tasks_per_env=2):
    """Random environments plus tasks with random descriptions and selections."""
    envs = {}
    tasks = []
    names = [s.name for s in lex]
    for e in range(n_envs):
        env = random_env(rng, n_objects, env_id=f"e{e}")
        envs[env.id] = env
        for _ in range(tasks_per_env):
            tokens = list(rng.choice(names, size=int(rng.integers(1, 4)), replace=False))
            k = int(rng.integers(1, n_objects + 1))
            chosen = rng.choice(env.object_ids(), size=k, replace=False)
            tasks.append(make_task(env, tokens, chosen, lex))
    return envs, tasks


@pytest.fixture(scope="session")
def lex():
    return default_lexicon()


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Echo the acceptance criterion verdicts after the run."""
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
