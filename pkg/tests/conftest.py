import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from specleak.assets import INSTANCES, asset_path  # noqa: E402
from specleak.model import load_model, model_from_dict  # noqa: E402
from specleak.speclang import load_instance  # noqa: E402

GAMMA, BETA, EPSILON = 0.95, 0.8, 1e-4


def random_mdp(rng, n_states=3, n_actions=2, props=("p",), density=0.6):
    """Random MDP document with every action enabled everywhere."""
    names = [f"s{i}" for i in range(n_states)]
    acts = [f"a{j}" for j in range(n_actions)]
    transitions = []
    for s in names:
        for a in acts:
            mask = rng.random(n_states) < density
            if not mask.any():
                mask[rng.integers(n_states)] = True
            w = rng.random(n_states) * mask
            w = w / w.sum()
            for t, p in zip(names, w):
                if p > 0:
                    transitions.append({"from": s, "action": a, "to": t, "prob": float(p)})
    labels = {s: [p for p in props if rng.random() < 0.5] for s in names}
    return model_from_dict({"states": names, "initial": names[0], "actions": acts, "atomic_props": list(props),
                            "transitions": transitions, "labels": labels})


@pytest.fixture(scope="session")
def grid():
    return load_model(asset_path("resupply_grid.json"))


@pytest.fixture(scope="session")
def surveillance():
    return load_model(asset_path("surveillance.json"))


def instance(name, gamma=GAMMA, beta=BETA):
    model_file, spec_file = INSTANCES[name]
    return load_model(asset_path(model_file)), load_instance(asset_path(spec_file), gamma, beta)


_cache = {}


def synthesized(name, method):
    """Synthesis results shared across test modules within one session."""
    key = (name, method)
    if key not in _cache:
        from specleak.synth_approx import synthesize_approx
        from specleak.synth_exact import synthesize_exact
        mdp, inst = instance(name)
        fn = synthesize_exact if method == "exact" else synthesize_approx
        _cache[key] = (mdp, inst, fn(mdp, inst, EPSILON))
    return _cache[key]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
