import csv

import numpy as np
import pytest

from urbanfusion.config import load_config
from urbanfusion.pipeline import PRE_STAGES, run_pipeline
from urbanfusion.synth import generate_suite


def build_suite(root, n, **kw):
    cfg = load_config(generate_suite(root, n, seed=kw.pop("seed", 0), **kw))
    run_pipeline(cfg, PRE_STAGES)
    return cfg


def read_counts(path) -> dict:
    with open(path, newline="") as fh:
        return {int(r["window_index"]): int(r["nscr"]) for r in csv.DictReader(fh)}


@pytest.fixture(scope="session")
def noiseless_suite(tmp_path_factory):
    return build_suite(tmp_path_factory.mktemp("noiseless"), 10)


@pytest.fixture(scope="session")
def noisy_suite(tmp_path_factory):
    return build_suite(tmp_path_factory.mktemp("noisy"), 10, sensor_noise=1.0)


@pytest.fixture(scope="session")
def label_noise_suite(tmp_path_factory):
    return build_suite(tmp_path_factory.mktemp("labelnoise"), 10, sensor_noise=1.0, label_noise=0.1)


@pytest.fixture(scope="session")
def small_suite(tmp_path_factory):
    """Two short walks run through every stage."""
    root = tmp_path_factory.mktemp("small")
    cfg = load_config(generate_suite(root, 2, duration=300.0, sensor_noise=1.0),
                      ["featsel.kinds=[reptree]", "som.width=6", "som.height=6"])
    run_pipeline(cfg)
    return cfg


def planted_rule_data(n=600, seed=0, label_noise=0.0):
    """Feature-level rows: A iff x0 > 66 or x1 < 580, plus seven noise columns."""
    rng = np.random.default_rng(seed)
    X = np.column_stack([rng.uniform(50, 80, n), rng.uniform(100, 2000, n), rng.normal(size=(n, 7))])
    y = np.where((X[:, 0] > 66) | (X[:, 1] < 580), "A", "N").astype(object)
    flip = rng.random(n) < label_noise
    y[flip] = np.where(y[flip] == "A", "N", "A")
    return X, y
