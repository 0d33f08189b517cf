import os
import sys

import numpy as np
import pytest

from reflalign.kg import build_union_index, save_kg_pair
from reflalign.synthetic import isomorphic_pair, tiny_pair


@pytest.fixture
def tiny():
    pair = tiny_pair()
    return pair, build_union_index(pair)


@pytest.fixture(scope="session")
def iso_small():
    pair = isomorphic_pair(n_entities=60, n_relations=6, mean_degree=4, seed=3)
    return pair, build_union_index(pair)


@pytest.fixture
def iso_dir(tmp_path):
    path = tmp_path / "data"
    save_kg_pair(isomorphic_pair(n_entities=60, n_relations=6, mean_degree=4, seed=3), path)
    return str(path)


def write_dir(path, files):
    os.makedirs(path, exist_ok=True)
    for name, lines in files.items():
        with open(os.path.join(path, name), "w", encoding="utf-8") as fh:
            fh.write("".join(line + "\n" for line in lines))
    return str(path)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in mod.RESULTS:
            terminalreporter.write_line(line)
