import json

import numpy as np
import pytest

from freecat.category import parse_spec
from freecat.transition import arrow_graph

# Three objects, three arrows, two parallel paths unit -> X2 -> X4.
DIAMOND = {
    "objects": [
        {"name": "X2", "kind": "space", "dim": 2},
        {"name": "X4", "kind": "space", "dim": 4},
    ],
    "generators": [
        {"name": "p", "dom": "unit", "cod": "X2",
         "primitive": {"kind": "gaussian-prior"}},
        {"name": "f", "dom": "X2", "cod": "X4",
         "primitive": {"kind": "affine-gaussian", "hidden": 3}},
        {"name": "g", "dom": "X2", "cod": "X4",
         "primitive": {"kind": "affine-gaussian", "hidden": 3}},
    ],
    "data_object": "X4",
}

# A unique-path chain unit -> X2 -> X4.
CHAIN = {
    "objects": [
        {"name": "X2", "kind": "space", "dim": 2},
        {"name": "X4", "kind": "space", "dim": 4},
    ],
    "generators": [
        {"name": "p", "dom": "unit", "cod": "X2",
         "primitive": {"kind": "gaussian-prior"}},
        {"name": "f", "dom": "X2", "cod": "X4",
         "primitive": {"kind": "affine-gaussian", "hidden": 3}},
    ],
    "data_object": "X4",
}


def spec_text(doc):
    return json.dumps(doc)


@pytest.fixture
def diamond_spec():
    return parse_spec(spec_text(DIAMOND))


@pytest.fixture
def diamond_graph(diamond_spec):
    return arrow_graph(diamond_spec)


@pytest.fixture
def chain_spec():
    return parse_spec(spec_text(CHAIN))


@pytest.fixture
def chain_graph(chain_spec):
    return arrow_graph(chain_spec)


def series_mat_exp(a, terms=30):
    """Truncated-series oracle for the matrix exponential."""
    a = np.asarray(a, dtype=np.float64)
    out = np.eye(a.shape[0])
    term = np.eye(a.shape[0])
    for k in range(1, terms + 1):
        term = term @ a / k
        out = out + term
    return out


def naive_softmax_rows(m, beta):
    """Reference softmax without stabilization tricks."""
    e = np.exp(np.asarray(m, dtype=np.float64) / beta)
    return e / e.sum(axis=1, keepdims=True)
