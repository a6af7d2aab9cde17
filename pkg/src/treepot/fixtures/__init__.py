"""Bundled fixtures: the worked finite tree, homogeneous trees, the
single-ray chains, the asymmetric two-subtree tree, the accessible-irregular
spine tree, the 3x3 ultrametric example, and the two word families.

TREEPOT_FIXTURES overrides the bundled directory; `treepot` CLI paths like
`fixture:f1` resolve through `load`.
"""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Dict, Tuple

import numpy as np

from ..errors import SchemaError
from ..trees import RootedTree, TreeSpec, build_tree, spec_from_json
from ..ultra import WordFamily
from ..weights import WeightSequence

_DIR = Path(__file__).parent


def fixtures_dir() -> Path:
    env = os.environ.get("TREEPOT_FIXTURES")
    return Path(env) if env else _DIR


def fixture_path(name: str) -> Path:
    for ext in (".json", ".csv"):
        p = fixtures_dir() / f"{name}{ext}"
        if p.exists():
            return p
    raise SchemaError("cli", f"unknown fixture {name!r}",
                      searched=str(fixtures_dir()))


def load_tree_spec(obj: dict) -> Tuple[TreeSpec, WeightSequence]:
    spec = spec_from_json(obj)
    if "weights" not in obj:
        raise SchemaError("tree_core", "tree spec json must embed 'weights'")
    return spec, WeightSequence.from_json(obj["weights"])


def load_tree_file(path: str) -> Tuple[RootedTree, WeightSequence]:
    if path.startswith("fixture:"):
        path = str(fixture_path(path.split(":", 1)[1]))
    with open(path) as fh:
        obj = json.load(fh)
    spec, w = load_tree_spec(obj)
    return build_tree(spec, depth_cap=4), w


def load_matrix_file(path: str) -> np.ndarray:
    if path.startswith("fixture:"):
        path = str(fixture_path(path.split(":", 1)[1]))
    text = Path(path).read_text()
    if path.endswith(".json"):
        return np.array(json.loads(text), dtype=float)
    rows = [r for r in text.strip().splitlines() if r.strip()]
    return np.array([[float(x) for x in r.split(",")] for r in rows])


def load_word_family(path: str) -> WordFamily:
    if path.startswith("fixture:"):
        path = str(fixture_path(path.split(":", 1)[1]))
    with open(path) as fh:
        return WordFamily.from_json(json.load(fh))


FIXTURES: Dict[str, dict] = {
    "f1": {
        "kind": "finite", "children": {"": 2, "0": 2},
        "weights": {"prefix": [1.0, 2.0, 4.0], "tail": None},
    },
    "homog2": {
        "kind": "homogeneous", "p": 2,
        "weights": {"prefix": [1.0], "tail": {"type": "arithmetic", "d": 1.0}},
    },
    "homog3": {
        "kind": "homogeneous", "p": 3,
        "weights": {"prefix": [1.0], "tail": {"type": "arithmetic", "d": 1.0}},
    },
    "single_ray": {
        "kind": "branching", "rule": {"type": "by_level", "counts": [1], "tail": 1},
        "weights": {"prefix": [1.0], "tail": {"type": "arithmetic", "d": 1.0}},
    },
    "single_ray_bounded": {
        "kind": "branching", "rule": {"type": "by_level", "counts": [1], "tail": 1},
        "weights": {"prefix": [1.0], "tail": {"type": "bounded", "w_inf": 2.0, "rho": 0.5}},
    },
    "asym23": {
        "kind": "branching",
        "rule": {"type": "states", "root": "r",
                 "states": {"r": [["b", 1], ["t", 1]], "b": [["b", 2]], "t": [["t", 3]]}},
        "weights": {"prefix": [1.0], "tail": {"type": "arithmetic", "d": 1.0}},
    },
    "spine": {
        "kind": "branching", "rule": {"type": "power_spine", "base": 2},
        "weights": {"prefix": [1.0, 2.0], "tail": {"type": "doubling_gap"}},
    },
    "ray_appendix": {
        # binary transient trunk with one recurrent single-ray subtree: the
        # ray cylinder is certified mass-zero (inaccessible component)
        "kind": "branching",
        "rule": {"type": "states", "root": "r",
                 "states": {"r": [["b", 1], ["s", 1]], "b": [["b", 2]], "s": [["s", 1]]}},
        "weights": {"prefix": [1.0], "tail": {"type": "arithmetic", "d": 1.0}},
    },
    "words_ex1": {
        "kind": "ends_with", "alphabet": ["0", "1", "2"], "end": "1",
        "weights": {"prefix": [1.0], "tail": {"type": "arithmetic", "d": 1.0}},
    },
    "words_ex2": {
        "kind": "body_then_end", "alphabet": ["0", "1", "2"], "end": "1",
        "weights": {"prefix": [1.0], "tail": {"type": "arithmetic", "d": 1.0}},
    },
}

F4_MATRIX = [[1.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 3.0]]


def write_bundled_files() -> None:
    """Materialize the registry as files next to this module (build helper)."""
    for name, obj in FIXTURES.items():
        (_DIR / f"{name}.json").write_text(json.dumps(obj, indent=1) + "\n")
    (_DIR / "f4.csv").write_text(
        "\n".join(",".join(f"{v:.17g}" for v in row) for row in F4_MATRIX) + "\n")


if not (_DIR / "f1.json").exists():  # pragma: no cover - build-time convenience
    try:
        write_bundled_files()
    except OSError:
        pass
