import numpy as np
import pytest

from treepot.boundary import exit_measure
from treepot.trees import FiniteTreeSpec, HomogeneousTreeSpec, build_tree
from treepot.weights import arithmetic, finite_weights


@pytest.fixture(scope="session")
def f1():
    """Worked 5-node fixture: root -> a,b ; a -> a1,a2 ; weights 1,2,4."""
    tree = build_tree(FiniteTreeSpec({(): 2, (0,): 2}))
    return tree, finite_weights([1.0, 2.0, 4.0])


@pytest.fixture(scope="session")
def homog2():
    return build_tree(HomogeneousTreeSpec(2), 4), arithmetic([1.0], 1.0)


@pytest.fixture(scope="session")
def homog2_measure(homog2):
    tree, w = homog2
    return exit_measure(tree, w, resolution=4)


@pytest.fixture(scope="session")
def homog2_measure_reflected(homog2):
    tree, w = homog2
    return exit_measure(tree, w, resolution=4, mode="reflected")
