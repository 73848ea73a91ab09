import numpy as np
import pytest
from hypothesis import strategies as st

from treelimit import BinaryTree, Word


def build_tree(choices) -> BinaryTree:
    """Grow a tree by repeatedly inserting the boundary node chosen (mod |boundary|)."""
    x = BinaryTree()
    for c in choices:
        boundary = x.external_boundary()
        x.insert(boundary[c % len(boundary)])
    return x


trees = st.lists(st.integers(0, 10**6), min_size=1, max_size=60).map(build_tree)
words = st.lists(st.integers(0, 1), max_size=12).map(Word.from_bits)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    import sys
    module = sys.modules.get("test_acceptance")
    if module is not None and module.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(module.RESULTS):
            terminalreporter.write_line(line)
