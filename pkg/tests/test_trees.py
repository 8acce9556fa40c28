"""
Tests for the tree expansion and its agreement with the recursive series.
"""

import pytest
import numpy as np

# Add the parent directory to the path to import qpreduce modules
import sys
from pathlib import Path
sys.path.append(str(Path(__file__).parent.parent))

from qpreduce.config import GOLDEN_OMEGA
from qpreduce.errors import EnumerationBudgetExceeded, TreeLabelError
from qpreduce.model import ComplexMatrixField
from qpreduce.series import solve_series
from qpreduce.trees import (BRANCH1, BRANCH2, ENDPOINT_BLACK, ENDPOINT_WHITE, PAIR, TreeDiagram,
                            TreeEnumerator, TreeNode, enumerate_trees, mu_reality_defect, node_factor,
                            oracle_table, propagator, shape_bound_check, to_dot, tree_sum, tree_value)


def golden_sparse():
    """g12,(1,0) = 1 and g21,(-1,0) = 1"""
    return ComplexMatrixField({(1, 0): [[0, 1], [0, 0]], (-1, 0): [[0, 0], [1, 0]]})


def rich_field():
    """Diagonal, off-diagonal and mixed modes in both directions"""
    return ComplexMatrixField({
        (0, 0): [[0.3j, 0], [0, -0.3j]],
        (0, 1): [[0.2, 0.5], [0, -0.2]],
        (0, -1): [[-0.2, 0], [0.5, 0.2]],
        (1, 0): [[0, 1], [0, 0]],
        (-1, 0): [[0, 0], [1, 0]],
    })


class TestTreeCounts:
    """Test cases for the enumeration grammar on the two-mode field"""

    @pytest.fixture
    def enumerator(self):
        """Enumerator for the two-mode field"""
        return TreeEnumerator(golden_sparse())

    def test_first_order(self, enumerator):
        """Test that only the (2, (-1,0)) endpoint exists at order 1"""
        (tree,) = enumerator.trees(1, 2, (-1, 0))
        assert tree.kind == ENDPOINT_BLACK
        assert enumerator.trees(1, 3, (0, 0)) == ()
        assert enumerator.trees(1, 1, (1, 0)) == ()

    def test_second_order(self, enumerator):
        """Test one mu tree and one pair tree at order 2"""
        (mu_tree,) = enumerator.trees(2, 3, (0, 0))
        assert mu_tree.kind == BRANCH1
        (pair,) = enumerator.trees(2, 1, (0, 0))
        assert pair.kind == BRANCH2 and pair.case == PAIR
        assert enumerator.trees(2, 1, (2, 0)) == ()

    def test_third_order(self, enumerator):
        """Test one branch1 tree and two mu-insertions for c^(3)"""
        trees = enumerator.trees(3, 2, (-1, 0))
        assert len(trees) == 3
        kinds = sorted((t.kind, t.case) for t in trees)
        assert kinds == [(BRANCH1, ''), (BRANCH2, 'ii'), (BRANCH2, 'iii')]

    def test_orders(self, enumerator):
        """Test that every enumerated tree has the requested order"""
        for k in range(1, 4):
            for tree in enumerator.trees(k, 2, (-1, 0)):
                assert tree.order == k
                assert TreeDiagram(tree).order == k

    def test_trees_validate(self, enumerator):
        """Test that enumerated trees satisfy the labeling rules"""
        for k in range(1, 4):
            for j, nu in ((1, (0, 0)), (2, (-1, 0)), (3, (0, 0))):
                for tree in enumerate_trees(k, j, nu, golden_sparse(), enumerator):
                    assert tree.validate() is tree

    def test_budget(self):
        """Test that the enumeration budget is enforced"""
        enumerator = TreeEnumerator(golden_sparse(), max_trees=1)
        with pytest.raises(EnumerationBudgetExceeded) as info:
            enumerator.trees(3, 2, (-1, 0))
        assert info.value.count == 3

    def test_shape_bound(self, enumerator):
        """Test that tree counts per mode multiset stay below 2^(4k)"""
        trees = [TreeDiagram(t) for t in enumerator.trees(3, 2, (-1, 0))]
        assert shape_bound_check(trees, 3) == {}


class TestTreeValues:
    """Test cases for tree values and node factors"""

    def test_mu_tree_value(self):
        """Test that the order-2 mu tree equals 1/(2 lambda0 - 1)"""
        g = golden_sparse()
        assert tree_sum(2, 3, (0, 0), g, GOLDEN_OMEGA, 0.8) == pytest.approx(1.0 / 0.6)

    def test_pair_tree_value(self):
        """Test that the pair tree gives a^(2)_0 = |c^(1)|^2 / 2"""
        g = golden_sparse()
        assert tree_sum(2, 1, (0, 0), g, GOLDEN_OMEGA, 1.0) == pytest.approx(0.5)

    def test_third_order_value(self):
        """Test c^(3) = i/2 at lambda0 = 1"""
        g = golden_sparse()
        assert tree_sum(3, 2, (-1, 0), g, GOLDEN_OMEGA, 1.0) == pytest.approx(0.5j)

    def test_propagators(self):
        """Test the line factors for the three components"""
        omega = np.array([1.0, 0.5])
        assert propagator(3, (0, 0), omega, 0.8) == 1j
        assert propagator(1, (0, 0), omega, 0.8) == 1.0
        assert propagator(1, (1, 0), omega, 0.8) == pytest.approx(-1j)
        assert propagator(2, (0, 0), omega, 0.8) == pytest.approx(-1j / 1.6)

    def test_propagator_bad_labels(self):
        """Test that a j=3 line with momentum raises"""
        with pytest.raises(TreeLabelError):
            propagator(3, (1, 0), np.array([1.0, 0.5]), 0.8)

    def test_node_factors(self):
        """Test the branch2 factors"""
        g = golden_sparse()
        leaf = TreeNode(ENDPOINT_BLACK, mode=(-1, 0), j=2, nu=(-1, 0))
        pair = TreeNode(BRANCH2, mode=(0, 0), j=1, nu=(0, 0), case=PAIR,
                        children=(leaf, TreeNode(ENDPOINT_BLACK, mode=(-1, 0), j=2, nu=(-1, 0), conjugate=True)))
        assert node_factor(pair, g) == pytest.approx(0.5)
        assert node_factor(leaf, g) == 1

    def test_white_endpoint_rule(self):
        """Test that a white endpoint off the (2, 0) line is rejected"""
        bad = TreeNode(ENDPOINT_WHITE, mode=(1, 0), j=2, nu=(1, 0))
        with pytest.raises(TreeLabelError):
            TreeDiagram(bad).validate()

    def test_conservation_rule(self):
        """Test that a non-conserving node is rejected"""
        leaf = TreeNode(ENDPOINT_BLACK, mode=(-1, 0), j=2, nu=(-1, 0))
        good = TreeNode(BRANCH1, mode=(1, 0), j=3, nu=(0, 0), children=(leaf, ))
        assert len(TreeDiagram(good).validate()) == 2
        worse = TreeNode(BRANCH1, mode=(2, 0), j=3, nu=(0, 0), children=(leaf, ))
        with pytest.raises(TreeLabelError):
            TreeDiagram(worse).validate()

    def test_canonical_children(self):
        """Test that child order does not change the key"""
        a = TreeNode(ENDPOINT_BLACK, mode=(-1, 0), j=2, nu=(-1, 0))
        b = TreeNode(ENDPOINT_BLACK, mode=(1, 0), j=1, nu=(1, 0))
        first = TreeNode(BRANCH2, mode=(0, 0), j=2, nu=(0, 0), case='ii', children=(a, b))
        second = TreeNode(BRANCH2, mode=(0, 0), j=2, nu=(0, 0), case='ii', children=(b, a))
        assert first == second
        assert hash(first) == hash(second)

    def test_dot_rendering(self):
        """Test the Graphviz output"""
        (tree,) = TreeEnumerator(golden_sparse()).trees(2, 3, (0, 0))
        text = to_dot(TreeDiagram(tree), labels={1: 0})
        assert text.startswith('digraph tree {')
        assert 'n1 -> n0' in text
        assert 'n=0' in text


class TestOracle:
    """Test cases for the tree sums against the recursive series"""

    def test_sparse_field(self):
        """Test agreement to order 3 on the two-mode field"""
        g = golden_sparse()
        series = solve_series(g, GOLDEN_OMEGA, 0.8, 3)
        table = oracle_table(series, g, 3)
        assert len(table) > 0
        assert table['defect'].max() < 1e-10

    def test_sparse_field_at_unit_lambda0(self):
        """Test agreement to order 4 at lambda0 = 1"""
        g = golden_sparse()
        series = solve_series(g, GOLDEN_OMEGA, 1.0, 4)
        table = oracle_table(series, g, 4)
        assert table['defect'].max() < 1e-10
        assert set(table['k']) == {1, 2, 3, 4}

    def test_rich_field(self):
        """Test agreement to order 3 with diagonal and mixed modes"""
        g = rich_field()
        series = solve_series(g, GOLDEN_OMEGA, 0.25, 3)
        table = oracle_table(series, g, 3)
        assert table['defect'].max() < 1e-10
        assert set(table['k']) == {1, 2, 3}

    def test_mu_reality(self):
        """Test that mu-tree sums are real"""
        g = rich_field()
        enumerator = TreeEnumerator(g)
        for k in range(1, 4):
            assert mu_reality_defect(k, g, GOLDEN_OMEGA, 0.25, enumerator) < 1e-10

    def test_tree_value_of_diagram(self):
        """Test that a diagram and its root node have the same value"""
        g = golden_sparse()
        (tree,) = TreeEnumerator(g).trees(2, 3, (0, 0))
        assert tree_value(TreeDiagram(tree), g, GOLDEN_OMEGA, 0.8) == tree_value(tree, g, GOLDEN_OMEGA, 0.8)


if __name__ == "__main__":
    pytest.main([__file__])
