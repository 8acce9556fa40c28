"""
Nonlinear tree expansion of the series coefficients.

A tree of order k with root line (j, nu) is generated by the grammar

    endpoint        k = 1, factor f_{row,1,nu}          (not for (1, 0))
    branch1         mode m, one child (j', nu - m)       (not for (1, 0))
    mu-insertion    cases ii / iii, children: a (3, 0) mu-tree and (j, nu)
                    ((1, 0) when the exiting line is (3, 0))
    pair            case i, exits (1, 0) only; children (j1, nu') and the
                    conjugate of another (j1, nu') tree

where row = 1 for j = 3 and row = j otherwise. Summing tree values reproduces
the recursive series order by order.
"""

import logging
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from qpreduce.errors import EnumerationBudgetExceeded, SmallDivisorViolation, TreeLabelError
from qpreduce.model import (ComplexMatrixField, Momentum, add_momenta, l1_norm, momenta_in_ball,
                            negate, zero_momentum)
from qpreduce.series import DEFAULT_DIVISOR_FLOOR, FormalSeries

logger = logging.getLogger(__name__)

ENDPOINT_BLACK = 'endpoint_black'
ENDPOINT_WHITE = 'endpoint_white'
BRANCH1 = 'branch1'
BRANCH2 = 'branch2'

PAIR = 'i'
MU_CASES = ('ii', 'iii')

DEFAULT_MAX_TREES = 200000


def _is_zero(nu: Momentum) -> bool:
    return not any(nu)


def row_of(j: int) -> int:
    return 1 if j == 3 else j


@dataclass(frozen=True, eq=False)
class TreeNode:
    """A node together with the line it exits through"""
    kind: str
    mode: Momentum
    j: int
    nu: Momentum
    children: Tuple['TreeNode', ...] = ()
    case: str = ''
    conjugate: bool = False
    key: str = field(init=False, repr=False)
    order: int = field(init=False, repr=False)

    def __post_init__(self):
        children = tuple(sorted(self.children, key=lambda c: (c.kind, c.j, c.nu, c.key)))
        object.__setattr__(self, 'children', children)
        star = '*' if self.conjugate else ''
        key = (f"{self.kind}{self.case}{star}[{self.j}|{','.join(map(str, self.nu))}|"
               f"{','.join(map(str, self.mode))}](" + ';'.join(c.key for c in children) + ')')
        object.__setattr__(self, 'key', key)
        own = 0 if self.kind == BRANCH2 else 1
        object.__setattr__(self, 'order', own + sum(c.order for c in children))

    def __eq__(self, other) -> bool:
        return isinstance(other, TreeNode) and self.key == other.key

    def __hash__(self) -> int:
        return hash(self.key)

    @property
    def signed_nu(self) -> Momentum:
        """Momentum carried into the parent (negated for conjugated subtrees)"""
        return negate(self.nu) if self.conjugate else self.nu

    def is_mu_insertion(self) -> bool:
        return self.kind == BRANCH2 and self.case in MU_CASES

    def mu_child(self) -> 'TreeNode':
        return next(c for c in self.children if c.j == 3)

    def path_child(self) -> 'TreeNode':
        """The child of a mu-insertion that continues the exiting line"""
        return next(c for c in self.children if c.j != 3)


class TreeDiagram:
    """Flattened view of a tree: nodes and lines indexed in preorder"""

    def __init__(self, root: TreeNode):
        self.root = root
        self._flat: List[TreeNode] = []
        self._parent: List[Optional[int]] = []
        self._children: List[List[int]] = []
        self._flatten(root, None)

    def _flatten(self, node: TreeNode, parent: Optional[int]) -> int:
        index = len(self._flat)
        self._flat.append(node)
        self._parent.append(parent)
        self._children.append([])
        for child in node.children:
            self._children[index].append(self._flatten(child, index))
        return index

    def __len__(self) -> int:
        return len(self._flat)

    def __repr__(self) -> str:
        return f"TreeDiagram({self.root.key})"

    @property
    def key(self) -> str:
        return self.root.key

    @property
    def order(self) -> int:
        return self.root.order

    @property
    def root_line(self) -> int:
        return 0

    def node(self, index: int) -> TreeNode:
        return self._flat[index]

    def parent(self, index: int) -> Optional[int]:
        return self._parent[index]

    def children(self, index: int) -> List[int]:
        return self._children[index]

    def subtree(self, index: int) -> List[int]:
        out = [index]
        for child in self._children[index]:
            out.extend(self.subtree(child))
        return out

    @property
    def nodes(self) -> List[Dict]:
        return [{'id': i, 'kind': n.kind, 'case': n.case, 'mode': n.mode,
                 'order': 0 if n.kind == BRANCH2 else 1} for i, n in enumerate(self._flat)]

    @property
    def lines(self) -> List[Dict]:
        """Line i exits node i towards its parent (None for the root line)"""
        return [{'id': i, 'from': i, 'to': self._parent[i], 'j': n.j, 'nu': n.nu,
                 'conjugate': n.conjugate} for i, n in enumerate(self._flat)]

    def validate(self) -> 'TreeDiagram':
        """Check conservation and labeling rules; raise TreeLabelError"""
        for i, n in enumerate(self._flat):
            if n.j not in (1, 2, 3):
                raise TreeLabelError(f"node {i}: component {n.j} out of range")
            if n.j == 3 and not _is_zero(n.nu):
                raise TreeLabelError(f"node {i}: j=3 line with momentum {n.nu}")
            if n.j == 3 and i != 0:
                parent = self._flat[self._parent[i]]
                if not parent.is_mu_insertion():
                    raise TreeLabelError(f"node {i}: j=3 line does not enter a mu-insertion")
            total = n.mode
            for c in n.children:
                total = add_momenta(total, c.signed_nu)
            if total != n.nu:
                raise TreeLabelError(f"node {i}: conservation fails, {n.nu} != {total}")
            if n.kind == ENDPOINT_WHITE and not (n.j == 2 and _is_zero(n.nu)):
                raise TreeLabelError(f"node {i}: white endpoint must exit a (2, 0) line")
            if n.kind == BRANCH2:
                if any(n.mode):
                    raise TreeLabelError(f"node {i}: branch2 node with nonzero mode")
                if n.case == PAIR:
                    first, second = n.children
                    if first.j != second.j or first.nu != second.nu or first.conjugate == second.conjugate:
                        raise TreeLabelError(f"node {i}: pair node children do not match")
                elif n.case in MU_CASES:
                    if sum(1 for c in n.children if c.j == 3) != 1:
                        raise TreeLabelError(f"node {i}: mu-insertion needs one j=3 child")
                else:
                    raise TreeLabelError(f"node {i}: unknown branch2 case {n.case!r}")
            for c in n.children:
                if c.conjugate and not (n.kind == BRANCH2 and n.case == PAIR):
                    raise TreeLabelError(f"node {i}: conjugate child outside a pair node")
        branch2 = sum(1 for n in self._flat if n.kind == BRANCH2)
        if self.order != len(self._flat) - branch2:
            raise TreeLabelError("order does not equal |P| - |V2|")
        return self


def node_factor(node: TreeNode, g: ComplexMatrixField) -> complex:
    """F_v for endpoints, branch1 nodes and the three branch2 cases"""
    row = row_of(node.j)
    if node.kind in (ENDPOINT_BLACK, ENDPOINT_WHITE):
        return g.coefficient(row, 1, node.mode)
    if node.kind == BRANCH1:
        (child,) = node.children
        if child.j == 3:
            raise TreeLabelError("branch1 node cannot have a j=3 entering line")
        return g.coefficient(row, child.j, node.mode)
    if node.kind == BRANCH2:
        if node.case == PAIR:
            first, second = node.children
            if first.j != second.j or first.nu != second.nu:
                raise TreeLabelError("pair node children must carry equal labels")
            return 0.5 * (-1) ** first.j
        if node.case in MU_CASES:
            if sum(1 for c in node.children if c.j == 3) != 1:
                raise TreeLabelError("mu-insertion needs exactly one j=3 child")
            return 0.5 * (-1) ** (row + 1) * 1j
    raise TreeLabelError(f"unknown node kind {node.kind!r}/{node.case!r}")


def propagator(j: int, nu: Momentum, omega, lambda0: float,
               divisor_floor: float = DEFAULT_DIVISOR_FLOOR) -> complex:
    """Line factor for component j and momentum nu"""
    zero = _is_zero(nu)
    if j == 3:
        if not zero:
            raise TreeLabelError(f"j=3 line with nonzero momentum {nu}")
        return 1j
    if j == 1:
        if zero:
            return 1.0 + 0j
        divisor = float(np.dot(omega, nu))
    elif j == 2:
        divisor = float(np.dot(omega, nu)) + 2.0 * lambda0 if not zero else 2.0 * lambda0
    else:
        raise TreeLabelError(f"component {j} out of range")
    if abs(divisor) < divisor_floor:
        raise SmallDivisorViolation(nu, divisor, j)
    return -1j / divisor


def _node_value(node: TreeNode, g, omega, lambda0, divisor_floor) -> complex:
    value = node_factor(node, g)
    if value != 0:
        value *= propagator(node.j, node.nu, omega, lambda0, divisor_floor)
        for child in node.children:
            value *= _node_value(child, g, omega, lambda0, divisor_floor)
    return value.conjugate() if node.conjugate else value


def tree_value(tree, g: ComplexMatrixField, omega, lambda0: float,
               divisor_floor: float = DEFAULT_DIVISOR_FLOOR) -> complex:
    """Product of propagators and node factors, conjugating starred subtrees"""
    root = tree.root if isinstance(tree, TreeDiagram) else tree
    return complex(_node_value(root, g, np.asarray(omega, dtype=float), lambda0, divisor_floor))


class TreeEnumerator:
    """Memoized generator of the trees with given order and root labels"""

    def __init__(self, g: ComplexMatrixField, dimension: Optional[int] = None,
                 max_trees: int = DEFAULT_MAX_TREES):
        self.g = g
        self.dimension = g.dimension or dimension or 0
        self.zero = zero_momentum(self.dimension)
        self.modes = sorted(set(g.support()) | {self.zero})
        self.n_f = g.n_modes
        self.max_trees = max_trees
        self._memo: Dict[Tuple[int, int, Momentum], Tuple[TreeNode, ...]] = {}

    def trees(self, k: int, j: int, nu: Momentum) -> Tuple[TreeNode, ...]:
        nu = tuple(int(x) for x in nu)
        memo_key = (k, j, nu)
        if memo_key not in self._memo:
            self._memo[memo_key] = self._generate(k, j, nu)
        return self._memo[memo_key]

    def _generate(self, k: int, j: int, nu: Momentum) -> Tuple[TreeNode, ...]:
        if k < 1 or j not in (1, 2, 3) or (j == 3 and not _is_zero(nu)):
            return ()
        if l1_norm(nu) > k * self.n_f:
            return ()
        g = self.g
        zero = self.zero
        row = row_of(j)
        pair_line = j == 1 and _is_zero(nu)
        result: List[TreeNode] = []

        if k == 1 and not pair_line and g.coefficient(row, 1, nu) != 0:
            kind = ENDPOINT_WHITE if (j == 2 and _is_zero(nu)) else ENDPOINT_BLACK
            result.append(TreeNode(kind, mode=nu, j=j, nu=nu))

        if k >= 2 and not pair_line:
            for m in self.modes:
                for j2 in (1, 2):
                    if g.coefficient(row, j2, m) == 0:
                        continue
                    for child in self.trees(k - 1, j2, add_momenta(nu, negate(m))):
                        result.append(TreeNode(BRANCH1, mode=m, j=j, nu=nu, children=(child,)))
            second = (j, nu) if j in (1, 2) else (1, zero)
            for k1 in range(1, k):
                mus = self.trees(k1, 3, zero)
                if not mus:
                    continue
                rest = self.trees(k - k1, *second)
                for case in MU_CASES:
                    for mu_tree in mus:
                        for other in rest:
                            result.append(TreeNode(BRANCH2, mode=zero, j=j, nu=nu,
                                                   children=(mu_tree, other), case=case))

        if k >= 2 and pair_line:
            for k1 in range(1, k):
                k2 = k - k1
                radius = min(k1, k2) * self.n_f
                for j1 in (1, 2):
                    for inner in momenta_in_ball(radius, self.dimension):
                        left = self.trees(k1, j1, inner)
                        if not left:
                            continue
                        right = self.trees(k2, j1, inner)
                        for a in left:
                            for b in right:
                                result.append(TreeNode(BRANCH2, mode=zero, j=1, nu=zero,
                                                       children=(a, replace(b, conjugate=True)), case=PAIR))

        if len(result) > self.max_trees:
            raise EnumerationBudgetExceeded(len(result), self.max_trees)
        unique = {t.key: t for t in result}
        if len(unique) != len(result):
            logger.warning(f"{len(result) - len(unique)} duplicate trees dropped at (k={k}, j={j}, nu={nu})")
        return tuple(unique[key] for key in sorted(unique))


def enumerate_trees(k: int, j: int, nu: Momentum, g: ComplexMatrixField,
                    enumerator: Optional[TreeEnumerator] = None,
                    max_trees: int = DEFAULT_MAX_TREES) -> List[TreeDiagram]:
    """All inequivalent trees of order k with root line (j, nu)"""
    enumerator = enumerator or TreeEnumerator(g, dimension=len(nu), max_trees=max_trees)
    return [TreeDiagram(root) for root in enumerator.trees(k, j, nu)]


def tree_sum(k: int, j: int, nu: Momentum, g: ComplexMatrixField, omega, lambda0: float,
             enumerator: Optional[TreeEnumerator] = None,
             divisor_floor: float = DEFAULT_DIVISOR_FLOOR) -> complex:
    """Canonical-order sum of tree values"""
    enumerator = enumerator or TreeEnumerator(g, dimension=len(nu))
    total = 0j
    for root in enumerator.trees(k, j, nu):
        total += tree_value(root, g, omega, lambda0, divisor_floor)
    return total


def shape_bound_check(trees: List[TreeDiagram], k: int) -> Dict[Tuple, int]:
    """Mode multisets whose tree count exceeds 2^(4k); empty when the bound holds"""
    counts = Counter(tuple(sorted(tree.node(i).mode for i in range(len(tree)))) for tree in trees)
    return {modes: n for modes, n in counts.items() if n > 16 ** k}


def series_coefficient(series: FormalSeries, k: int, j: int, nu: Momentum) -> complex:
    if j == 3:
        return series.mu_coeff(k)
    return series.a_field(k)[nu] if j == 1 else series.c_field(k)[nu]


def oracle_table(series: FormalSeries, g: ComplexMatrixField, k_max: int,
                 enumerator: Optional[TreeEnumerator] = None,
                 divisor_floor: float = DEFAULT_DIVISOR_FLOOR) -> pd.DataFrame:
    """Tree sums against the recursive series for every active (k, j, nu)"""
    enumerator = enumerator or TreeEnumerator(g, dimension=series.dimension)
    zero = zero_momentum(series.dimension)
    rows = []
    for k in range(1, k_max + 1):
        for j in (1, 2, 3):
            candidates = [zero] if j == 3 else momenta_in_ball(k * max(series.n_f, 1), series.dimension)
            for nu in candidates:
                roots = enumerator.trees(k, j, nu)
                expected = series_coefficient(series, k, j, nu)
                if not roots and expected == 0:
                    continue
                total = 0j
                for root in roots:
                    total += tree_value(root, g, series.omega, series.lambda0, divisor_floor)
                rows.append({
                    'k': k, 'j': j, 'nu': str(nu), 'n_trees': len(roots),
                    'tree_sum_re': total.real, 'tree_sum_im': total.imag,
                    'series_re': expected.real, 'series_im': expected.imag,
                    'defect': abs(total - expected) / max(1.0, abs(expected)),
                })
        logger.info(f"Order {k}: compared {sum(1 for r in rows if r['k'] == k)} coefficients")
    return pd.DataFrame(rows, columns=['k', 'j', 'nu', 'n_trees', 'tree_sum_re', 'tree_sum_im',
                                       'series_re', 'series_im', 'defect'])


def mu_reality_defect(k: int, g: ComplexMatrixField, omega, lambda0: float,
                      enumerator: Optional[TreeEnumerator] = None) -> float:
    """|Im| of the order-k mu-tree sum relative to its size"""
    zero = zero_momentum(len(omega))
    value = tree_sum(k, 3, zero, g, omega, lambda0, enumerator)
    return abs(value.imag) / max(1.0, abs(value))


def to_dot(tree: TreeDiagram, labels: Optional[Dict[int, int]] = None) -> str:
    """Graphviz rendering; lines point from a node to its parent"""
    out = ['digraph tree {', '  rankdir=RL;', '  root [shape=point];']
    for i in range(len(tree)):
        n = tree.node(i)
        shape = 'circle' if n.kind == ENDPOINT_WHITE else ('box' if n.kind == BRANCH2 else 'ellipse')
        name = n.kind if not n.case else f"{n.kind}({n.case})"
        out.append(f'  n{i} [shape={shape}, label="{name}\\nmode={n.mode}"];')
    for i in range(len(tree)):
        n = tree.node(i)
        parent = tree.parent(i)
        target = 'root' if parent is None else f'n{parent}'
        text = f"j={n.j} nu={n.nu}{'*' if n.conjugate else ''}"
        if labels is not None and i in labels:
            text += f" n={labels[i]}"
        out.append(f'  n{i} -> {target} [label="{text}"];')
    out.append('}')
    return '\n'.join(out) + '\n'
