"""
Multiscale renormalization of the tree expansion.

Lines with nonzero momentum carry a scale label n >= 0 taken from the cutoff
windows around Delta0(omega.nu); zero-momentum lines get -1. A self-energy
cluster is the part of a tree between two lines with equal (j, nu) whose
internal labels all sit below the external ones. Clusters on scale n - 1 are
resummed into M^[n]_j, which shifts the denominator of the scale-n propagator

    g^[n]_j(x) = -i W_n(x) / (x + 2 M^[<=n]_j(x)),   M^[<=0]_1 = 0, M^[<=0]_2 = lambda0.

Renormalized trees are the trees free of clusters on scales >= 0 and of the
two single-vertex scale -1 configurations, which cancel pairwise.
"""

import itertools
import logging
from dataclasses import dataclass
from typing import Dict, FrozenSet, Iterator, List, Optional, Tuple

import numpy as np
import pandas as pd

from qpreduce.errors import ShiftDomainError, SmallDivisorViolation, TreeLabelError
from qpreduce.model import (ComplexMatrixField, Momentum, add_momenta, l1_norm, momenta_in_ball, negate,
                            zero_momentum)
from qpreduce.series import DEFAULT_DIVISOR_FLOOR
from qpreduce.smalldiv import ScaleSystem, delta0, scale_weight
from qpreduce.trees import (BRANCH1, BRANCH2, ENDPOINT_BLACK, ENDPOINT_WHITE, MU_CASES, TreeDiagram,
                            TreeEnumerator, TreeNode, node_factor, propagator, row_of, tree_value)

logger = logging.getLogger(__name__)

REALITY_TOLERANCE = 1e-9
SYMMETRY_TOLERANCE = 1e-8
POINT_DIGITS = 12
COUNTING_ORDER = 5


def _is_zero(nu: Momentum) -> bool:
    return not any(nu)


@dataclass
class ScaledTree:
    """A tree with one scale label per line and the product of cutoff weights"""
    tree: TreeDiagram
    labels: Dict[int, int]
    weight: float = 1.0

    def label(self, line: int) -> int:
        return self.labels[line]

    def lines_on_or_above(self, n: int) -> int:
        return sum(1 for value in self.labels.values() if value >= n)

    def mode_mass(self, nodes=None) -> int:
        """M = sum of |nu_v| over the given nodes (all nodes by default)"""
        indices = range(len(self.tree)) if nodes is None else nodes
        return sum(l1_norm(self.tree.node(i).mode) for i in indices)


@dataclass(frozen=True)
class PathVertex:
    """A node on the path between the external lines of a self-energy cluster"""
    kind: str
    case: str
    mode: Momentum
    j_out: int
    j_in: int
    side: Optional[TreeNode] = None


@dataclass
class SelfEnergyCluster:
    j: int
    vertices: Tuple[PathVertex, ...]
    nu: Optional[Momentum] = None
    scale: int = -1
    exiting_line: Optional[int] = None
    entering_line: Optional[int] = None
    member_nodes: FrozenSet[int] = frozenset()
    member_lines: FrozenSet[int] = frozenset()
    renormalized: bool = True
    minus_one_vertex: bool = False

    @property
    def kind(self) -> str:
        return 'first' if len(self.vertices) == 1 else 'second'

    @property
    def order(self) -> int:
        own = sum(1 for v in self.vertices if v.kind == BRANCH1)
        return own + sum(v.side.order for v in self.vertices if v.side is not None)

    def path_lines(self) -> List[Tuple[int, Momentum]]:
        """(j, offset) of the internal path lines, top-down"""
        out = []
        offset = None
        for vertex in self.vertices[:-1]:
            offset = negate(vertex.mode) if offset is None else add_momenta(offset, negate(vertex.mode))
            out.append((vertex.j_in, offset))
        return out


def assign_scales(tree: TreeDiagram, scales: ScaleSystem, lambda0: float) -> List[ScaledTree]:
    """Every labeling with nonzero cutoff weight; overlapping windows give weighted copies"""
    options: List[List[Tuple[int, float]]] = []
    for i in range(len(tree)):
        node = tree.node(i)
        if _is_zero(node.nu):
            options.append([(-1, 1.0)])
            continue
        x = float(np.dot(scales.omega, node.nu))
        choices = []
        for n in range(scales.n_max + 1):
            w = float(scale_weight(x, n, scales, lambda0))
            if w > 0:
                choices.append((n, w))
        if not choices:
            return []
        options.append(choices)
    copies = []
    for combo in itertools.product(*options):
        weight = float(np.prod([w for _, w in combo]))
        copies.append(ScaledTree(tree, {i: n for i, (n, _) in enumerate(combo)}, weight))
    return copies


def _path_between(tree: TreeDiagram, upper: int, lower: int) -> List[int]:
    """Nodes from upper down to the parent of lower"""
    path = []
    current = tree.parent(lower)
    while current is not None and current != upper:
        path.append(current)
        current = tree.parent(current)
    if current is None:
        return []
    path.append(upper)
    return path[::-1]


def _path_vertices(tree: TreeDiagram, path: List[int], lower: int) -> Tuple[PathVertex, ...]:
    vertices = []
    for position, index in enumerate(path):
        node = tree.node(index)
        below = path[position + 1] if position + 1 < len(path) else lower
        below_node = tree.node(below)
        side = None
        if node.kind == BRANCH2 and node.case in MU_CASES:
            side = node.mu_child()
        vertices.append(PathVertex(node.kind, node.case, node.mode, node.j, below_node.j, side))
    return tuple(vertices)


def _is_minus_one_vertex(vertices: Tuple[PathVertex, ...]) -> bool:
    if len(vertices) != 1:
        return False
    (v,) = vertices
    if v.kind == BRANCH1:
        return _is_zero(v.mode)
    return v.side is not None and v.side.order == 1 and v.side.kind in (ENDPOINT_BLACK, ENDPOINT_WHITE)


def detect_self_energy(scaled: ScaledTree) -> List[SelfEnergyCluster]:
    """All self-energy clusters of a labeled tree, each flagged renormalized or not"""
    tree = scaled.tree
    labels = scaled.labels
    found: List[SelfEnergyCluster] = []
    for upper in range(len(tree)):
        top = tree.node(upper)
        if top.j == 3 or _is_zero(top.nu):
            continue
        for lower in tree.subtree(upper)[1:]:
            bottom = tree.node(lower)
            if bottom.j != top.j or bottom.nu != top.nu or bottom.conjugate:
                continue
            path = _path_between(tree, upper, lower)
            if any(_is_zero(tree.node(i).nu) for i in path[1:]):
                continue
            members = frozenset(tree.subtree(upper)) - frozenset(tree.subtree(lower))
            internal = members - {upper}
            n_T = max((labels[i] for i in internal), default=-1)
            if not n_T < min(labels[upper], labels[lower]):
                continue
            vertices = _path_vertices(tree, path, lower)
            found.append(SelfEnergyCluster(
                j=top.j, vertices=vertices, nu=top.nu, scale=n_T, exiting_line=upper,
                entering_line=lower, member_nodes=members, member_lines=frozenset(internal),
                minus_one_vertex=_is_minus_one_vertex(vertices),
            ))
    for cluster in found:
        cluster.renormalized = not any(other.member_nodes < cluster.member_nodes for other in found)
    return found


def is_renormalized(scaled: ScaledTree) -> bool:
    """No cluster on a scale >= 0 and no single-vertex scale -1 configuration"""
    return not any(c.scale >= 0 or c.minus_one_vertex for c in detect_self_energy(scaled))


def counting_bound_check(scaled: ScaledTree) -> List[Dict]:
    """Scales n where N_n <= 2 * 2^-n * M - 1 fails (empty when it holds)"""
    mass = scaled.mode_mass()
    top = max(scaled.labels.values(), default=-1)
    violations = []
    for n in range(top + 1):
        count = scaled.lines_on_or_above(n)
        bound = 2.0 * 2.0 ** (-n) * mass - 1.0
        if count and count > bound:
            violations.append({'n': n, 'N_n': count, 'bound': bound})
    return violations


@dataclass
class CountingReport:
    checked: int
    failures: List[Dict]
    top_scale: int


def counting_bound_sweep(enumerator: TreeEnumerator, scales: ScaleSystem, lambda0: float,
                         k_max: int = COUNTING_ORDER) -> CountingReport:
    """Counting bound on every labeling of every renormalized tree with order <= k_max"""
    zero = zero_momentum(scales.dimension)
    radius_per_order = max(enumerator.n_f, 1)
    checked, top = 0, -1
    failures: List[Dict] = []
    for k in range(1, k_max + 1):
        for j in (1, 2, 3):
            roots = [zero] if j == 3 else momenta_in_ball(k * radius_per_order, scales.dimension)
            for nu in roots:
                for root in enumerator.trees(k, j, nu):
                    for scaled in assign_scales(TreeDiagram(root), scales, lambda0):
                        if not is_renormalized(scaled):
                            continue
                        checked += 1
                        top = max(top, max(scaled.labels.values(), default=-1))
                        for violation in counting_bound_check(scaled):
                            failures.append(dict(violation, k=k, j=j, nu=str(nu), tree=root.key))
    logger.info(f"Counting bound: {checked} labeled trees up to order {k_max}, "
                f"{len(failures)} violations, top scale {top}")
    return CountingReport(checked, failures, top)


def cluster_lower_bound_check(scaled: ScaledTree) -> List[Dict]:
    """Clusters on scale n_T >= 0 whose mode mass does not exceed 2^(n_T - 1)"""
    out = []
    for cluster in detect_self_energy(scaled):
        if cluster.scale < 0:
            continue
        mass = scaled.mode_mass(cluster.member_nodes)
        if not mass > 2.0 ** (cluster.scale - 1):
            out.append({'scale': cluster.scale, 'mass': mass, 'order': cluster.order})
    return out


def vertex_factor(vertex: PathVertex, g: ComplexMatrixField) -> complex:
    row = row_of(vertex.j_out)
    if vertex.kind == BRANCH1:
        return g.coefficient(row, vertex.j_in, vertex.mode)
    if vertex.kind == BRANCH2 and vertex.case in MU_CASES:
        return 0.5 * (-1) ** (row + 1) * 1j
    raise TreeLabelError(f"vertex kind {vertex.kind!r}/{vertex.case!r} cannot lie on a cluster path")


def _chains(j: int, k: int, g: ComplexMatrixField, dimension: int,
            enumerator: Optional[TreeEnumerator] = None) -> Iterator[Tuple[PathVertex, ...]]:
    """
    Chains of total order k from (j, 0) back to (j, 0).

    Branch1 vertices never revisit a line. A mu-insertion with a mu-subtree of
    order >= 2 may sit between two internal path lines; it keeps the line, and
    the labelings where it forms a nested cluster are dropped in cluster_value.
    """
    zero = zero_momentum(dimension)
    modes = sorted(set(g.support()) | {zero})
    n_f = max(g.n_modes, 1)
    enumerator = enumerator or TreeEnumerator(g, dimension=dimension)

    def extend(path, used, j_cur, offset, visited):
        left = k - used - 1
        for m in modes:
            for j_next in (1, 2):
                f = g.coefficient(row_of(j_cur), j_next, m)
                if f == 0:
                    continue
                nxt = add_momenta(offset, negate(m))
                vertex = PathVertex(BRANCH1, '', m, j_cur, j_next)
                if (j_next, nxt) == (j, zero):
                    if left == 0:
                        yield path + (vertex,)
                    continue
                if left <= 0 or (j_next, nxt) in visited or l1_norm(nxt) > left * n_f:
                    continue
                yield from extend(path + (vertex,), used + 1, j_next, nxt, visited | {(j_next, nxt)})
        if not path:
            return
        for k1 in range(2, k - used):
            if l1_norm(offset) > (k - used - k1) * n_f:
                continue
            for tau in enumerator.trees(k1, 3, zero):
                for case in MU_CASES:
                    vertex = PathVertex(BRANCH2, case, zero, j_cur, j_cur, tau)
                    yield from extend(path + (vertex,), used + k1, j_cur, offset, visited)

    if k >= 2:
        yield from extend((), 0, j, zero, frozenset({(j, zero)}))


def enumerate_clusters(j: int, k: int, g: ComplexMatrixField,
                       enumerator: Optional[TreeEnumerator] = None,
                       dimension: Optional[int] = None) -> List[SelfEnergyCluster]:
    """Cluster shapes of order k feeding M_j: chains and mu-insertions with a mu-subtree of order k"""
    dimension = g.dimension or dimension or 0
    enumerator = enumerator or TreeEnumerator(g, dimension=dimension)
    zero = zero_momentum(dimension)
    shapes = [SelfEnergyCluster(j=j, vertices=chain) for chain in _chains(j, k, g, dimension, enumerator)]
    if k >= 2:
        for tau in enumerator.trees(k, 3, zero):
            for case in MU_CASES:
                shapes.append(SelfEnergyCluster(j=j, vertices=(PathVertex(BRANCH2, case, zero, j, j, tau),)))
    return shapes


def shift_partners(cluster: SelfEnergyCluster) -> Tuple[SelfEnergyCluster, SelfEnergyCluster]:
    """Detach the chain into a mu-tree and reattach it as the two mu-insertion partners"""
    if cluster.kind != 'second':
        raise ShiftDomainError("shift is defined only for clusters of the second kind")
    if cluster.j != 1:
        raise ShiftDomainError(f"shift is defined for j=1 clusters, got j={cluster.j}")
    if any(v.kind != BRANCH1 for v in cluster.vertices):
        raise ShiftDomainError("shift requires a path made of branch1 vertices")
    *upper, last = cluster.vertices
    kind = ENDPOINT_WHITE if (last.j_out == 2 and _is_zero(last.mode)) else ENDPOINT_BLACK
    node = TreeNode(kind, mode=last.mode, j=last.j_out, nu=last.mode)
    for position in range(len(upper) - 1, -1, -1):
        vertex = upper[position]
        j_out = 3 if position == 0 else vertex.j_out
        node = TreeNode(BRANCH1, mode=vertex.mode, j=j_out, nu=add_momenta(node.nu, vertex.mode),
                        children=(node,))
    if not _is_zero(node.nu):
        raise ShiftDomainError("path modes do not sum to zero")
    zero = node.nu
    partners = tuple(
        SelfEnergyCluster(j=1, vertices=(PathVertex(BRANCH2, case, zero, 1, 1, node),), nu=cluster.nu,
                          scale=cluster.scale)
        for case in MU_CASES
    )
    return partners[0], partners[1]


def bare_cluster_value(cluster: SelfEnergyCluster, x: float, g: ComplexMatrixField, omega,
                       lambda0: float, divisor_floor: float = DEFAULT_DIVISOR_FLOOR) -> complex:
    """Cluster value with unrenormalized propagators and no epsilon factor"""
    omega = np.asarray(omega, dtype=float)
    value = complex(np.prod([vertex_factor(v, g) for v in cluster.vertices]))
    for j_line, offset in cluster.path_lines():
        y = x + float(np.dot(omega, offset))
        divisor = y if j_line == 1 else y + 2.0 * lambda0
        if abs(divisor) < divisor_floor:
            raise SmallDivisorViolation(offset, divisor, j_line)
        value *= -1j / divisor
    for v in cluster.vertices:
        if v.side is not None:
            value *= tree_value(v.side, g, omega, lambda0, divisor_floor)
    return value


def minus_one_pair_values(g: ComplexMatrixField, j: int) -> Tuple[complex, complex]:
    """Values of the mode-0 vertex and of the order-1 mu-insertion (both cases) on a j line"""
    row = row_of(j)
    vertex = g.coefficient(row, j, zero_momentum(g.dimension or 1))
    mu1 = 1j * g.coefficient(1, 1, zero_momentum(g.dimension or 1))
    insertion = 2 * 0.5 * (-1) ** (row + 1) * 1j * mu1
    return vertex, insertion


def cancellation_defects(g: ComplexMatrixField) -> Dict[int, float]:
    """|vertex + insertion| per component; the two scale -1 configurations cancel exactly"""
    return {j: abs(sum(minus_one_pair_values(g, j))) for j in (1, 2)}


class SelfEnergyTable:
    """
    Memoized recursion for M^[n]_j(x) and the renormalized propagators.

    Values depend on epsilon through the epsilon^k_T factor of every cluster.
    Points are keyed by x rounded to 12 digits.
    """

    def __init__(self, g: ComplexMatrixField, scales: ScaleSystem, lambda0: float, epsilon: float,
                 K_SE: int = 3, enumerator: Optional[TreeEnumerator] = None,
                 divisor_floor: float = DEFAULT_DIVISOR_FLOOR):
        self.g = g
        self.scales = scales
        self.omega = scales.omega
        self.lambda0 = float(lambda0)
        self.epsilon = float(epsilon)
        self.K_SE = K_SE
        self.divisor_floor = divisor_floor
        self.enumerator = enumerator or TreeEnumerator(g, dimension=scales.dimension)
        self.catalogue: Dict[int, List[SelfEnergyCluster]] = {
            j: [c for k in range(2, K_SE + 1)
                for c in enumerate_clusters(j, k, g, self.enumerator, scales.dimension)]
            for j in (1, 2)
        }
        self._bare: Dict[Tuple[int, int, float], complex] = {}
        self._prop: Dict[Tuple[int, int, float], complex] = {}
        self.denominator_violations: List[Dict] = []
        logger.info(f"Self-energy catalogue: {len(self.catalogue[1])} shapes (j=1), "
                    f"{len(self.catalogue[2])} shapes (j=2), K_SE={K_SE}")

    @property
    def n_max(self) -> int:
        return self.scales.n_max

    def base(self, j: int) -> float:
        return 0.0 if j == 1 else self.lambda0

    def chi_chain(self, p: int, x: float) -> float:
        y = delta0(x, self.lambda0)
        value = 1.0
        for q in range(p):
            value *= float(self.scales.chi_cutoff(q, y))
        return value

    def bare(self, p: int, j: int, x: float) -> complex:
        """(i/2) sum of cluster values on scale p - 1, without the chi chain"""
        if p <= 0:
            return complex(self.base(j))
        key = (p, j, round(float(x), POINT_DIGITS))
        if key not in self._bare:
            total = sum((self.cluster_value(c, x, p - 1) for c in self.catalogue[j]), 0j)
            self._bare[key] = 0.5j * total
        return self._bare[key]

    def m_scale(self, p: int, j: int, x: float) -> complex:
        """M^[p]_j(x): chi_0 ... chi_{p-1} times the bare value"""
        if p <= 0:
            return complex(self.base(j))
        chain = self.chi_chain(p, x)
        if chain == 0:
            return 0j
        return chain * self.bare(p, j, x)

    def m_upto(self, n: int, j: int, x: float) -> complex:
        return sum((self.m_scale(p, j, x) for p in range(0, n + 1)), 0j)

    def propagator(self, n: int, j: int, x: float) -> complex:
        """g^[n]_j(x) = -i W_n(x) / (x + 2 M^[<=n]_j(x))"""
        key = (n, j, round(float(x), POINT_DIGITS))
        if key in self._prop:
            return self._prop[key]
        w = float(scale_weight(x, n, self.scales, self.lambda0))
        value = 0j
        if w > 0:
            denom = x + 2.0 * self.m_upto(n, j, x)
            size = float(delta0(x, self.lambda0))
            if abs(denom) < 0.5 * size:
                self.denominator_violations.append({'n': n, 'j': j, 'x': x, 'denominator': abs(denom),
                                                'delta0': size})
                logger.warning(f"Denominator {abs(denom):.3e} below Delta0/2 = {size / 2:.3e} at n={n}, j={j}")
            if abs(denom) < self.divisor_floor:
                raise SmallDivisorViolation((), abs(denom), j)
            value = -1j * w / denom
        self._prop[key] = value
        return value

    def line_propagator(self, n: int, j: int, nu: Momentum) -> complex:
        """Renormalized propagator on a lattice line; zero momentum keeps the bare value"""
        if _is_zero(nu):
            return propagator(j, nu, self.omega, self.lambda0, self.divisor_floor)
        return self.propagator(n, j, float(np.dot(self.omega, nu)))

    def cluster_value(self, cluster: SelfEnergyCluster, x: float, scale: int) -> complex:
        """epsilon^k_T times the cluster value summed over internal labels with maximum equal to scale"""
        factor = complex(np.prod([vertex_factor(v, self.g) for v in cluster.vertices]))
        if factor == 0:
            return 0j
        path = [(j_line, x + float(np.dot(self.omega, offset))) for j_line, offset in cluster.path_lines()]
        sides = [TreeDiagram(v.side) for v in cluster.vertices if v.side is not None]
        side_lines = [(s, i) for s, diagram in enumerate(sides) for i in range(len(diagram))
                      if not _is_zero(diagram.node(i).nu)]
        # vertex position -> side index, for insertions strictly inside the path
        inner = {position: s for s, position in
                 enumerate(p for p, v in enumerate(cluster.vertices) if v.side is not None)
                 if 0 < position < len(cluster.vertices) - 1}
        choices = [self._candidates(y, scale) for _, y in path]
        choices += [self._candidates(float(np.dot(self.omega, sides[s].node(i).nu)), scale)
                    for s, i in side_lines]
        total = 0j
        for combo in itertools.product(*choices):
            if max(combo, default=-1) != scale:
                continue
            if self._nested_insertion(inner, combo, len(path), side_lines):
                continue
            value = factor
            for (j_line, y), n in zip(path, combo):
                value *= self.propagator(n, j_line, y)
            if value == 0:
                continue
            side_labels = [{i: -1 for i in range(len(diagram))} for diagram in sides]
            for (s, i), n in zip(side_lines, combo[len(path):]):
                side_labels[s][i] = n
            for diagram, labels in zip(sides, side_labels):
                if not is_renormalized(ScaledTree(diagram, labels)):
                    value = 0j
                    break
                value *= labeled_value(diagram, labels, self)
            total += value
        return self.epsilon ** cluster.order * total

    @staticmethod
    def _nested_insertion(inner: Dict[int, int], combo, n_path: int, side_lines) -> bool:
        """An inner mu-insertion whose subtree sits on scales 0 <= s < both adjacent path lines"""
        for position, s in inner.items():
            top = max((n for (side, _), n in zip(side_lines, combo[n_path:]) if side == s), default=-1)
            if 0 <= top < min(combo[position - 1], combo[position]):
                return True
        return False

    def _candidates(self, x: float, top: int) -> List[int]:
        return [n for n in range(0, min(top, self.n_max) + 1)
                if float(scale_weight(x, n, self.scales, self.lambda0)) > 0]


def self_energy_value(cluster: SelfEnergyCluster, x: float, table: SelfEnergyTable,
                      scale: Optional[int] = None) -> complex:
    """V_T(x) on the cluster's own scale unless another is given"""
    return table.cluster_value(cluster, x, cluster.scale if scale is None else scale)


def _labeled_node_value(diagram: TreeDiagram, index: int, labels: Dict[int, int],
                        table: SelfEnergyTable) -> complex:
    node = diagram.node(index)
    value = node_factor(node, table.g)
    if value != 0:
        value *= table.line_propagator(labels[index], node.j, node.nu)
        for child in diagram.children(index):
            if value == 0:
                break
            value *= _labeled_node_value(diagram, child, labels, table)
    return value.conjugate() if node.conjugate else value


def labeled_value(diagram: TreeDiagram, labels: Dict[int, int], table: SelfEnergyTable) -> complex:
    """Tree value with renormalized propagators on the given scales"""
    return complex(_labeled_node_value(diagram, 0, labels, table))


def renorm_propagator(n: int, j: int, nu: Momentum, table: SelfEnergyTable) -> complex:
    return table.line_propagator(n, j, nu)


def renorm_coefficient(k: int, j: int, nu: Momentum, table: SelfEnergyTable) -> complex:
    """Sum of renormalized tree values over all labelings of renormalized trees"""
    total = 0j
    for root in table.enumerator.trees(k, j, nu):
        diagram = TreeDiagram(root)
        for scaled in assign_scales(diagram, table.scales, table.lambda0):
            if is_renormalized(scaled):
                total += labeled_value(diagram, scaled.labels, table)
    return total


def m_table(n: int, j: int, points, table: SelfEnergyTable) -> pd.DataFrame:
    """M^[n]_j, its bare value and M^[<=n]_j at the given points"""
    rows = []
    for x in points:
        scale_value = table.m_scale(n, j, x)
        bare = table.bare(n, j, x)
        total = table.m_upto(n, j, x)
        rows.append({'n': n, 'j': j, 'x': float(x),
                     'M_re': scale_value.real, 'M_im': scale_value.imag,
                     'bare_re': bare.real, 'bare_im': bare.imag,
                     'M_upto_re': total.real, 'M_upto_im': total.imag})
    return pd.DataFrame(rows, columns=['n', 'j', 'x', 'M_re', 'M_im', 'bare_re', 'bare_im',
                                       'M_upto_re', 'M_upto_im'])


def evaluation_points(table: SelfEnergyTable, radius: int) -> List[float]:
    """omega.nu on a momentum ball, plus x = 0 and x = -2 lambda0"""
    points = {0.0, -2.0 * table.lambda0}
    for nu in momenta_in_ball(radius, table.scales.dimension, include_zero=False):
        points.add(float(np.dot(table.omega, nu)))
    return sorted(points)


def reality_defect(table: SelfEnergyTable, n: int, j: int, x: float) -> float:
    value = table.m_upto(n, j, x)
    return abs(value.imag) / max(1.0, abs(value))


def symmetry_defects(table: SelfEnergyTable) -> pd.DataFrame:
    """M^[n]_1(0) against -M^[n]_2(-2 lambda0), bare values, n = 1..n_max"""
    rows = []
    for n in range(1, table.n_max + 1):
        m1 = table.bare(n, 1, 0.0)
        m2 = table.bare(n, 2, -2.0 * table.lambda0)
        rows.append({'n': n, 'M1_at_0': abs(m1), 'M2_at_minus_2l0': abs(m2),
                     'symmetry_defect': abs(m1 + m2) / max(1.0, abs(m1), abs(m2)),
                     'chi_M1_at_0': abs(table.m_scale(n, 1, 0.0)),
                     'chi_M2_at_minus_2l0': abs(table.m_scale(n, 2, -2.0 * table.lambda0))})
    return pd.DataFrame(rows)


def denominator_check(table: SelfEnergyTable, points) -> List[Dict]:
    """Evaluate every propagator at the points; return recorded denominator violations"""
    for x in points:
        for n in range(table.n_max + 1):
            for j in (1, 2):
                table.propagator(n, j, x)
    return list(table.denominator_violations)


def renorm_checks(table: SelfEnergyTable, points) -> pd.DataFrame:
    """One row per identity: name, worst defect, tolerance and pass flag"""
    symmetry = symmetry_defects(table)
    reality = max((reality_defect(table, n, j, x) for x in points
                   for n in range(table.n_max + 1) for j in (1, 2)), default=0.0)
    vanishing = float(symmetry[['M1_at_0', 'M2_at_minus_2l0']].to_numpy().max()) if len(symmetry) else 0.0
    cancellation = max(cancellation_defects(table.g).values())
    violations = denominator_check(table, points)
    rows = [
        ('symmetry', float(symmetry['symmetry_defect'].max()) if len(symmetry) else 0.0, SYMMETRY_TOLERANCE),
        ('vanishing_at_resonance', vanishing, SYMMETRY_TOLERANCE),
        ('reality', reality, REALITY_TOLERANCE),
        ('minus_one_cancellation', cancellation, 1e-14),
        ('denominator_violations', float(len(violations)), 0.0),
    ]
    frame = pd.DataFrame(rows, columns=['check', 'defect', 'tolerance'])
    frame['passed'] = frame['defect'] <= frame['tolerance']
    for row in frame.itertuples():
        level = logging.INFO if row.passed else logging.WARNING
        logger.log(level, f"{row.check}: defect {row.defect:.3e} (tolerance {row.tolerance:.0e})")
    return frame
