"""Labeled rooted trees: the diagrammatic oracle for the series recursions.

Every coefficient of a solved series is also a sum of tree values: nodes
carry a Fourier mode, an order label and a badge (badge 0 marks the
insertion nodes generated by the eps-dependent part of the linear
operator), lines carry the momentum flowing through them (the sum of the
modes above) and are weighted by the inverse divisor, or by the constant
zero-momentum block G built from the nondegeneracy data.  Ordered child
sequences are enumerated explicitly and every node contributes a 1/s!
factor, so equal orderings cancel the multiplicity exactly.

The module also assigns dyadic scales to lines, detects clusters and
self-energy clusters (single entering and exiting line with equal
momentum), checks the per-scale counting bound with the explicit constant
2^(2+1/tau), and evaluates self-energy values with the entering momentum
treated as a free variable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product

import numpy as np

from .diophantine import RotationVector, scale_of_abs
from .errors import BudgetError, ContractError, InputError
from .models import ModelSpec
from .series import COEFF_DTYPE

ENUM_ORDER_BUDGET = 5
ENUM_TREE_BUDGET = 2_000_000


@dataclass(frozen=True)
class TreeNode:
    """Node of a labeled rooted tree; children are an ordered tuple."""

    mode: tuple[int, ...]
    order: int
    badge: int
    children: tuple = ()

    def momentum(self) -> tuple[int, ...]:
        """Momentum of the exiting line: sum of modes in the subtree."""
        total = list(self.mode)
        for ch in self.children:
            for i, c in enumerate(ch.momentum()):
                total[i] += c
        return tuple(total)

    def total_order(self) -> int:
        return self.order + sum(ch.total_order() for ch in self.children)

    def node_count(self) -> int:
        return 1 + sum(ch.node_count() for ch in self.children)

    def mode_weight(self) -> int:
        """K(theta): sum over nodes of |mode|_1."""
        return (sum(abs(c) for c in self.mode)
                + sum(ch.mode_weight() for ch in self.children))

    def shape(self):
        return tuple(ch.shape() for ch in self.children)

    def serialize(self) -> str:
        mode = ",".join(str(c) for c in self.mode)
        inner = "".join(ch.serialize() for ch in self.children)
        return f"({mode};{self.order};{self.badge}{inner})"


LabeledTree = TreeNode


# -- per-variant labeling rules ----------------------------------------------


class TreeRules:
    """Label alphabets, node tensors and propagators for one model."""

    def __init__(self, spec: ModelSpec):
        self.spec = spec
        self.n = spec.dim_n
        self.d = spec.dim_d
        supp = [m.nu for m in spec.forcing.modes]
        nonzero = [nu for nu in supp if any(nu)]
        if spec.variant in ("maximal_torus", "standard_map"):
            self.internal_modes = sorted(nonzero)
            self.end_modes = sorted(nonzero)
            self.has_zero_lines = False
            self.G = None
            self.arity_cap = None
        elif spec.variant == "lower_tori":
            self.internal_modes = sorted(supp)
            self.end_modes = sorted(nonzero)
            self.has_zero_lines = True
            G = np.zeros((self.n, self.n))
            G[spec.r:, spec.r:] = np.linalg.inv(spec.hessian)
            self.G = G.astype(COEFF_DTYPE)
            self.arity_cap = None
        else:  # dissipative
            zero = (0,) * self.d
            self.internal_modes = [zero]
            self.end_modes = sorted(nonzero)
            self.has_zero_lines = True
            self.G = np.array([[1.0 / spec.a]], dtype=COEFF_DTYPE)
            self.arity_cap = len(spec.g_centered) - 1
        self.rho0_orders = (1,) if spec.variant == "dissipative" else ()

    def node_tensor(self, mode: tuple[int, ...], s: int) -> np.ndarray | None:
        """Derivative tensor of the right-hand side at the unperturbed point.

        Shape (n,)*(s+1); axis 0 is the output component, the remaining s
        axes contract against the entering lines.  Returns None when the
        tensor vanishes identically.
        """
        spec = self.spec
        n = self.n
        if spec.variant == "standard_map":
            m = spec.forcing.get(mode)
            if m is None:
                return None
            val = m.coeff * (1j * mode[0]) ** s
            return np.full((1,) * (s + 1), val, dtype=COEFF_DTYPE)
        if spec.variant == "maximal_torus":
            m = spec.forcing.get(mode)
            if m is None:
                return None
            inu = 1j * np.asarray(mode, dtype=float)
            phase = np.exp(1j * float(np.dot(mode, spec.alpha0)))
            t = -m.coeff * phase * inu
            for _ in range(s):
                t = np.multiply.outer(t, inu)
            return t.astype(COEFF_DTYPE)
        if spec.variant == "lower_tori":
            m = spec.forcing.get(mode)
            if m is None or m.beta_poly is None:
                return None
            r, sdim = spec.r, spec.s
            inu = 1j * np.asarray(mode, dtype=float)
            phase = np.exp(1j * float(np.dot(mode, spec.alpha0)))
            out = np.zeros((n,) * (s + 1), dtype=COEFF_DTYPE)
            for idx in product(range(n), repeat=s + 1):
                alpha_factor = 1.0 + 0.0j
                dmu = [0] * sdim
                for j in idx:
                    if j < r:
                        alpha_factor *= inu[j]
                    else:
                        dmu[j - r] += 1
                if alpha_factor == 0:
                    continue
                c = m.beta_poly.get(tuple(dmu))
                if c is None or c == 0:
                    continue
                deriv = c * math.prod(math.factorial(q) for q in dmu)
                out[idx] = -phase * alpha_factor * deriv
            if not np.any(out):
                return None
            return out
        # dissipative
        zero = (0,) * self.d
        if mode == zero:
            if s < 1 or s >= len(spec.g_centered):
                return None
            val = -spec.g_centered[s] * math.factorial(s)
            if val == 0:
                return None
            return np.full((1,) * (s + 1), val, dtype=COEFF_DTYPE)
        if s == 0:
            m = spec.forcing.get(mode)
            if m is None:
                return None
            return np.full((1,), m.coeff, dtype=COEFF_DTYPE)
        return None

    def delta0(self, omega: RotationVector, nu, x_offset: float = 0.0) -> complex:
        return self.spec.delta0(omega.dot(nu) + x_offset)

    def delta_p(self, p: int, x: float) -> complex:
        if p == 1:
            return self.spec.delta1(x)
        return 0.0 + 0.0j

    def propagate(self, omega: RotationVector, nu, value: np.ndarray,
                  x_offset: float = 0.0) -> np.ndarray:
        """Apply the line factor for momentum nu (plus a symbolic offset)."""
        if not any(nu) and x_offset == 0.0:
            if self.G is None:
                raise ContractError("zero-momentum line in a model without G block")
            return self.G @ value
        d0 = self.spec.delta0(omega.dot(nu) + x_offset)
        if d0 == 0:
            raise InputError(f"zero divisor at momentum {tuple(nu)}")
        return value / d0


# -- enumeration ---------------------------------------------------------------


def _lattice_ball(d: int, bound: int):
    """All nu in Z^d with |nu|_1 <= bound (bound >= 0)."""
    rng = range(-bound, bound + 1)
    for nu in product(rng, repeat=d):
        if sum(abs(c) for c in nu) <= bound:
            yield nu


def _compositions(total: int, parts: int):
    """Ordered compositions of total into `parts` positive integers."""
    if parts == 1:
        yield (total,)
        return
    for first in range(1, total - parts + 2):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


class TreeEnumerator:
    """Memoized enumeration of labeled trees for one model."""

    def __init__(self, spec: ModelSpec, order_budget: int = ENUM_ORDER_BUDGET):
        self.spec = spec
        self.rules = TreeRules(spec)
        self.order_budget = order_budget
        self.Nf = spec.mode_bound
        self._memo: dict = {}
        self._count = 0

    def trees(self, k: int, nu) -> tuple:
        """All trees of order k whose root line carries momentum nu."""
        nu = tuple(int(c) for c in nu)
        if k > self.order_budget:
            raise BudgetError(
                f"tree enumeration at order {k} exceeds the budget "
                f"({self.order_budget}); raise order_budget explicitly")
        if not any(nu) and not self.rules.has_zero_lines:
            return ()
        return self._trees_any(k, nu)

    def compatibility_trees(self, k: int) -> tuple:
        """Zero-momentum trees of order k (root order label 0).

        These encode the zero-mode sums independently of whether the model
        has a zero-momentum propagator; values are taken without the root
        line factor.
        """
        if k > self.order_budget:
            raise BudgetError("tree enumeration order budget exceeded")
        return self._trees_any(k, (0,) * self.spec.dim_d)

    # internal ------------------------------------------------------------

    def _trees_any(self, k: int, nu) -> tuple:
        key = (k, nu)
        if key in self._memo:
            return self._memo[key]
        if k < 1:
            return ()
        rules = self.rules
        out: list[TreeNode] = []
        zero = not any(nu)
        k_root = 0 if zero else 1

        # badge-1 root with s ordered children
        mode_pool = set(rules.internal_modes) | set(rules.end_modes)
        for mode in sorted(mode_pool):
            if k_root == 1 and k == 1:
                if mode == nu and mode in rules.end_modes:
                    self._bump(1)
                    out.append(TreeNode(mode, 1, 1))
                # fall through: s >= 1 needs k - k_root >= 1
            budget = k - k_root
            if budget < 1:
                continue
            s_min = 2 if (zero and not any(mode)) else 1
            s_max = budget
            if rules.arity_cap is not None:
                s_max = min(s_max, rules.arity_cap)
            target = tuple(n_i - m_i for n_i, m_i in zip(nu, mode))
            for s in range(s_min, s_max + 1):
                if rules.node_tensor(mode, s) is None:
                    continue
                for orders in _compositions(budget, s):
                    for momenta in self._momentum_splits(target, orders):
                        slot_lists = []
                        ok = True
                        for k_i, mu_i in zip(orders, momenta):
                            subs = self._subtrees(k_i, mu_i)
                            if not subs:
                                ok = False
                                break
                            slot_lists.append(subs)
                        if not ok:
                            continue
                        for combo in product(*slot_lists):
                            self._bump(1)
                            out.append(TreeNode(mode, k_root, 1, tuple(combo)))

        # badge-0 root: single child, same momentum, one eps-order consumed
        if not zero:
            for p in rules.rho0_orders:
                if k - p >= 1:
                    for child in self._trees_any(k - p, nu):
                        self._bump(1)
                        out.append(TreeNode((0,) * self.spec.dim_d, p, 0, (child,)))

        result = tuple(out)
        self._memo[key] = result
        return result

    def _subtrees(self, k: int, mu) -> tuple:
        if not any(mu) and not self.rules.has_zero_lines:
            return ()
        return self._trees_any(k, mu)

    def _momentum_splits(self, target, orders):
        """Ordered tuples of momenta summing to target, |mu_i|_1 <= k_i * Nf."""
        d = self.spec.dim_d

        def rec(i, remaining):
            if i == len(orders) - 1:
                if sum(abs(c) for c in remaining) <= orders[i] * self.Nf:
                    yield (remaining,)
                return
            for mu in _lattice_ball(d, orders[i] * self.Nf):
                rest = tuple(r - m for r, m in zip(remaining, mu))
                # prune: the rest must be reachable by the remaining orders
                if sum(abs(c) for c in rest) > sum(orders[i + 1:]) * self.Nf:
                    continue
                for tail in rec(i + 1, rest):
                    yield (mu,) + tail

        yield from rec(0, tuple(target))

    def _bump(self, n):
        self._count += n
        if self._count > ENUM_TREE_BUDGET:
            raise BudgetError("tree enumeration produced too many trees")


def enumerate_trees(spec: ModelSpec, k: int, nu,
                    order_budget: int = ENUM_ORDER_BUDGET) -> tuple:
    """The full set of labeled trees contributing to coefficient (k, nu)."""
    return TreeEnumerator(spec, order_budget).trees(k, nu)


# -- tree values ---------------------------------------------------------------


def _contract(tensor: np.ndarray, child_values: list[np.ndarray]) -> np.ndarray:
    """Contract trailing axes of the node tensor with child value vectors."""
    out = tensor
    for v in reversed(child_values):
        out = np.tensordot(out, v, axes=([out.ndim - 1], [0]))
    return out


def tree_value(tree: TreeNode, spec: ModelSpec, omega: RotationVector,
               include_root_propagator: bool = True,
               rules: TreeRules | None = None) -> np.ndarray:
    """Value of one labeled tree: node factors times line propagators."""
    rules = rules or TreeRules(spec)

    def rec(node: TreeNode):
        mom = list(node.mode)
        ws = []
        for ch in node.children:
            ch_mom, ch_val = rec(ch)
            w = rules.propagate(omega, ch_mom, ch_val)
            ws.append(w)
            for i, c in enumerate(ch_mom):
                mom[i] += c
        mom = tuple(mom)
        if node.badge == 0:
            val = -rules.delta_p(node.order, omega.dot(mom)) * ws[0]
        else:
            s = len(node.children)
            tensor = rules.node_tensor(node.mode, s)
            if tensor is None:
                val = np.zeros(rules.n, dtype=COEFF_DTYPE)
            else:
                val = _contract(tensor, ws) / math.factorial(s)
        return mom, val

    mom, val = rec(tree)
    if include_root_propagator:
        val = rules.propagate(omega, mom, val)
    return val


def tree_sum(spec: ModelSpec, omega: RotationVector, k: int, nu,
             enumerator: TreeEnumerator | None = None) -> np.ndarray:
    """sum of Val(theta) over all trees of order k and momentum nu.

    This must reproduce the recursion coefficient at (k, nu); disagreement
    beyond the oracle tolerance signals a labeling-convention bug.
    """
    enum = enumerator or TreeEnumerator(spec)
    rules = enum.rules
    total = np.zeros(spec.dim_n, dtype=COEFF_DTYPE)
    for tree in enum.trees(k, nu):
        total = total + tree_value(tree, spec, omega, rules=rules)
    return total


def compatibility_tree_sum(spec: ModelSpec, omega: RotationVector, k: int,
                           enumerator: TreeEnumerator | None = None) -> np.ndarray:
    """Zero-momentum tree sum of order k without the root line factor."""
    enum = enumerator or TreeEnumerator(spec)
    rules = enum.rules
    total = np.zeros(spec.dim_n, dtype=COEFF_DTYPE)
    for tree in enum.compatibility_trees(k):
        total = total + tree_value(tree, spec, omega,
                                   include_root_propagator=False, rules=rules)
    return total


def group_by_free_structure(trees) -> dict:
    """Group trees by their underlying unrooted labeled structure.

    Detaching the root line and reattaching it anywhere produces trees in
    the same group; the canonical key is the lexicographically smallest
    rooted serialization over all choices of root node (labels move with
    the nodes, orderings are forgotten).
    """

    def canonical(tree: TreeNode) -> str:
        # collect adjacency with node labels
        nodes = []
        edges = []

        def walk(node, parent_id):
            my_id = len(nodes)
            nodes.append(node.mode)
            if parent_id is not None:
                edges.append((parent_id, my_id))
            for ch in node.children:
                walk(ch, my_id)

        walk(tree, None)
        adj = {i: [] for i in range(len(nodes))}
        for a, b in edges:
            adj[a].append(b)
            adj[b].append(a)

        def rooted_key(i, parent):
            subs = sorted(rooted_key(j, i) for j in adj[i] if j != parent)
            return "(" + ",".join(str(c) for c in nodes[i]) + "".join(subs) + ")"

        return min(rooted_key(i, None) for i in range(len(nodes)))

    groups: dict[str, list] = {}
    for t in trees:
        groups.setdefault(canonical(t), []).append(t)
    return groups


# -- scales, clusters, self-energy detection -----------------------------------


@dataclass
class Line:
    node_id: int          # line exits this node
    parent_id: int | None  # and enters this one (None: root line)
    momentum: tuple[int, ...]
    scale: int


@dataclass
class Cluster:
    nodes: frozenset
    scale: int
    internal_lines: list
    entering_lines: list
    exiting_line: int | None
    is_self_energy: bool
    momentum: tuple[int, ...] | None   # common entering/exiting momentum


@dataclass
class ClusterReport:
    lines: list
    clusters: list
    self_energy_clusters: list
    lines_per_scale: dict
    exiting_per_scale: dict

    def counts(self, n: int) -> tuple[int, int, int]:
        """(N_n, S_n, N*_n): lines on scale n, those exiting self-energy
        clusters, and the difference."""
        N = self.lines_per_scale.get(n, 0)
        S = self.exiting_per_scale.get(n, 0)
        return N, S, N - S


def _index_tree(tree: TreeNode):
    """Preorder ids, parents, modes and line momenta."""
    parents = {}
    modes = {}
    order = {}
    counter = [0]

    def walk(node, parent):
        my_id = counter[0]
        counter[0] += 1
        parents[my_id] = parent
        modes[my_id] = node.mode
        order[my_id] = node.order
        for ch in node.children:
            walk(ch, my_id)

    walk(tree, None)
    n_nodes = counter[0]
    children = {i: [] for i in range(n_nodes)}
    for i, p in parents.items():
        if p is not None:
            children[p].append(i)
    momenta = {}

    def mom(i):
        if i not in momenta:
            total = list(modes[i])
            for j in children[i]:
                for a, c in enumerate(mom(j)):
                    total[a] += c
            momenta[i] = tuple(total)
        return momenta[i]

    for i in range(n_nodes):
        mom(i)
    return parents, children, modes, momenta, n_nodes


def scale_decomposition(tree: TreeNode, spec: ModelSpec, omega: RotationVector,
                        gamma: float) -> ClusterReport:
    """Assign dyadic scales to all lines and detect (self-energy) clusters."""
    parents, children, modes, momenta, n_nodes = _index_tree(tree)
    lines = []
    for i in range(n_nodes):
        nu = momenta[i]
        if not any(nu):
            sc = -1
        else:
            sc = scale_of_abs(abs(spec.divisor_arg(omega, nu)), gamma)
        lines.append(Line(i, parents[i], nu, sc))
    max_scale = max((ln.scale for ln in lines), default=-1)

    clusters: list[Cluster] = []
    seen: set[frozenset] = set()
    for n in range(-1, max_scale + 1):
        # components over internal lines (parent exists) with scale <= n
        parent_edge = {i: None for i in range(n_nodes)}
        for ln in lines:
            if ln.parent_id is not None and ln.scale <= n:
                parent_edge[ln.node_id] = ln.parent_id

        def find(i):
            while parent_edge[i] is not None:
                i = parent_edge[i]
            return i

        comps: dict[int, set] = {}
        for i in range(n_nodes):
            comps.setdefault(find(i), set()).add(i)
        for comp in comps.values():
            key = frozenset(comp)
            if key in seen:
                continue
            internal = [ln for ln in lines
                        if ln.parent_id in comp and ln.node_id in comp
                        and ln.scale <= n]
            cscale = max((ln.scale for ln in internal), default=-1)
            if cscale != n and not (n == -1 and not internal):
                continue
            seen.add(key)
            entering = [ln for ln in lines
                        if ln.node_id not in comp and ln.parent_id in comp]
            top = [ln for ln in lines
                   if ln.node_id in comp and (ln.parent_id is None
                                              or ln.parent_id not in comp)]
            exit_line = top[0] if top else None
            exits = exit_line is not None and exit_line.scale > n
            is_se = (exits and len(entering) == 1
                     and entering[0].momentum == exit_line.momentum)
            clusters.append(Cluster(
                nodes=key, scale=cscale,
                internal_lines=[ln.node_id for ln in internal],
                entering_lines=[ln.node_id for ln in entering],
                exiting_line=exit_line.node_id if exits else None,
                is_self_energy=is_se,
                momentum=entering[0].momentum if is_se else None))

    se_clusters = [c for c in clusters if c.is_self_energy]
    lines_per_scale: dict[int, int] = {}
    for ln in lines:
        lines_per_scale[ln.scale] = lines_per_scale.get(ln.scale, 0) + 1
    exiting_ids = {c.exiting_line for c in se_clusters}
    exiting_per_scale: dict[int, int] = {}
    for ln in lines:
        if ln.node_id in exiting_ids:
            exiting_per_scale[ln.scale] = exiting_per_scale.get(ln.scale, 0) + 1
    return ClusterReport(lines=lines, clusters=clusters,
                         self_energy_clusters=se_clusters,
                         lines_per_scale=lines_per_scale,
                         exiting_per_scale=exiting_per_scale)


def siegel_bryuno_check(tree: TreeNode, spec: ModelSpec, omega: RotationVector,
                        gamma: float, tau: float) -> dict:
    """Per-scale margins of the counting bound N*_n <= c 2^(-n/tau) K(theta)."""
    report = scale_decomposition(tree, spec, omega, gamma)
    c = 2.0 ** (2.0 + 1.0 / tau)
    K_theta = tree.mode_weight()
    margins = {}
    violations = []
    for n in sorted(report.lines_per_scale):
        if n < 0:
            continue
        N, S, Nstar = report.counts(n)
        bound = c * 2.0 ** (-n / tau) * K_theta
        margins[n] = bound - Nstar
        if Nstar > bound:
            violations.append((n, Nstar, bound))
    worst = min(margins.values()) if margins else math.inf
    return {"margins": margins, "worst_margin": worst,
            "violations": violations, "K_theta": K_theta, "c": c}


# -- self-energy clusters as evaluable fragments --------------------------------


@dataclass(frozen=True)
class SelfEnergyCluster:
    """A cluster fragment with its entering line left open.

    root: the cluster content as a rooted tree (root's line = exiting line).
    entering_path: child indices from the root down to the entering node.
    entering_slot: position of the external line in that node's ordered
    argument list (node tensors are symmetric in their argument slots, so
    the slot only affects counting, not the value).
    """

    root: TreeNode
    entering_path: tuple[int, ...]
    entering_slot: int

    def order(self) -> int:
        return self.root.total_order()


def self_energy_value(T: SelfEnergyCluster, spec: ModelSpec,
                      omega: RotationVector, x: float,
                      rules: TreeRules | None = None) -> np.ndarray:
    """Matrix value of the cluster at entering-line variable x = omega.nu.

    Internal lines on the path from the entering node to the root carry
    their cluster momentum shifted by the entering momentum, so their
    divisor argument is omega.mu + x.  The entering and exiting indices
    stay uncontracted: the result has shape (n, n), axis 0 exiting.
    """
    rules = rules or TreeRules(spec)
    n = rules.n

    def rec(node: TreeNode, path):
        """(cluster momentum at and below node, value array).

        Values are vectors off the entering path and (n, entering)
        matrices on it; contracting a node tensor walks its symmetric
        argument axes from position 1, and tensordot appends a matrix
        child's entering axis at the end, where it stays out of the way.
        """
        at_entering = path is not None and len(path) == 0
        mom = list(node.mode)
        ws = []
        for idx, ch in enumerate(node.children):
            ch_path = path[1:] if (path is not None and len(path) > 0
                                   and path[0] == idx) else None
            ch_mom, ch_val = rec(ch, ch_path)
            for i, c in enumerate(ch_mom):
                mom[i] += c
            on_path = ch_path is not None
            if on_path or any(ch_mom):
                d0 = spec.delta0(omega.dot(ch_mom) + (x if on_path else 0.0))
                if d0 == 0:
                    raise InputError("internal line divisor vanishes at this x")
                w = ch_val / d0
            else:
                if rules.G is None:
                    raise ContractError("zero-momentum line without G block")
                w = np.tensordot(rules.G, ch_val, axes=([1], [0]))
            ws.append(w)
        mom = tuple(mom)

        if node.badge == 0:
            arg = omega.dot(mom) + (x if path is not None else 0.0)
            factor = -rules.delta_p(node.order, arg)
            if at_entering:
                return mom, factor * np.eye(n, dtype=COEFF_DTYPE)
            return mom, factor * ws[0]

        s_total = len(node.children) + (1 if at_entering else 0)
        tensor = rules.node_tensor(node.mode, s_total)
        if tensor is None:
            shape = (n, n) if path is not None else (n,)
            return mom, np.zeros(shape, dtype=COEFF_DTYPE)
        out = tensor
        for w in ws:
            out = np.tensordot(out, w, axes=([1], [0]))
        # at the entering node one slot axis is left open and becomes the
        # entering index; it already sits at axis 1 after the contractions
        return mom, out / math.factorial(s_total)

    mom_total, val = rec(T.root, T.entering_path)
    if any(mom_total):
        raise ContractError("self-energy cluster modes do not sum to zero")
    if val.ndim == 1:
        # a degenerate fragment with no entering dependence contributes nothing
        val = np.zeros((n, n), dtype=COEFF_DTYPE)
    return val


def enumerate_self_energy_clusters(spec: ModelSpec, order: int) -> list[SelfEnergyCluster]:
    """All self-energy cluster fragments of the given order (order <= 2).

    Fragments whose node tensors vanish identically are dropped.  Higher
    orders are outside the enumeration budget of this analysis layer.
    """
    rules = TreeRules(spec)
    zero = (0,) * spec.dim_d
    mode_pool = sorted(set(rules.internal_modes) | set(rules.end_modes))
    out: list[SelfEnergyCluster] = []

    if order == 1:
        if rules.node_tensor(zero, 1) is not None:
            out.append(SelfEnergyCluster(TreeNode(zero, 1, 1), (), 0))
        for p in rules.rho0_orders:
            out.append(SelfEnergyCluster(TreeNode(zero, p, 0), (), 0))
        return out

    if order != 2:
        raise BudgetError("self-energy enumeration supports orders 1 and 2")

    # chain fragments: entering line at the bottom node, path (0,)
    badge_opts = [(1, None)] + [(0, p) for p in rules.rho0_orders]
    for rb, rp in badge_opts:
        for cb, cp in badge_opts:
            if rb == 1 and cb == 1:
                for m in mode_pool:
                    mneg = tuple(-c for c in m)
                    if rules.node_tensor(m, 1) is None:
                        continue
                    if rules.node_tensor(mneg, 1) is None:
                        continue
                    child = TreeNode(mneg, 1, 1)
                    out.append(SelfEnergyCluster(TreeNode(m, 1, 1, (child,)), (0,), 0))
            elif rb == 1 and cb == 0:
                if rules.node_tensor(zero, 1) is not None:
                    child = TreeNode(zero, cp, 0)
                    out.append(SelfEnergyCluster(TreeNode(zero, 1, 1, (child,)), (0,), 0))
            elif rb == 0 and cb == 1:
                if rules.node_tensor(zero, 1) is not None:
                    child = TreeNode(zero, 1, 1)
                    out.append(SelfEnergyCluster(TreeNode(zero, rp, 0, (child,)), (0,), 0))
            else:
                child = TreeNode(zero, cp, 0)
                out.append(SelfEnergyCluster(TreeNode(zero, rp, 0, (child,)), (0,), 0))

    # entering line at the root next to a leaf child: two slot positions
    for m in mode_pool:
        mneg = tuple(-c for c in m)
        if not any(mneg) or mneg not in rules.end_modes:
            continue
        if rules.node_tensor(m, 2) is None or rules.node_tensor(mneg, 0) is None:
            continue
        leaf = TreeNode(mneg, 1, 1)
        for slot in (0, 1):
            out.append(SelfEnergyCluster(TreeNode(m, 1, 1, (leaf,)), (), slot))
    return out


def self_energy_sum(spec: ModelSpec, omega: RotationVector, order: int,
                    x: float) -> np.ndarray:
    """Sum of all self-energy cluster values of one order at the point x."""
    rules = TreeRules(spec)
    total = np.zeros((spec.dim_n, spec.dim_n), dtype=COEFF_DTYPE)
    for frag in enumerate_self_energy_clusters(spec, order):
        total = total + self_energy_value(frag, spec, omega, x, rules=rules)
    return total


def self_energy_derivative(spec: ModelSpec, omega: RotationVector, order: int,
                           x: float, step: float) -> np.ndarray:
    """Central-difference d/dx of the order-wise self-energy sum."""
    up = self_energy_sum(spec, omega, order, x + step)
    dn = self_energy_sum(spec, omega, order, x - step)
    return (up - dn) / (2.0 * step)


def fragment_from_cluster(tree: TreeNode, cluster: Cluster) -> SelfEnergyCluster:
    """Turn a detected self-energy cluster of a concrete tree into a fragment."""
    if not cluster.is_self_energy:
        raise InputError("cluster is not a self-energy cluster")
    parents, children, modes, momenta, n_nodes = _index_tree(tree)
    id_of = {}
    counter = [0]

    def assign(node):
        my = counter[0]
        counter[0] += 1
        id_of[my] = node
        for ch in node.children:
            assign(ch)

    assign(tree)
    comp = set(cluster.nodes)
    enter_id = cluster.entering_lines[0]
    top = [i for i in comp if parents[i] is None or parents[i] not in comp][0]

    def rebuild(i):
        kept = [j for j in children[i] if j in comp]
        node = id_of[i]
        kept_nodes = tuple(rebuild(j) for j in kept)
        return TreeNode(node.mode, node.order, node.badge, kept_nodes)

    # path from top to the node the entering line feeds, and the slot index
    target = parents[enter_id]
    path = []
    chain = [target]
    while chain[-1] != top:
        chain.append(parents[chain[-1]])
    chain.reverse()
    for a, b in zip(chain, chain[1:]):
        kept = [j for j in children[a] if j in comp]
        path.append(kept.index(b))
    slot = children[target].index(enter_id)
    return SelfEnergyCluster(rebuild(top), tuple(path), slot)


# -- factorial accumulation demo -------------------------------------------------


def factorial_chain_tree(spec: ModelSpec, omega: RotationVector, k: int, nu,
                         f_coeff: complex | None = None):
    """Chain of k-1 badge-0 insertion nodes over a single forced end node.

    Every line carries the same momentum nu, so the value collapses to
    (-1)^(k+1) (i omega.nu)^(k-2) f_nu: each insertion node multiplies by
    -delta_1/delta_0 = -i omega.nu.  Returns (tree, value).  When f_coeff
    is None the forcing must contain the mode; passing an explicit value
    supports the analytic-envelope growth demo below.
    """
    if spec.variant != "dissipative":
        raise InputError("chain trees are a dissipative-model construction")
    if k < 2:
        raise InputError("chain needs k >= 2")
    nu = tuple(int(c) for c in nu)
    if not any(nu):
        raise InputError("chain momentum must be nonzero")
    zero = (0,) * spec.dim_d
    tree: TreeNode = TreeNode(nu, 1, 1)
    for _ in range(k - 1):
        tree = TreeNode(zero, 1, 0, (tree,))
    return tree, chain_value(spec, omega, k, nu, f_coeff)


def chain_value(spec: ModelSpec, omega: RotationVector, k: int, nu,
                f_coeff: complex | None = None) -> complex:
    """Closed-form value of the badge-0 chain: (-1)^(k+1) (i omega.nu)^(k-2) f_nu."""
    nu = tuple(int(c) for c in nu)
    if f_coeff is None:
        mode = spec.forcing.get(nu)
        if mode is None:
            raise InputError(f"forcing has no mode {nu}; pass f_coeff explicitly")
        f_coeff = mode.coeff
    ix = 1j * omega.dot(nu)
    return (-1.0) ** (k + 1) * ix ** (k - 2) * f_coeff


def factorial_growth_fit(spec: ModelSpec, omega: RotationVector,
                         ks=tuple(range(4, 11)), xi: float = 1.0,
                         radius_factor: int = 3) -> dict:
    """Per-k optimized chain values fitted against a_1^k (k!)^(a_2).

    A trigonometric-polynomial forcing cannot feed the accumulation (its
    modes stop at the support radius), so the optimizer scores candidate
    momenta with the analytic decay envelope |f_nu| = e^(-xi |nu|_1) and
    maximizes |i omega.nu|^(k-2) e^(-xi |nu|_1) over a lattice ball growing
    linearly with k.  The fitted exponent a_2 comes out positive with an
    essentially perfect fit when the growth mechanism is implemented
    correctly.
    """
    ks = sorted(ks)
    log_vals = []
    chosen = []
    for k in ks:
        radius = max(4, radius_factor * k)
        best = None
        best_nu = None
        for nu in _lattice_ball(spec.dim_d, radius):
            if not any(nu):
                continue
            l1 = sum(abs(c) for c in nu)
            x = abs(omega.dot(nu))
            if x == 0.0:
                continue
            score = (k - 2) * math.log(x) - xi * l1
            if best is None or score > best:
                best, best_nu = score, nu
        log_vals.append(best)
        chosen.append(best_nu)
    A = np.column_stack([np.ones(len(ks)),
                         np.asarray(ks, dtype=float),
                         np.array([math.lgamma(k + 1) for k in ks])])
    y = np.asarray(log_vals)
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    fit = A @ coef
    ss_res = float(np.sum((y - fit) ** 2))
    ss_tot = float(np.sum((y - np.mean(y)) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return {"ks": list(ks), "log_values": [float(v) for v in y],
            "momenta": chosen, "a2": float(coef[2]), "log_a1": float(coef[1]),
            "r_squared": r2}
