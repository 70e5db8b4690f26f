"""
Sampling-free expectation on the coarsest level for discrete increments.

With three- or four-point increments a path of M0 steps can only take
q^(d r M0) different increment sequences, so E[phi(X_M0)] is a finite sum

    Y0_exact = sum_i P(xi = xi^(i)) phi(X_M0^(i)).

The probability tree is traversed depth first over its top draws; below the
split depth each subtree is expanded breadth first with numpy, one array row per
node. Every internal node's state is computed once and shared by its children,
so the work is proportional to the number of tree nodes.

Subtrees are independent and may be evaluated by a thread pool; their partial
sums are merged with math.fsum in DFS order, so the value does not depend on
the number of workers and repeated calls return the identical float.
"""

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterator, List, Tuple

import numpy as np

from . import log
from .errors import BudgetExceededError, InputError, UnsupportedError
from .increments import DistributionKind, atoms
from .integrators import Scheme, evolve, substeps
from .model import LangevinModel, QoI

DEFAULT_BUDGET = 10**8

# Leaves per vectorised subtree
SUBTREE_LEAVES = 2**16

PROBABILITY_TOL = 1e-12


@dataclass(frozen=True)
class EnumerationPlan:
    """Shape of the probability tree for one coarse path.

    Attributes:
        q: atom count of the one-dimensional law (3 or 4)
        M0: coarse steps
        draws_per_step: increment vectors per step (r)
        dim: phase-space dimension d
        atoms: (value, probability) pairs of the one-dimensional law
    """

    q: int
    M0: int
    draws_per_step: int
    dim: int
    atoms: Tuple[Tuple[float, float], ...]

    @property
    def depth(self) -> int:
        return self.draws_per_step * self.M0

    @property
    def branching(self) -> int:
        return self.q**self.dim

    @property
    def total_leaves(self) -> int:
        return self.q ** (self.dim * self.draws_per_step * self.M0)

    @property
    def total_nodes(self) -> int:
        """Non-root nodes, i.e. substep evaluations of a full traversal."""
        b = self.branching
        return sum(b**k for k in range(1, self.depth + 1))

    def branches(self) -> Tuple[np.ndarray, np.ndarray]:
        """All q^d increment vectors of one draw and their probabilities."""
        values = np.array([a[0] for a in self.atoms])
        probs = np.array([a[1] for a in self.atoms])
        index = np.array(list(itertools.product(range(self.q), repeat=self.dim)), dtype=int)
        vectors = values[index]
        weights = np.ones(len(index))
        for k in range(self.dim):
            weights = weights * probs[index[:, k]]
        return vectors, weights


@dataclass(frozen=True)
class ExactResult:
    value: float
    leaves: int
    nodes: int
    probability_mass: float
    plan: EnumerationPlan


def plan(scheme: Scheme, dist: DistributionKind, M0: int, dim: int = 1) -> EnumerationPlan:
    """Enumeration plan for M0 coarse steps.

    Raises:
        UnsupportedError: dist is Gaussian
        InputError: M0 or dim not positive
    """
    dist = DistributionKind(dist)
    if not dist.is_discrete:
        raise UnsupportedError("exact enumeration needs a discrete increment law")
    if M0 < 1 or dim < 1:
        raise InputError(f"M0 and dim must be positive, got M0={M0}, dim={dim}")
    values, probs = atoms(dist)
    mass = math.fsum(probs)
    if abs(mass - 1.0) > 1e-15:
        raise InputError(f"atom probabilities sum to {mass!r}")
    return EnumerationPlan(
        q=len(values),
        M0=M0,
        draws_per_step=Scheme(scheme).draws_per_step,
        dim=dim,
        atoms=tuple(zip(values.tolist(), probs.tolist())),
    )


def _split_depth(tree: EnumerationPlan) -> int:
    depth = tree.depth
    while depth > 0 and tree.branching ** (tree.depth - depth + 1) <= SUBTREE_LEAVES:
        depth -= 1
    return depth


def _roots(maps, vectors, weights, state, prob, depth, split) -> Iterator[Tuple[np.ndarray, np.ndarray, float]]:
    """Depth-first walk of the top `split` draws, yielding subtree roots in order."""
    if depth == split:
        # q, p of shape (1, d)
        yield state[0], state[1], prob
        return
    substep = maps[depth % len(maps)]
    q, p = state
    for vector, weight in zip(vectors, weights):
        child = substep(q, p, vector[None, :])
        yield from _roots(maps, vectors, weights, child, prob * weight, depth + 1, split)


def _expand(maps, vectors, weights, qoi, q, p, prob, start, depth) -> Tuple[float, float, int, int]:
    """Breadth-first expansion of one subtree down to the leaves."""
    branching = len(weights)
    probs = np.array([prob])
    nodes = 0
    for level in range(start, depth):
        substep = maps[level % len(maps)]
        count = q.shape[0]
        q = np.repeat(q, branching, axis=0)
        p = np.repeat(p, branching, axis=0)
        draws = np.tile(vectors, (count, 1))
        probs = (probs[:, None] * weights[None, :]).reshape(-1)
        q, p = substep(q, p, draws)
        nodes += q.shape[0]
    contributions = probs * qoi(q, p)
    return math.fsum(contributions), math.fsum(probs), len(probs), nodes


def enumerate_tree(
    model: LangevinModel,
    scheme: Scheme,
    qoi: QoI,
    M0: int,
    dist: DistributionKind,
    budget: int = DEFAULT_BUDGET,
    threads: int = 1,
) -> ExactResult:
    """Exact E[phi(X_M0)] with traversal statistics.

    Raises:
        BudgetExceededError: the tree has more than `budget` leaves
        UnsupportedError: dist is Gaussian
    """
    scheme = Scheme(scheme)
    tree = plan(scheme, dist, M0, model.dim)
    if tree.total_leaves > budget:
        raise BudgetExceededError(tree.total_leaves, budget)

    maps = substeps(scheme, model, model.T / M0)
    vectors, weights = tree.branches()
    split = _split_depth(tree)
    log.debug(
        f"enumerating {tree.total_leaves} leaves ({tree.total_nodes} nodes), "
        f"DFS over the top {split} draws"
    )

    q, p = model.initial_state(1)
    roots = list(_roots(maps, vectors, weights, (q, p), 1.0, 0, split))
    nodes_above = sum(tree.branching**k for k in range(1, split + 1))

    def evaluate(root):
        root_q, root_p, root_prob = root
        return _expand(maps, vectors, weights, qoi, root_q, root_p, root_prob, split, tree.depth)

    if threads > 1 and len(roots) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(evaluate, roots))
    else:
        parts = [evaluate(root) for root in roots]

    value = math.fsum(part[0] for part in parts)
    mass = math.fsum(part[1] for part in parts)
    leaves = sum(part[2] for part in parts)
    nodes = nodes_above + sum(part[3] for part in parts)
    if abs(mass - 1.0) > PROBABILITY_TOL:
        log.warning(f"leaf probabilities sum to {mass!r}")
    log.info(f"exact coarse level: {value:.12g} from {leaves} leaves, {nodes} nodes")
    return ExactResult(value=value, leaves=leaves, nodes=nodes, probability_mass=mass, plan=tree)


def exact_expectation(
    model: LangevinModel,
    scheme: Scheme,
    qoi: QoI,
    M0: int,
    dist: DistributionKind,
    budget: int = DEFAULT_BUDGET,
) -> float:
    """Exact expectation of phi(X_M0) under the discrete increment law."""
    return enumerate_tree(model, scheme, qoi, M0, dist, budget).value


def naive_expectation(model: LangevinModel, scheme: Scheme, qoi: QoI, M0: int, dist: DistributionKind) -> float:
    """Reference sum over every increment sequence, each path simulated from scratch.

    Only meant for small trees; costs leaves * M0 steps.
    """
    scheme = Scheme(scheme)
    tree = plan(scheme, dist, M0, model.dim)
    vectors, weights = tree.branches()
    terms: List[float] = []
    for sequence in itertools.product(range(len(weights)), repeat=tree.depth):
        draws = vectors[list(sequence)].reshape(1, M0, tree.draws_per_step, model.dim)
        prob = 1.0
        for index in sequence:
            prob = prob * weights[index]
        q, p = evolve(scheme, model, M0, draws)
        terms.append(prob * float(qoi(q, p)[0]))
    return math.fsum(terms)
