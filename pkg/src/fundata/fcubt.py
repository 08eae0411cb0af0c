"""Functional clustering with unsupervised binary trees.

A node fits a multivariate FPCA to its members, selects the number of
mixture components on the scores by BIC and, when more than one component
is preferred, splits its members with the two-component mixture. Leaves
that ended up apart but belong together are merged afterwards by ``join``.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass, field
from itertools import combinations
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from .core import MultivariateFD, as_multivariate
from .fpca import MfpcaModel, mfpca_fit
from .gmm import GmmModel, gmm_select_k

TREE_FORMAT = "fundata-fcubt-tree"
TREE_VERSION = 1

NodeId = Tuple[int, int]


@dataclass
class FcubtConfig:
    """Growing parameters.

    ``n_comp`` is passed to every node's MFPCA (proportion or count per
    component). ``seed`` fixes the mixture initializations; each node draws
    from its own stream keyed by its id.
    """

    n_comp: Union[float, int, List] = 0.95
    min_size: int = 10
    k_max: int = 5
    method: str = "NumInt"
    seed: Optional[int] = 0
    restarts: int = 1

    def __post_init__(self):
        if self.min_size < 1:
            raise ValueError("min_size must be at least 1")
        if self.k_max < 2:
            raise ValueError("k_max must be at least 2")


@dataclass
class Node:
    depth: int
    index: int
    members: np.ndarray
    mfpca: Optional[MfpcaModel] = None
    scores: Optional[np.ndarray] = None
    gmm: Optional[GmmModel] = None
    k_hat: Optional[int] = None
    bics: Dict[int, float] = field(default_factory=dict)
    children: List["Node"] = field(default_factory=list)
    label: Optional[int] = None
    warning: Optional[str] = None

    @property
    def id(self) -> NodeId:
        return (self.depth, self.index)

    @property
    def is_terminal(self) -> bool:
        return not self.children

    @property
    def n_members(self) -> int:
        return int(self.members.size)

    def child_ids(self) -> Tuple[NodeId, NodeId]:
        return (self.depth + 1, 2 * self.index), (self.depth + 1, 2 * self.index + 1)

    def walk(self):
        """Nodes in depth-first order, left child first."""
        yield self
        for c in self.children:
            yield from c.walk()


class FcubtTree:
    """A grown tree; ``labels`` holds the leaf labels or, after ``join``,
    the merged labels of the training observations."""

    def __init__(self, root: Node, config: FcubtConfig, n_obs: int):
        self.root = root
        self.config = config
        self.n_obs = n_obs
        self.leaf_labels: Dict[NodeId, int] = {}
        for leaf in self.leaves:
            self.leaf_labels[leaf.id] = leaf.label
        self.joined = False
        self.label_map: Dict[NodeId, int] = dict(self.leaf_labels)

    @property
    def nodes(self) -> List[Node]:
        return list(self.root.walk())

    @property
    def leaves(self) -> List[Node]:
        return [n for n in self.root.walk() if n.is_terminal]

    @property
    def n_classes(self) -> int:
        return len(set(self.label_map.values()))

    @property
    def labels(self) -> np.ndarray:
        out = np.empty(self.n_obs, dtype=int)
        for leaf in self.leaves:
            out[leaf.members] = self.label_map[leaf.id]
        return out

    @property
    def warnings(self) -> List[str]:
        return [n.warning for n in self.nodes if n.warning]

    def join(self, data, n_comp=None) -> np.ndarray:
        return join(self, data, n_comp)

    def predict(self, data) -> np.ndarray:
        return predict(self, data)

    def predict_proba(self, data) -> np.ndarray:
        return predict_proba(self, data)

    def export(self, fmt: str = "json") -> str:
        return export_tree(self, fmt)


def _node_seed(seed, node_id) -> np.random.SeedSequence:
    return np.random.SeedSequence(seed, spawn_key=tuple(node_id))


def _fit_scores(data: MultivariateFD, members, config: FcubtConfig):
    model = mfpca_fit(data.take(members), config.n_comp, method=config.method)
    return model, model.scores


def _split(node: Node, data: MultivariateFD, config: FcubtConfig) -> None:
    if node.n_members < max(config.min_size, 2):
        return
    try:
        node.mfpca, node.scores = _fit_scores(data, node.members, config)
    except (ValueError, np.linalg.LinAlgError, RuntimeError) as err:
        node.warning = f"node {node.id}: MFPCA failed ({err}); kept as a leaf"
        warnings.warn(node.warning, RuntimeWarning, stacklevel=2)
        return
    k_hat, models = gmm_select_k(
        node.scores, config.k_max, seed=_node_seed(config.seed, node.id), restarts=config.restarts
    )
    node.k_hat = k_hat
    node.bics = {k: float(m.bic) for k, m in models.items()}
    if k_hat == 1 or 2 not in models:
        return
    assign = models[2].predict(node.scores)
    left, right = node.members[assign == 0], node.members[assign == 1]
    if min(left.size, right.size) < config.min_size:
        return
    node.gmm = models[2]
    (dl, jl), (dr, jr) = node.child_ids()
    node.children = [Node(dl, jl, left), Node(dr, jr, right)]
    for child in node.children:
        _split(child, data, config)


def grow(data, config: Optional[FcubtConfig] = None) -> FcubtTree:
    """Grow the maximal tree on ``data`` (DenseFD, IrregularFD or MultivariateFD)."""
    config = config or FcubtConfig()
    data = as_multivariate(data)
    root = Node(0, 0, np.arange(data.n_obs))
    _split(root, data, config)
    for label, leaf in enumerate(n for n in root.walk() if n.is_terminal):
        leaf.label = label
    return FcubtTree(root, config, data.n_obs)


def join(tree: FcubtTree, data, n_comp=None) -> np.ndarray:
    """Merge leaves whose union is best described by a single Gaussian.

    Two groups of leaves are linked when the BIC-selected number of
    components on the scores of a fresh MFPCA of their union is one. The
    link with the largest one-component BIC is merged first (ties go to the
    lexicographically smallest pair of leaf ids), links are recomputed and
    the procedure stops when no link is left or a single group remains.
    Returns the new training labels.
    """
    data = as_multivariate(data)
    if data.n_obs != tree.n_obs:
        raise ValueError(f"tree was grown on {tree.n_obs} observations, got {data.n_obs}")
    config = tree.config
    if n_comp is not None:
        config = FcubtConfig(**{**asdict(config), "n_comp": n_comp})
    groups: List[Tuple[NodeId, ...]] = [(leaf.id,) for leaf in tree.leaves]
    members = {leaf.id: leaf.members for leaf in tree.leaves}
    cache: Dict[Tuple, Optional[float]] = {}

    def edge(a, b) -> Optional[float]:
        key = (a, b)
        if key not in cache:
            union = np.sort(np.concatenate([members[i] for i in a + b]))
            cache[key] = None
            try:
                _, scores = _fit_scores(data, union, config)
            except (ValueError, np.linalg.LinAlgError, RuntimeError):
                return None
            k_hat, models = gmm_select_k(
                scores, config.k_max, seed=_node_seed(config.seed, a[0] + b[0]),
                restarts=config.restarts,
            )
            if k_hat == 1:
                cache[key] = float(models[1].bic)
        return cache[key]

    while len(groups) > 1:
        best = None
        for a, b in combinations(sorted(groups), 2):
            bic = edge(a, b)
            if bic is not None and (best is None or bic > best[0]):
                best = (bic, a, b)
        if best is None:
            break
        _, a, b = best
        groups.remove(a)
        groups.remove(b)
        groups.append(tuple(sorted(a + b)))
    # classes numbered by their leftmost leaf
    order = {leaf.id: tree.leaf_labels[leaf.id] for leaf in tree.leaves}
    groups.sort(key=lambda g: min(order[i] for i in g))
    tree.label_map = {i: label for label, g in enumerate(groups) for i in g}
    tree.joined = True
    return tree.labels


def _check_data(tree: FcubtTree, data) -> MultivariateFD:
    data = as_multivariate(data)
    if tree.root.mfpca is not None and len(data) != len(tree.root.mfpca.components):
        raise ValueError("data components do not match the tree")
    return data


def predict(tree: FcubtTree, data) -> np.ndarray:
    """Route each observation down the tree by the node mixtures' argmax."""
    data = _check_data(tree, data)
    out = np.empty(data.n_obs, dtype=int)

    def route(node: Node, idx: np.ndarray):
        if idx.size == 0:
            return
        if node.is_terminal:
            out[idx] = tree.label_map[node.id]
            return
        scores = node.mfpca.transform(data.take(idx))
        side = node.gmm.predict(scores)
        route(node.children[0], idx[side == 0])
        route(node.children[1], idx[side == 1])

    route(tree.root, np.arange(data.n_obs))
    return out


def predict_proba(tree: FcubtTree, data) -> np.ndarray:
    """Class probabilities: products of the node posteriors along each path,
    summed over the leaves of a class."""
    data = _check_data(tree, data)
    out = np.zeros((data.n_obs, tree.n_classes))

    def descend(node: Node, weight: np.ndarray):
        if node.is_terminal:
            out[:, tree.label_map[node.id]] += weight
            return
        post = node.gmm.predict_proba(node.mfpca.transform(data))
        descend(node.children[0], weight * post[:, 0])
        descend(node.children[1], weight * post[:, 1])

    descend(tree.root, np.ones(data.n_obs))
    return out


def _node_doc(node: Node, tree: FcubtTree) -> dict:
    return {
        "id": list(node.id),
        "n_members": node.n_members,
        "members": node.members.tolist(),
        "k_hat": node.k_hat,
        "terminal": node.is_terminal,
        "label": tree.label_map.get(node.id) if node.is_terminal else None,
    }


def export_tree(tree: FcubtTree, fmt: str = "json") -> str:
    """Tree structure as JSON (round-trips through ``import_tree``) or dot."""
    nodes = tree.nodes
    edges = [(n.id, c.id) for n in nodes for c in n.children]
    if fmt == "json":
        doc = {
            "format": TREE_FORMAT,
            "version": TREE_VERSION,
            "config": asdict(tree.config),
            "n_obs": tree.n_obs,
            "joined": tree.joined,
            "nodes": [_node_doc(n, tree) for n in nodes],
            "edges": [[list(a), list(b)] for a, b in edges],
        }
        return json.dumps(doc, indent=1) + "\n"
    if fmt == "dot":
        lines = ["digraph fcubt {", "  node [shape=box];"]
        for n in nodes:
            text = f"({n.depth},{n.index})\\nn={n.n_members}"
            if n.k_hat is not None:
                text += f"\\nK={n.k_hat}"
            if n.is_terminal:
                text += f"\\nlabel={tree.label_map[n.id]}"
            lines.append(f'  "{n.depth},{n.index}" [label="{text}"];')
        for a, b in edges:
            lines.append(f'  "{a[0]},{a[1]}" -> "{b[0]},{b[1]}";')
        lines.append("}")
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown tree format {fmt!r}; expected 'json' or 'dot'")


def import_tree(text: str) -> FcubtTree:
    """Rebuild the structure of an exported tree (without fitted models)."""
    doc = json.loads(text)
    if doc.get("format") != TREE_FORMAT or doc.get("version") != TREE_VERSION:
        raise ValueError("not a serialized fCUBT tree")
    by_id = {}
    for d in doc["nodes"]:
        node = Node(d["id"][0], d["id"][1], np.array(d["members"], dtype=int), k_hat=d["k_hat"])
        node.label = d["label"]
        by_id[tuple(d["id"])] = node
    for a, b in doc["edges"]:
        by_id[tuple(a)].children.append(by_id[tuple(b)])
    tree = FcubtTree(by_id[(0, 0)], FcubtConfig(**doc["config"]), doc["n_obs"])
    tree.label_map = {nid: n.label for nid, n in by_id.items() if n.is_terminal}
    # leaf order labels are not stored separately once joined
    tree.leaf_labels = {leaf.id: i for i, leaf in enumerate(tree.leaves)}
    tree.joined = doc["joined"]
    return tree
