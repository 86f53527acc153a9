"""Class-hierarchy ingestion and shortest-path distances between classes.

Inputs are the WordNet is-a style files: an edge file of
"parent_wnid child_wnid" lines and a mapping file of "class_index wnid"
lines. Distances are undirected tree path lengths computed through the
lowest common ancestor.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigurationError, IngestionError


@dataclass(frozen=True)
class TaxonomyTree:
    parent: dict  # node id -> parent id (root absent)
    depth: dict  # node id -> distance from root
    root: str
    class_to_node: dict  # class index -> node id

    def node_of(self, class_index):
        try:
            return self.class_to_node[int(class_index)]
        except KeyError:
            raise ConfigurationError(
                f"class {class_index} is not in the taxonomy mapping"
            ) from None


def _read_lines(path, what):
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise IngestionError(f"cannot read {what} file {path}: {e}") from e
    out = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        parts = line.split()
        if not parts:
            continue
        if len(parts) != 2:
            raise IngestionError(
                f"{what} file {path} line {lineno}: expected 2 fields, got {line!r}"
            )
        out.append((lineno, parts[0], parts[1]))
    return out


def load_taxonomy(edges_path, mapping_path) -> TaxonomyTree:
    parent = {}
    children_seen = set()
    nodes = set()
    for lineno, parent_id, child_id in _read_lines(edges_path, "edge"):
        if child_id in children_seen:
            raise IngestionError(
                f"edge file {edges_path} line {lineno}: node {child_id} has two parents"
            )
        if parent_id == child_id:
            raise IngestionError(
                f"edge file {edges_path} line {lineno}: self-edge on {child_id}"
            )
        children_seen.add(child_id)
        parent[child_id] = parent_id
        nodes.add(parent_id)
        nodes.add(child_id)
    if not nodes:
        raise IngestionError(f"edge file {edges_path} is empty")

    roots = sorted(nodes - children_seen)
    if len(roots) != 1:
        raise IngestionError(
            f"edge file {edges_path} must have exactly one root, found {roots}"
        )
    root = roots[0]

    # depth assignment doubles as the cycle check: a parent chain that never
    # reaches the root is a cycle
    depth = {root: 0}
    for node in nodes:
        chain = []
        cur = node
        while cur not in depth:
            chain.append(cur)
            cur = parent.get(cur)
            if cur is None or len(chain) > len(nodes):
                raise IngestionError(
                    f"edge file {edges_path}: cycle or dangling chain at {node}"
                )
        d = depth[cur]
        for hop in reversed(chain):
            d += 1
            depth[hop] = d

    class_to_node = {}
    for lineno, idx_text, wnid in _read_lines(mapping_path, "mapping"):
        try:
            idx = int(idx_text)
        except ValueError:
            raise IngestionError(
                f"mapping file {mapping_path} line {lineno}: bad class index {idx_text!r}"
            ) from None
        if idx in class_to_node:
            raise IngestionError(
                f"mapping file {mapping_path} line {lineno}: class {idx} mapped twice"
            )
        if wnid not in nodes:
            raise IngestionError(
                f"mapping file {mapping_path} line {lineno}: unknown node {wnid}"
            )
        class_to_node[idx] = wnid
    if not class_to_node:
        raise IngestionError(f"mapping file {mapping_path} is empty")
    return TaxonomyTree(parent=parent, depth=depth, root=root, class_to_node=class_to_node)


def _lca_depth(tree, a, b):
    da, db = tree.depth[a], tree.depth[b]
    while da > db:
        a = tree.parent[a]
        da -= 1
    while db > da:
        b = tree.parent[b]
        db -= 1
    while a != b:
        a = tree.parent[a]
        b = tree.parent[b]
        da -= 1
    return da


def node_distance(tree, node_a, node_b) -> int:
    return tree.depth[node_a] + tree.depth[node_b] - 2 * _lca_depth(tree, node_a, node_b)


def shortest_path(tree, class_a, class_b) -> int:
    """Undirected tree distance between two mapped classes."""
    return node_distance(tree, tree.node_of(class_a), tree.node_of(class_b))


def observed_diameter(tree) -> int:
    """Largest pairwise distance among mapped classes.

    Double sweep: the farthest mapped node from any mapped start is an
    endpoint of a longest mapped-pair path (valid for tree metrics).
    """
    nodes = sorted(set(tree.class_to_node.values()))
    if len(nodes) < 2:
        return 0
    start = nodes[0]
    u = max(nodes, key=lambda x: (node_distance(tree, start, x), x))
    return max(node_distance(tree, u, x) for x in nodes)
