"""Generate the bundled 1000-class hierarchy files.

Produces src/pixcause/data/taxonomy_edges.txt and taxonomy_class_map.txt:
a deterministic is-a tree with wnid-style node ids, maximum node depth 12,
and two mapped classes at distance exactly 24 (so the mapped diameter is 24).
Swapping in real WordNet/ImageNet files is a drop-in replacement since the
formats match ("parent child" edges, "class_index wnid" mapping).

Run from the repository root:  python scripts/make_taxonomy.py
"""

from pathlib import Path

import numpy as np

SEED = 20260814
N_CLASSES = 1000
MAX_DEPTH = 12

OUT_DIR = Path(__file__).resolve().parent.parent / "src" / "pixcause" / "data"


def main():
    rng = np.random.default_rng(SEED)
    counter = 0

    def new_id():
        nonlocal counter
        counter += 1
        return f"n{counter:08d}"

    edges = []
    depth = {}

    root = new_id()
    depth[root] = 0

    # two disjoint chains to depth 12; their tips realize distance 24
    chain_tips = []
    for _ in range(2):
        cur = root
        for _ in range(MAX_DEPTH):
            child = new_id()
            edges.append((cur, child))
            depth[child] = depth[cur] + 1
            cur = child
        chain_tips.append(cur)

    # internal scaffolding at depths 1..8
    internals = [root]
    for _ in range(260):
        parent = internals[int(rng.integers(len(internals)))]
        if depth[parent] >= 8:
            parent = root
        node = new_id()
        edges.append((parent, node))
        depth[node] = depth[parent] + 1
        internals.append(node)

    # class leaves hang off the scaffolding, never deeper than MAX_DEPTH
    leaves = list(chain_tips)
    while len(leaves) < N_CLASSES:
        parent = internals[int(rng.integers(len(internals)))]
        leaf = new_id()
        edges.append((parent, leaf))
        depth[leaf] = depth[parent] + 1
        leaves.append(leaf)

    order = rng.permutation(N_CLASSES)
    mapping = [(idx, leaves[int(pos)]) for idx, pos in enumerate(order)]

    OUT_DIR.mkdir(parents=True, exist_ok=True)
    with open(OUT_DIR / "taxonomy_edges.txt", "w") as f:
        for parent, child in edges:
            f.write(f"{parent} {child}\n")
    with open(OUT_DIR / "taxonomy_class_map.txt", "w") as f:
        for idx, wnid in mapping:
            f.write(f"{idx} {wnid}\n")

    assert max(depth.values()) == MAX_DEPTH
    tip_a, tip_b = chain_tips
    assert depth[tip_a] + depth[tip_b] == 24
    print(f"wrote {len(edges)} edges, {len(mapping)} class mappings to {OUT_DIR}")
    print(f"max depth {max(depth.values())}, distance(tips) = 24")


if __name__ == "__main__":
    main()
