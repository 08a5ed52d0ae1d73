"""Random embeddings of finite metrics into weighted binary trees.

Two stages:

1. `frt_embed` draws a random hierarchical ball decomposition (uniform point
   permutation + one radius scale drawn uniformly from [1,2)) and returns a
   rooted tree whose leaf set is the point set.  Tree distance is the weight
   of the least common ancestor.  The construction guarantees, with
   probability 1, that tree distance dominates the input metric, that parent
   weights are at least twice child weights, and that the height is
   logarithmic in the aspect ratio; the expected stretch of any pair is
   logarithmic in n.

2. `binarize` turns that tree into a full binary tree while keeping leaf
   ancestry.  Mapped vertices carry twice their original weight; auxiliary
   vertices introduced to break up high-degree vertices decay geometrically
   by the separation factor alpha = 1 + 1/ceil(log2 n).  Children of a
   high-degree vertex are placed at controlled depths inside the auxiliary
   gadget: a child whose weight ratio to its parent is rho may sit at depth
   at most log_alpha(rho), and no auxiliary vertex may sit deeper than
   log_alpha(2) so that every leaf-pair distance stays within [1,2] times its
   pre-binarization value.  A Kraft-sum argument shows such a placement
   always exists for n <= 16; the packer raises an internal error if a
   pathological larger tree cannot be placed.

`sample_hsbt` composes the two and re-checks domination against the original
metric, raising `DominationViolation` (a bug sentinel, not bad input) if the
guarantee ever fails.
"""

from __future__ import annotations

import json
import math
from typing import Sequence

import numpy as np

from .errors import (
    DominationViolation,
    InstanceLoadError,
    InvariantViolation,
    OutOfDomain,
)
from .metric import MetricSpace, stats

__all__ = [
    "Hst",
    "Hsbt",
    "separation_alpha",
    "frt_embed",
    "binarize",
    "sample_hsbt",
    "tree_distance",
    "tree_metric",
    "build_hsbt",
]


def separation_alpha(n: int) -> float:
    """Weight-separation factor used for binarized trees over n points."""
    if n < 2:
        raise OutOfDomain("need at least two points")
    return 1.0 + 1.0 / math.ceil(math.log2(n))


class _Tree:
    """Shared read-only tree plumbing (parent/children/weight arrays)."""

    parent: list[int]
    children: list[list[int]]
    weight: list[float]
    leaf_point: dict[int, str]

    def __len__(self) -> int:
        return len(self.parent)

    @property
    def root(self) -> int:
        return 0

    def is_leaf(self, v: int) -> bool:
        return not self.children[v]

    def leaves(self) -> list[int]:
        return sorted(self.leaf_point)

    def _compute_depth(self) -> list[int]:
        depth = [0] * len(self.parent)
        for v in range(1, len(self.parent)):
            depth[v] = depth[self.parent[v]] + 1
        return depth

    def ancestors(self, v: int) -> list[int]:
        """Proper ancestors of v, nearest first."""
        out = []
        while self.parent[v] >= 0:
            v = self.parent[v]
            out.append(v)
        return out

    def lca(self, x: int, y: int) -> int:
        dx, dy = self.depth[x], self.depth[y]
        while dx > dy:
            x = self.parent[x]
            dx -= 1
        while dy > dx:
            y = self.parent[y]
            dy -= 1
        while x != y:
            x = self.parent[x]
            y = self.parent[y]
        return x

    def tree_distance(self, x: int, y: int) -> float:
        if x == y:
            return 0.0
        return self.weight[self.lca(x, y)]

    def point_distance(self, a: str, b: str) -> float:
        return self.tree_distance(self.point_leaf[a], self.point_leaf[b])

    def subtree(self, v: int) -> list[int]:
        out = [v]
        i = 0
        while i < len(out):
            out.extend(self.children[out[i]])
            i += 1
        return out


class Hst(_Tree):
    """Rooted weighted tree from the ball decomposition (arbitrary degree).

    Internal vertices have at least two children; leaf weights are zero and
    leaves correspond one-to-one with metric points.
    """

    def __init__(self, parent, children, weight, leaf_point):
        self.parent = list(parent)
        self.children = [list(c) for c in children]
        self.weight = [float(w) for w in weight]
        self.leaf_point = dict(leaf_point)
        self.point_leaf = {p: v for v, p in self.leaf_point.items()}
        self.depth = self._compute_depth()
        self.height = max(self.depth)
        for v in range(len(self.parent)):
            if not self.is_leaf(v) and len(self.children[v]) < 2:
                raise InvariantViolation(f"unary internal vertex {v} in Hst")


class Hsbt(_Tree):
    """Full binary tree with geometric weight separation.

    Vertex ids are breadth-first (sorted by depth, then construction order),
    so sorting ids is the canonical deterministic event order.  Leaves carry
    weight 0; every non-root vertex satisfies w(parent) >= alpha * w(v).
    """

    def __init__(self, parent, children, weight, leaf_point, alpha: float):
        self.parent = list(parent)
        self.children = [list(c) for c in children]
        self.weight = [float(w) for w in weight]
        self.leaf_point = dict(leaf_point)
        self.point_leaf = {p: v for v, p in self.leaf_point.items()}
        self.alpha = float(alpha)
        self.depth = self._compute_depth()
        self.height = max(self.depth)
        self.validate()

    def internal_vertices(self) -> list[int]:
        return [v for v in range(len(self.parent)) if not self.is_leaf(v)]

    def validate(self) -> None:
        n_pts = len(self.leaf_point)
        if len(self.point_leaf) != n_pts:
            raise InvariantViolation("duplicate leaf point names")
        for v in range(len(self.parent)):
            kids = self.children[v]
            if len(kids) not in (0, 2):
                raise InvariantViolation(f"vertex {v} has {len(kids)} children")
            if self.is_leaf(v):
                if self.weight[v] != 0.0:
                    raise InvariantViolation(f"leaf {v} has weight {self.weight[v]}")
                if v not in self.leaf_point:
                    raise InvariantViolation(f"leaf {v} has no point label")
            else:
                if self.weight[v] <= 0.0:
                    raise InvariantViolation(f"internal vertex {v} has weight <= 0")
                if v in self.leaf_point:
                    raise InvariantViolation(f"internal vertex {v} labeled as point")
            p = self.parent[v]
            if p >= 0 and self.weight[p] < self.alpha * self.weight[v] * (1 - 1e-12):
                raise InvariantViolation(
                    f"separation violated at {v}: w(parent)={self.weight[p]} < "
                    f"alpha*w(v)={self.alpha * self.weight[v]}"
                )
            if p >= 0 and p >= v:
                raise InvariantViolation("vertex ids are not topologically sorted")

    def to_json(self, path: str) -> None:
        rows = []
        for v in range(len(self.parent)):
            row = {"id": v, "parent": self.parent[v], "weight": self.weight[v]}
            if v in self.leaf_point:
                row["point"] = self.leaf_point[v]
            rows.append(row)
        with open(path, "w") as fh:
            json.dump({"alpha": self.alpha, "vertices": rows}, fh, indent=1)
            fh.write("\n")

    @classmethod
    def from_json(cls, path: str) -> "Hsbt":
        try:
            with open(path) as fh:
                obj = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise InstanceLoadError(f"cannot read tree {path}: {exc}") from exc
        rows = sorted(obj["vertices"], key=lambda r: r["id"])
        parent = [r["parent"] for r in rows]
        weight = [r["weight"] for r in rows]
        children: list[list[int]] = [[] for _ in rows]
        for r in rows:
            if r["parent"] >= 0:
                children[r["parent"]].append(r["id"])
        leaf_point = {r["id"]: r["point"] for r in rows if "point" in r}
        return cls(parent, children, weight, leaf_point, obj["alpha"])


def tree_distance(tree: _Tree, x: int, y: int) -> float:
    """Weight of the least common ancestor of leaves x and y."""
    return tree.tree_distance(x, y)


def tree_metric(tree: _Tree) -> MetricSpace:
    """The tree's leaf points as a metric space under tree distance."""
    points = sorted(tree.point_leaf)
    n = len(points)
    dist = np.zeros((n, n))
    for i, a in enumerate(points):
        for j in range(i + 1, n):
            dist[i, j] = dist[j, i] = tree.point_distance(a, points[j])
    return MetricSpace(points, dist)


# ---------------------------------------------------------------------------
# Stage 1: random hierarchical decomposition
# ---------------------------------------------------------------------------

def frt_embed(space: MetricSpace, rng: np.random.Generator) -> Hst:
    """Sample a dominating tree for `space` (weights in original units)."""
    if space.n < 2:
        raise OutOfDomain("embedding needs at least two points")
    st = stats(space)
    scale = st.d_min
    dist = space.dist / scale
    delta = float(dist.max())

    perm = rng.permutation(space.n)
    beta = 1.0 + float(rng.random())
    top = math.ceil(math.log2(delta)) + 1  # beta * 2^(top-1) >= delta

    # priority[i] = rank of point i in the permutation (lower claims first)
    priority = np.empty(space.n, dtype=int)
    priority[perm] = np.arange(space.n)
    dist_by_rank = dist[perm]  # row r = distances from the rank-r point

    parent: list[int] = [-1]
    children: list[list[int]] = [[]]
    weight: list[float] = [0.0]  # every cluster's weight is set when it splits
    leaf_point: dict[int, str] = {}

    stack: list[tuple[int, np.ndarray, int]] = [(0, np.arange(space.n), top)]
    while stack:
        v, pts, lev = stack.pop()
        lev -= 1
        while True:
            radius = beta * 2.0 ** (lev - 1)
            covered = dist_by_rank[:, pts] <= radius
            owner = np.argmax(covered, axis=0)  # first permutation rank covering
            groups = np.unique(owner)
            if len(groups) > 1:
                break
            lev -= 1  # cluster did not split; try the next finer scale
        # one level up the whole cluster sat in a single ball of radius
        # beta*2^lev, so beta*2^(lev+1) bounds every cross-child distance;
        # weighting by the split scale (not the creation scale) is what keeps
        # the expected stretch logarithmic when a near-pair rides a compressed
        # path many levels down
        weight[v] = beta * 2.0 ** (lev + 1)
        for g in groups:  # ascending owner rank: deterministic child order
            members = pts[owner == g]
            u = len(parent)
            parent.append(v)
            children[v].append(u)
            children.append([])
            weight.append(0.0)
            if len(members) == 1:
                leaf_point[u] = space.points[int(members[0])]
            else:
                stack.append((u, members, lev))

    weight = [w * scale for w in weight]
    return Hst(parent, children, weight, leaf_point)


# ---------------------------------------------------------------------------
# Stage 2: binarization
# ---------------------------------------------------------------------------

def _place_children(entries, alpha: float, aux_cap: int):
    """Assign gadget depths to a vertex's children and return the gadget shape.

    entries: list of (child_key, max_depth).  Returns a nested structure of
    ('aux', left, right) / ('child', key) nodes describing a full binary tree
    in which each child sits at depth <= its max_depth.  Children are placed
    at their depth bound via canonical prefix codes, then single-child
    auxiliary nodes are spliced out, which only decreases depths.
    """
    if len(entries) == 2:
        return ("aux", ("child", entries[0][0]), ("child", entries[1][0]))
    order = sorted(range(len(entries)), key=lambda i: (entries[i][1], i))
    depths = [entries[i][1] for i in order]
    if sum(2.0 ** -d for d in depths) > 1.0 + 1e-12:
        raise InvariantViolation(
            "cannot binarize: child depth constraints overflow the binary tree "
            f"(depths {depths}, alpha {alpha})"
        )
    # canonical prefix codes at the exact target depths
    codes = []
    code = 0
    prev = depths[0]
    for d in depths:
        code <<= d - prev
        codes.append((code, d))
        code += 1
        prev = d

    # materialize the code tree: dict node -> {0: sub, 1: sub} or child marker
    root: dict = {}
    for (code, d), i in zip(codes, order):
        node = root
        for b in range(d - 1, 0, -1):
            node = node.setdefault((code >> b) & 1, {})
            if not isinstance(node, dict):
                raise InvariantViolation("prefix code collision")
        node[code & 1] = ("child", entries[i][0])

    def collapse(node):
        if not isinstance(node, dict):
            return node
        subs = [collapse(node[b]) for b in sorted(node)]
        if len(subs) == 1:
            return subs[0]  # splice single-child auxiliary vertex
        return ("aux", subs[0], subs[1])

    shape = collapse(root)
    if shape[0] != "aux":
        raise InvariantViolation("gadget collapsed to a single child")

    def check_aux_depth(node, d):
        if node[0] == "child":
            return
        if d > aux_cap:
            raise InvariantViolation("auxiliary vertex placed below its depth cap")
        check_aux_depth(node[1], d + 1)
        check_aux_depth(node[2], d + 1)

    check_aux_depth(shape, 0)
    return shape


def binarize(tree: Hst, n: int) -> Hsbt:
    """Full binary version of `tree` with separation alpha = 1+1/ceil(lg n).

    Mapped vertices carry doubled weights; auxiliary vertices decay from
    their parent by the factor alpha.  Leaf-pair distances land in
    [d_H, 2*d_H] where d_H is the distance in the input tree.
    """
    alpha = separation_alpha(n)
    aux_cap = int(math.log(2.0) / math.log(alpha) + 1e-9)  # max aux depth in a gadget

    parent: list[int] = [-1]
    children: list[list[int]] = [[]]
    weight: list[float] = [2.0 * tree.weight[tree.root]]
    leaf_point: dict[int, str] = {}

    def attach(shape, at: int, h_weight: float) -> None:
        # expand a gadget shape below mapped vertex `at` (weight 2*h_weight);
        # push right before left so the LIFO pop keeps children left-to-right
        stack = [(shape[2], at), (shape[1], at)]
        while stack:
            node, up = stack.pop()
            u = len(parent)
            parent.append(up)
            children[up].append(u)
            children.append([])
            if node[0] == "aux":
                weight.append(weight[up] / alpha)
                stack.append((node[2], u))
                stack.append((node[1], u))
            else:
                h_child = node[1]
                if tree.is_leaf(h_child):
                    weight.append(0.0)
                    leaf_point[u] = tree.leaf_point[h_child]
                else:
                    weight.append(2.0 * tree.weight[h_child])
                    emit(h_child, u)

    def emit(h_vertex: int, new_id: int) -> None:
        w_v = tree.weight[h_vertex]
        entries = []
        for c in tree.children[h_vertex]:
            if tree.is_leaf(c):
                entries.append((c, aux_cap + 1))
            else:
                ratio = w_v / tree.weight[c]
                cap = int(math.log(ratio) / math.log(alpha) + 1e-9)
                entries.append((c, max(1, min(cap, aux_cap + 1))))
        shape = _place_children(entries, alpha, aux_cap)
        attach(shape, new_id, w_v)

    emit(tree.root, 0)
    out = _renumber(parent, children, weight, leaf_point, alpha)
    _assert_sandwich(tree, out)
    return out


def _renumber(parent, children, weight, leaf_point, alpha) -> Hsbt:
    """Reorder vertex ids breadth-first so ids sort by (depth, insertion)."""
    order = [0]
    i = 0
    while i < len(order):
        order.extend(children[order[i]])
        i += 1
    new_id = {old: new for new, old in enumerate(order)}
    n = len(parent)
    parent2 = [-1] * n
    children2: list[list[int]] = [[] for _ in range(n)]
    weight2 = [0.0] * n
    for old, new in new_id.items():
        weight2[new] = weight[old]
        if parent[old] >= 0:
            parent2[new] = new_id[parent[old]]
            children2[new_id[parent[old]]].append(new)
    leaf2 = {new_id[v]: p for v, p in leaf_point.items()}
    return Hsbt(parent2, children2, weight2, leaf2, alpha)


def _assert_sandwich(h: Hst, t: Hsbt) -> None:
    """Every leaf pair: d_H <= d_T' <= 2*d_H (exact up to float round-off)."""
    pts = sorted(h.point_leaf)
    for i, a in enumerate(pts):
        for b in pts[i + 1:]:
            dh = h.point_distance(a, b)
            dt = t.point_distance(a, b)
            if not (dh * (1 - 1e-12) <= dt <= 2 * dh * (1 + 1e-12)):
                raise InvariantViolation(
                    f"binarized distance {dt} for ({a},{b}) outside [{dh}, {2 * dh}]"
                )


def sample_hsbt(
    space: MetricSpace, rng: np.random.Generator, verify: bool = True
) -> Hsbt:
    """Sample a dominating binary tree for `space` (embed + binarize)."""
    h = frt_embed(space, rng)
    t = binarize(h, space.n)
    if verify:
        tol = 1e-12 * float(space.dist.max())
        for i, a in enumerate(space.points):
            for b in space.points[i + 1:]:
                if t.point_distance(a, b) + tol < space.dist[i, space.index[b]]:
                    raise DominationViolation(
                        f"tree distance for ({a},{b}) below metric distance"
                    )
    return t


def build_hsbt(
    parent: Sequence[int],
    weight: Sequence[float],
    leaf_points: dict[int, str],
    alpha: float,
) -> Hsbt:
    """Construct a validated Hsbt from explicit parent pointers.

    Intended for prescribed trees (adversarial instances, tests).  Vertex 0
    must be the root; ids are renumbered breadth-first.
    """
    n = len(parent)
    children: list[list[int]] = [[] for _ in range(n)]
    for v, p in enumerate(parent):
        if p >= 0:
            children[p].append(v)
    return _renumber(list(parent), children, list(weight), dict(leaf_points), alpha)
