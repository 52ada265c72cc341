"""Disjoint-set forest with path compression and union by rank."""

from __future__ import annotations

from typing import Hashable, Iterable


class UnionFind:
    """Disjoint sets over arbitrary hashable items.

    Items are created lazily on first ``find``. Representatives are stable
    in the sense that ``groups()`` returns members in insertion order and
    groups ordered by their first-inserted member, so downstream numbering
    is deterministic.

    >>> uf = UnionFind([1, 2, 3, 4])
    >>> uf.union(1, 2); uf.union(3, 2)
    True
    True
    >>> uf.groups()
    [[1, 2, 3], [4]]
    """

    def __init__(self, items: Iterable[Hashable] = ()):
        self.parent: dict = {}
        self.rank: dict = {}
        for item in items:
            self.add(item)

    def add(self, x) -> None:
        if x not in self.parent:
            self.parent[x] = x
            self.rank[x] = 0

    def find(self, x):
        self.add(x)
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a, b) -> bool:
        """Merge the sets of ``a`` and ``b``; False if already joined."""
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        if self.rank[ra] < self.rank[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        if self.rank[ra] == self.rank[rb]:
            self.rank[ra] += 1
        return True

    def connected(self, a, b) -> bool:
        return self.find(a) == self.find(b)

    def groups(self) -> list[list]:
        by_root: dict = {}
        for x in self.parent:
            by_root.setdefault(self.find(x), []).append(x)
        return list(by_root.values())

    def __len__(self) -> int:
        return len(self.parent)
