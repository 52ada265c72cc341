from hypothesis import given
from hypothesis import strategies as st

from layoutslam.unionfind import UnionFind


class TestUnionFind:
    def test_singletons(self):
        uf = UnionFind([1, 2, 3])
        assert uf.groups() == [[1], [2], [3]]
        assert len(uf) == 3

    def test_union_is_transitive(self):
        uf = UnionFind("abcd")
        uf.union("a", "b")
        uf.union("b", "c")
        assert uf.connected("a", "c")
        assert not uf.connected("a", "d")
        assert uf.groups() == [["a", "b", "c"], ["d"]]

    def test_repeated_union_reports_no_change(self):
        uf = UnionFind([0, 1])
        assert uf.union(0, 1)
        assert not uf.union(1, 0)

    def test_lazy_items(self):
        uf = UnionFind()
        uf.union(5, 7)
        assert uf.connected(7, 5)
        assert uf.groups() == [[5, 7]]

    def test_group_order_follows_insertion(self):
        uf = UnionFind([3, 1, 2, 0])
        uf.union(0, 3)
        assert uf.groups() == [[3, 0], [1], [2]]

    @given(st.integers(1, 30).flatmap(lambda n: st.tuples(st.just(n), st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)), max_size=40))))
    def test_matches_graph_components(self, case):
        n, edges = case
        uf = UnionFind(range(n))
        for a, b in edges:
            uf.union(a, b)
        # reference: label propagation to a fixed point
        label = list(range(n))
        changed = True
        while changed:
            changed = False
            for a, b in edges:
                m = min(label[a], label[b])
                if label[a] != m or label[b] != m:
                    label[a] = label[b] = m
                    changed = True
        expected = {}
        for i in range(n):
            expected.setdefault(label[i], []).append(i)
        assert sorted(map(sorted, uf.groups())) == sorted(expected.values())
