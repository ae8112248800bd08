import pytest

from cliqueopf.network import LocalTransport, MessageKind, SimNetwork


def _path(n):
    adj = [set() for _ in range(n)]
    for k in range(n - 1):
        adj[k].add(k + 1)
        adj[k + 1].add(k)
    return adj


def test_route_shortest_path():
    net = SimNetwork(_path(4))
    assert net.route(0, 3) == [0, 1, 2, 3]
    assert net.route(2, 0) == [2, 1, 0]


def test_relay_counts_one_message_per_hop():
    net = SimNetwork(_path(4), keep_log=True)
    net.post(0, 3, MessageKind.PRICE, "a", 1.5)
    assert net.flush() == 3
    assert net.take(3, MessageKind.PRICE, "a") == 1.5
    assert [(m.src, m.dst) for m in net.log] == [(0, 1), (1, 2), (2, 3)]
    assert all(m.hops == 1 for m in net.log)
    assert net.one_hop_fraction() == 1.0
    assert net.counts["price"] == 3 and net.total == 3


def test_bundling_same_round():
    net = SimNetwork(_path(2))
    net.post(0, 1, MessageKind.SLACK, "x", 1.0)
    net.post(0, 1, MessageKind.SLACK, "y", 2.0)
    net.post(0, 1, MessageKind.PRICE, "x", 3.0)
    assert net.flush() == 2
    assert net.take(1, MessageKind.SLACK, "y") == 2.0
    assert net.take(1, MessageKind.PRICE, "x") == 3.0


def test_local_delivery_is_free():
    net = SimNetwork(_path(3))
    net.post(1, 1, MessageKind.ALLOCATION, "k", 0.5)
    assert net.flush() == 0
    assert net.take(1, MessageKind.ALLOCATION, "k") == 0.5
    assert net.total == 0 and net.one_hop_fraction() == 1.0


def test_unreachable():
    net = SimNetwork([{1}, {0}, set()])
    with pytest.raises(ValueError, match="unreachable"):
        net.route(0, 2)


def test_take_missing_raises():
    with pytest.raises(KeyError):
        SimNetwork(_path(2)).take(0, MessageKind.PRICE, "z")


def test_local_transport():
    t = LocalTransport()
    t.post(0, 5, MessageKind.MULTIPLIER, "k", 2.0)
    assert t.flush() == 0
    assert t.take(5, MessageKind.MULTIPLIER, "k") == 2.0
    assert t.total == 0 and t.one_hop_fraction() == 1.0
