"""In-process simulation of bus-to-bus messaging over the power lines.

Every quantity a bus needs from another bus is posted to the network, which
routes it along a shortest path of physical lines.  Each line traversal is a
separate one-hop :class:`Message`; intermediate buses relay.  Within a
round, everything posted for the same ``(src, dst, kind)`` is bundled into a
single message per hop.
"""

from __future__ import annotations

import enum
from collections import Counter, deque
from dataclasses import dataclass, field

__all__ = ["MessageKind", "Message", "SimNetwork", "LocalTransport"]


class MessageKind(str, enum.Enum):
    ALLOCATION = "allocation"
    MULTIPLIER = "multiplier"
    PRICE = "price"
    SLACK = "slack"
    CASE_DATA = "case_data"


@dataclass(frozen=True)
class Message:
    kind: MessageKind
    src: int
    dst: int
    payload: tuple
    hops: int = 1


@dataclass
class SimNetwork:
    """Store-and-forward network on the line graph (0-based buses)."""

    adjacency: list
    keep_log: bool = False
    counts: Counter = field(default_factory=Counter)
    hop_histogram: Counter = field(default_factory=Counter)
    log: list = field(default_factory=list)

    def __post_init__(self):
        self.adjacency = [set(a) for a in self.adjacency]
        self._paths = {}
        self._outbox = {}
        self._inbox = {}

    def route(self, src: int, dst: int) -> list:
        """Shortest path ``[src, ..., dst]``; neighbours explored in index order."""
        key = (src, dst)
        if key not in self._paths:
            prev = {src: None}
            q = deque([src])
            while q and dst not in prev:
                v = q.popleft()
                for w in sorted(self.adjacency[v]):
                    if w not in prev:
                        prev[w] = v
                        q.append(w)
            if dst not in prev:
                raise ValueError(f"bus {dst} unreachable from bus {src}")
            path = [dst]
            while path[-1] != src:
                path.append(prev[path[-1]])
            self._paths[key] = path[::-1]
        return self._paths[key]

    def post(self, src: int, dst: int, kind: MessageKind, key, value) -> None:
        if src == dst:
            self._inbox[(dst, kind, key)] = value
            return
        self._outbox.setdefault((src, dst, kind), []).append((key, value))

    def flush(self) -> int:
        """Deliver everything posted this round; returns the number of hop messages."""
        sent = 0
        for (src, dst, kind), items in self._outbox.items():
            payload = tuple(items)
            path = self.route(src, dst)
            for a, b in zip(path[:-1], path[1:]):
                msg = Message(kind, a, b, payload, hops=1)
                if b not in self.adjacency[a]:
                    raise AssertionError(f"message {a}->{b} does not follow a line")
                self.counts[kind.value] += 1
                self.hop_histogram[msg.hops] += 1
                if self.keep_log:
                    self.log.append(msg)
                sent += 1
            for key, value in items:
                self._inbox[(dst, kind, key)] = value
        self._outbox.clear()
        return sent

    def take(self, bus: int, kind: MessageKind, key):
        return self._inbox.pop((bus, kind, key))

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def one_hop_fraction(self) -> float:
        total = sum(self.hop_histogram.values())
        return 1.0 if total == 0 else self.hop_histogram[1] / total


class LocalTransport:
    """Stand-in for :class:`SimNetwork` when every agent runs on one node."""

    def __init__(self):
        self._box = {}
        self.counts = Counter()
        self.hop_histogram = Counter()

    def post(self, src, dst, kind, key, value):
        self._box[(dst, kind, key)] = value

    def flush(self):
        return 0

    def take(self, bus, kind, key):
        return self._box.pop((bus, kind, key))

    @property
    def total(self) -> int:
        return 0

    def one_hop_fraction(self) -> float:
        return 1.0
