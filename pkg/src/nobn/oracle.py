"""Brute-force exact inference by full enumeration.

Deliberately unsophisticated: this is the gold standard every search result
is checked against, so simplicity beats speed.  The only concessions are a
free-node cap (2^free instantiations is real money) and compensated
summation, since posteriors here back tolerances down to 1e-9.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Iterator

from .model import Assignment, Network, NetworkError, validate_evidence

__all__ = [
    "DEFAULT_FREE_NODE_CAP",
    "FreeNodeCapError",
    "ImpossibleEvidenceError",
    "ExactResult",
    "enumerate_consistent",
    "exact_inference",
    "instantiations_above",
]

DEFAULT_FREE_NODE_CAP = 24


class FreeNodeCapError(RuntimeError):
    """Too many free nodes to enumerate exhaustively."""

    def __init__(self, free: int, cap: int):
        super().__init__(
            f"{free} free nodes exceed the enumeration cap of {cap} "
            f"(2**{free} instantiations)"
        )
        self.free = free
        self.cap = cap


class ImpossibleEvidenceError(NetworkError):
    """The evidence has probability zero; posteriors are undefined."""


@dataclass(frozen=True)
class ExactResult:
    """Exhaustive-enumeration answer for one evidence set."""

    evidence_probability: float
    posteriors: tuple[float, ...]
    instantiation_count: int


class _Kahan:
    """Neumaier-compensated accumulator."""

    __slots__ = ("s", "c")

    def __init__(self):
        self.s = 0.0
        self.c = 0.0

    def add(self, x: float) -> None:
        t = self.s + x
        if abs(self.s) >= abs(x):
            self.c += (self.s - t) + x
        else:
            self.c += (x - t) + self.s
        self.s = t

    @property
    def value(self) -> float:
        return self.s + self.c


def _enum_values(
    net: Network, evidence: Iterable[tuple[int, bool]], cap: int
) -> Iterator[tuple[list[bool], float]]:
    """Yield (live value list, joint) for every instantiation consistent with
    the evidence, in binary-counting order over the free nodes (id order,
    absent first).  The list is reused between yields; copy to keep it."""
    evidence = tuple(evidence)
    validate_evidence(net, evidence)
    n = len(net.nodes)
    values: list[bool | None] = [None] * n
    for nid, state in evidence:
        values[nid] = state
    free = [i for i in range(n) if values[i] is None]
    if len(free) > cap:
        raise FreeNodeCapError(len(free), cap)

    # trigger[i] = nodes whose factor becomes computable once ids 0..i are set
    trigger: list[list[int]] = [[] for _ in range(n)]
    nodes = net.nodes
    for x in range(n):
        last = max((p for p, _ in nodes[x].links), default=-1)
        trigger[max(x, last)].append(x)

    def factor(x: int) -> float:
        spec = nodes[x]
        if spec.prior is not None:
            return spec.prior if values[x] else 1.0 - spec.prior
        w = 1.0 - spec.leak
        for p, q in spec.links:
            if values[p]:
                w *= 1.0 - q
        return 1.0 - w if values[x] else w

    def rec(i: int, prod: float) -> Iterator[tuple[list[bool], float]]:
        if i == n:
            yield values, prod  # type: ignore[misc]
            return
        if values[i] is None:
            for state in (False, True):
                values[i] = state
                p = prod
                for x in trigger[i]:
                    p *= factor(x)
                yield from rec(i + 1, p)
            values[i] = None
        else:
            for x in trigger[i]:
                prod *= factor(x)
            yield from rec(i + 1, prod)

    return rec(0, 1.0)


def enumerate_consistent(
    net: Network,
    evidence: Iterable[tuple[int, bool]],
    cap: int = DEFAULT_FREE_NODE_CAP,
) -> Iterator[tuple[Assignment, float]]:
    """Every complete assignment agreeing with the evidence, exactly once,
    with its joint probability.  Deterministic order: binary counting over
    the free nodes in id order, absent=0 first."""
    for values, joint in _enum_values(net, evidence, cap):
        yield Assignment._complete(net, values, joint), joint


def exact_inference(
    net: Network,
    evidence: Iterable[tuple[int, bool]],
    cap: int = DEFAULT_FREE_NODE_CAP,
) -> ExactResult:
    """Evidence probability and per-node present-posteriors by exhaustive
    enumeration.  Raises :class:`ImpossibleEvidenceError` on zero mass."""
    n = len(net.nodes)
    total = _Kahan()
    score_s = [0.0] * n
    score_c = [0.0] * n
    count = 0
    for values, joint in _enum_values(net, evidence, cap):
        count += 1
        total.add(joint)
        for i in range(n):
            if values[i]:
                s = score_s[i]
                t = s + joint
                if abs(s) >= joint:
                    score_c[i] += (s - t) + joint
                else:
                    score_c[i] += (joint - t) + s
                score_s[i] = t
    mass = total.value
    if mass <= 0.0:
        raise ImpossibleEvidenceError(
            "evidence has probability zero; posteriors are undefined"
        )
    posteriors = tuple((score_s[i] + score_c[i]) / mass for i in range(n))
    return ExactResult(mass, posteriors, count)


def instantiations_above(
    net: Network,
    evidence: Iterable[tuple[int, bool]],
    epsilon: float,
    cap: int = DEFAULT_FREE_NODE_CAP,
) -> list[tuple[Assignment, float]]:
    """All consistent complete assignments with joint >= epsilon (inclusive),
    in enumeration order.  This is the reference set the search engine must
    reproduce exactly."""
    if epsilon < 0 or not math.isfinite(epsilon):
        raise NetworkError(f"epsilon must be a finite value >= 0, got {epsilon!r}")
    out = []
    for values, joint in _enum_values(net, evidence, cap):
        if joint >= epsilon:
            out.append((Assignment._complete(net, values, joint), joint))
    return out
