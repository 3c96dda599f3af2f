"""Causal diagrams, causal path enumeration and identification of path-specific effects.

Latent confounding is encoded with bidirected edges. A path-specific effect is
declared by listing the directed treatment-to-outcome paths along which the
treatment takes its active value; every other path carries the baseline value.
"""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

from .exceptions import CycleError, GraphError

Path = tuple


class Scale(str, Enum):
    MEAN_DIFFERENCE = "mean_difference"
    ODDS_RATIO = "odds_ratio"


class Strategy(str, Enum):
    ADJUSTMENT = "adjustment"
    MEDIATION_FORMULA = "mediation_formula"
    EDGE_G_FORMULA = "edge_g_formula"
    GENERAL_PSE_PRODUCT = "general_pse_product"


@dataclass(frozen=True)
class CausalGraph:
    """Acyclic directed mixed graph over named vertices.

    Construction normalizes the edge lists but does not validate them; call
    :func:`validate_graph` (every public operation here does).
    """

    vertices: tuple
    directed_edges: tuple = ()
    bidirected_edges: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "vertices", tuple(self.vertices))
        object.__setattr__(self, "directed_edges", tuple(tuple(e) for e in self.directed_edges))
        object.__setattr__(self, "bidirected_edges", tuple(tuple(e) for e in self.bidirected_edges))

    @classmethod
    def from_dict(cls, obj: dict) -> "CausalGraph":
        graph = cls(obj["vertices"], obj.get("edges", ()), obj.get("bidirected", ()))
        validate_graph(graph)
        return graph

    def to_dict(self) -> dict:
        return {
            "vertices": list(self.vertices),
            "edges": [list(e) for e in self.directed_edges],
            "bidirected": [list(e) for e in self.bidirected_edges],
        }

    def children(self, v) -> list:
        return sorted(h for t, h in self.directed_edges if t == v)

    def parents(self, v) -> list:
        return sorted(t for t, h in self.directed_edges if h == v)

    def descendants(self, v) -> set:
        seen, stack = set(), [v]
        while stack:
            for c in self.children(stack.pop()):
                if c not in seen:
                    seen.add(c)
                    stack.append(c)
        return seen

    def ancestors(self, v) -> set:
        seen, stack = set(), [v]
        while stack:
            for p in self.parents(stack.pop()):
                if p not in seen:
                    seen.add(p)
                    stack.append(p)
        return seen

    def topological_order(self) -> list:
        """Kahn's algorithm; ties broken by declaration order."""
        indeg = {v: 0 for v in self.vertices}
        for _, h in self.directed_edges:
            indeg[h] += 1
        rank = {v: i for i, v in enumerate(self.vertices)}
        ready = sorted((v for v in self.vertices if indeg[v] == 0), key=rank.get)
        order = []
        while ready:
            v = ready.pop(0)
            order.append(v)
            for c in self.children(v):
                indeg[c] -= 1
                if indeg[c] == 0:
                    ready.append(c)
            ready.sort(key=rank.get)
        if len(order) != len(self.vertices):
            raise CycleError(_find_cycle(self))
        return order

    def districts(self, within: Iterable | None = None) -> list:
        """Bidirected-connected components of the subgraph induced on ``within``."""
        keep = set(self.vertices if within is None else within)
        nbrs = defaultdict(set)
        for u, v in self.bidirected_edges:
            if u in keep and v in keep:
                nbrs[u].add(v)
                nbrs[v].add(u)
        seen, out = set(), []
        for v in sorted(keep, key=str):
            if v in seen:
                continue
            comp, stack = {v}, [v]
            while stack:
                for w in nbrs[stack.pop()]:
                    if w not in comp:
                        comp.add(w)
                        stack.append(w)
            seen |= comp
            out.append(frozenset(comp))
        return out


def _find_cycle(graph: CausalGraph) -> list:
    color = {v: 0 for v in graph.vertices}
    trail = []

    def visit(v):
        color[v] = 1
        trail.append(v)
        for c in graph.children(v):
            if color[c] == 1:
                return trail[trail.index(c):] + [c]
            if color[c] == 0:
                found = visit(c)
                if found:
                    return found
        color[v] = 2
        trail.pop()
        return None

    for v in graph.vertices:
        if color[v] == 0:
            found = visit(v)
            if found:
                return found
    return []


def validate_graph(graph: CausalGraph) -> None:
    """Raise :class:`GraphError` unless ``graph`` is a well-formed ADMG."""
    names = set(graph.vertices)
    if len(names) != len(graph.vertices):
        raise GraphError("duplicate vertex names")
    seen_directed = set()
    for edge in graph.directed_edges:
        if len(edge) != 2:
            raise GraphError(f"edge {edge!r} must have two endpoints")
        t, h = edge
        for end in edge:
            if end not in names:
                raise GraphError(f"dangling endpoint {end!r} in edge {t!r} -> {h!r}")
        if t == h:
            raise GraphError(f"self-loop on {t!r}")
        if edge in seen_directed:
            raise GraphError(f"duplicate edge {t!r} -> {h!r}")
        seen_directed.add(edge)
    seen_bidirected = set()
    for edge in graph.bidirected_edges:
        if len(edge) != 2:
            raise GraphError(f"bidirected edge {edge!r} must have two endpoints")
        u, v = edge
        for end in edge:
            if end not in names:
                raise GraphError(f"dangling endpoint {end!r} in edge {u!r} <-> {v!r}")
        if u == v:
            raise GraphError(f"bidirected self-loop on {u!r}")
        key = frozenset(edge)
        if key in seen_bidirected:
            raise GraphError(f"duplicate edge {u!r} <-> {v!r}")
        seen_bidirected.add(key)
    graph.topological_order()


def enumerate_causal_paths(graph: CausalGraph, source, target) -> list:
    """All directed paths from ``source`` to ``target``, sorted lexicographically."""
    validate_graph(graph)
    for v in (source, target):
        if v not in graph.vertices:
            raise GraphError(f"unknown vertex {v!r}")
    if source == target:
        return []
    out = []

    def walk(path):
        for c in graph.children(path[-1]):
            if c == target:
                out.append(tuple(path) + (c,))
            else:
                walk(path + [c])

    walk([source])
    return sorted(out, key=lambda p: tuple(map(str, p)))


@dataclass(frozen=True)
class PseSpec:
    """Path-specific contrast E[Y(pi-counterfactual)] - E[Y(baseline)].

    ``disallowed_paths`` are the paths carrying ``active_value``.
    """

    treatment: str
    outcome: str
    active_value: float = 1.0
    baseline_value: float = 0.0
    disallowed_paths: tuple = ()
    scale: Scale = Scale.MEAN_DIFFERENCE

    def __post_init__(self):
        paths = tuple(sorted({tuple(p) for p in self.disallowed_paths}, key=lambda p: tuple(map(str, p))))
        object.__setattr__(self, "disallowed_paths", paths)
        object.__setattr__(self, "scale", Scale(self.scale))
        object.__setattr__(self, "active_value", float(self.active_value))
        object.__setattr__(self, "baseline_value", float(self.baseline_value))

    @classmethod
    def from_dict(cls, obj: dict) -> "PseSpec":
        return cls(
            treatment=obj["treatment"],
            outcome=obj["outcome"],
            active_value=obj.get("active", 1),
            baseline_value=obj.get("baseline", 0),
            disallowed_paths=obj["paths"],
            scale=obj.get("scale", "mean_difference"),
        )

    def to_dict(self) -> dict:
        return {
            "treatment": self.treatment,
            "outcome": self.outcome,
            "active": self.active_value,
            "baseline": self.baseline_value,
            "scale": self.scale.value,
            "paths": [list(p) for p in self.disallowed_paths],
        }

    def with_values(self, active=None, baseline=None) -> "PseSpec":
        return PseSpec(
            self.treatment,
            self.outcome,
            self.active_value if active is None else active,
            self.baseline_value if baseline is None else baseline,
            self.disallowed_paths,
            self.scale,
        )


def validate_pse(graph: CausalGraph, spec: PseSpec) -> None:
    validate_graph(graph)
    for v in (spec.treatment, spec.outcome):
        if v not in graph.vertices:
            raise GraphError(f"unknown vertex {v!r}")
    if spec.active_value == spec.baseline_value:
        raise GraphError("active and baseline values must differ")
    if not spec.disallowed_paths:
        raise GraphError("at least one disallowed path is required")
    edges = set(graph.directed_edges)
    for p in spec.disallowed_paths:
        if len(p) < 2 or p[0] != spec.treatment or p[-1] != spec.outcome:
            raise GraphError(f"path {p!r} must run from {spec.treatment!r} to {spec.outcome!r}")
        for e in zip(p[:-1], p[1:]):
            if e not in edges:
                raise GraphError(f"path {p!r} uses missing edge {e[0]!r} -> {e[1]!r}")


@dataclass(frozen=True)
class IdVerdict:
    status: str
    strategy: Strategy | None = None
    witness: tuple | None = None
    reason: str = ""

    @property
    def identified(self) -> bool:
        return self.status == "identified"

    def to_dict(self) -> dict:
        out = {"status": self.status}
        if self.strategy is not None:
            out["strategy"] = self.strategy.value
        if self.witness is not None:
            out["witness"] = list(self.witness)
            out["reason"] = self.reason
        return out


@dataclass
class _Labeling:
    paths: list
    disallowed: set
    prefix_labels: dict = field(default_factory=dict)

    def witnesses(self) -> set:
        return {p[-1] for p, labels in self.prefix_labels.items() if len(labels) > 1}

    def edge_label(self, treatment, v):
        labels = self.prefix_labels.get((treatment, v))
        if labels is None or len(labels) != 1:
            return None
        return next(iter(labels))


def _label_prefixes(graph: CausalGraph, spec: PseSpec) -> _Labeling:
    paths = enumerate_causal_paths(graph, spec.treatment, spec.outcome)
    lab = _Labeling(paths, set(spec.disallowed_paths))
    for p in paths:
        active = p in lab.disallowed
        # prefixes ending before the outcome, plus the full path for direct-edge labels
        for k in range(2, len(p) + 1):
            lab.prefix_labels.setdefault(p[:k], set()).add(active)
    # full paths end at the outcome; they never make the outcome a witness
    for p in paths:
        lab.prefix_labels[p] = {p in lab.disallowed}
    return lab


def mediators(graph: CausalGraph, treatment, outcome) -> list:
    """Vertices strictly inside some directed treatment-to-outcome path."""
    inside = graph.descendants(treatment) & graph.ancestors(outcome)
    return [v for v in graph.topological_order() if v in inside]


def check_identification(graph: CausalGraph, spec: PseSpec) -> IdVerdict:
    """Decide whether the path-specific effect is identified.

    A recanting witness is a vertex reached by some treatment path prefix whose
    continuations to the outcome are partly disallowed and partly allowed. After
    witnesses, bidirected-connected districts are checked: all members entered
    directly by the treatment must receive the same treatment value. A treatment
    that is itself confounded through a bidirected edge is outside the patterns
    handled here and is reported as not identified.
    """
    validate_pse(graph, spec)
    A, Y = spec.treatment, spec.outcome
    confounded = sorted(
        {v for e in graph.bidirected_edges if A in e for v in e}, key=str
    )
    if confounded:
        return IdVerdict("not_identified", witness=tuple(confounded), reason="unsupported pattern")

    lab = _label_prefixes(graph, spec)
    witnesses = lab.witnesses()
    if witnesses:
        return IdVerdict(
            "not_identified", witness=tuple(sorted(witnesses, key=str)), reason="recanting witness"
        )

    relevant = (graph.ancestors(Y) | {Y}) - {A}
    offending = set()
    for district in graph.districts(relevant):
        labels = {lab.edge_label(A, v) for v in district if (A, v) in lab.prefix_labels}
        if len(labels) > 1:
            offending |= district
    if offending:
        return IdVerdict(
            "not_identified", witness=tuple(sorted(offending, key=str)), reason="recanting district"
        )

    meds = mediators(graph, A, Y)
    if set(lab.paths) <= lab.disallowed:
        strategy = Strategy.ADJUSTMENT
    elif lab.disallowed == {(A, Y)} and len(meds) == 1:
        strategy = Strategy.MEDIATION_FORMULA
    elif len(meds) <= 2:
        strategy = Strategy.EDGE_G_FORMULA
    else:
        strategy = Strategy.GENERAL_PSE_PRODUCT
    return IdVerdict("identified", strategy=strategy)


def treatment_assignment(graph: CausalGraph, spec: PseSpec, *, districts: bool = True) -> dict:
    """Treatment value each vertex's mechanism sees under the path-specific intervention.

    Vertices entered directly by the treatment get the value of that edge;
    with ``districts`` set, other members of the same district inherit it.
    Everything else sees the baseline value. Raises :class:`GraphError` when
    the labeling is impossible (a recanting witness exists).
    """
    validate_pse(graph, spec)
    A, Y = spec.treatment, spec.outcome
    lab = _label_prefixes(graph, spec)
    witnesses = lab.witnesses()
    if witnesses:
        raise GraphError(
            "impossible labeling: recanting witness " + ", ".join(sorted(map(str, witnesses)))
        )
    value = {True: spec.active_value, False: spec.baseline_value}
    out = {v: spec.baseline_value for v in graph.vertices if v != A}
    direct = {}
    for v in graph.children(A):
        label = lab.edge_label(A, v)
        if label is not None:
            direct[v] = value[label]
    out.update(direct)
    if districts:
        relevant = (graph.ancestors(Y) | {Y}) - {A}
        for district in graph.districts(relevant):
            seen = {direct[v] for v in district if v in direct}
            if len(seen) == 1:
                shared = seen.pop()
                for v in district:
                    out[v] = shared
    return out


def relabel(graph: CausalGraph, mapping: dict) -> CausalGraph:
    return CausalGraph(
        [mapping[v] for v in graph.vertices],
        [(mapping[t], mapping[h]) for t, h in graph.directed_edges],
        [(mapping[u], mapping[v]) for u, v in graph.bidirected_edges],
    )


def all_paths_spec(graph: CausalGraph, treatment, outcome, **kwargs) -> PseSpec:
    return PseSpec(treatment, outcome, disallowed_paths=enumerate_causal_paths(graph, treatment, outcome), **kwargs)


def path_str(path: Sequence) -> str:
    return "->".join(map(str, path))
