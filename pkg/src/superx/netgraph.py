"""Network intermediate representation: a DAG of neurons with activation tags.

Hidden neurons compute sigma(sum w_i * z_i + h); the single output node is a
plain affine combination.  Graphs are immutable after construction, evaluate
at arbitrary precision, and serialize to JSON with exact decimal weights so a
round trip is bit-identical.
"""

from __future__ import annotations

import graphlib
import hashlib
import json
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Dict, Iterable, Optional, Sequence, Tuple

import mpmath
from mpmath import mp

from .scalar import (
    ARCSIN,
    DEFAULT_PRECISION,
    Activation,
    BigReal,
    DomainError,
    ScalarLike,
    _sigma3_raw,
    mpf_floor,
    parse_decimal,
)

FORMAT_VERSION = "1"

INPUT = "input"
HIDDEN = "hidden"
OUTPUT = "output"


class CycleError(ValueError):
    """The edge relation is not acyclic."""


class ArityError(ValueError):
    """Input-count mismatch when composing or evaluating graphs."""


class SchemaError(ValueError):
    """Malformed network file."""


class ChecksumError(SchemaError):
    """Network file content does not match its recorded checksum."""


class NodeDomainError(DomainError):
    """An activation input left its domain during evaluation."""

    def __init__(self, node_id: str, message: str):
        super().__init__(f"node {node_id!r}: {message}")
        self.node_id = node_id


@dataclass(frozen=True)
class Edge:
    src: str
    weight: BigReal
    slot: Optional[str] = None


@dataclass(frozen=True)
class NodeSpec:
    id: str
    kind: str  # input | hidden | output
    activation: Optional[Activation] = None
    bias: Optional[BigReal] = None
    in_edges: Tuple[Edge, ...] = ()
    bias_slot: Optional[str] = None
    #: declared bounds of the pre-activation value, required for arcsin nodes
    input_range: Optional[Tuple[BigReal, BigReal]] = None


@dataclass(frozen=True)
class NetGraph:
    nodes: Tuple[NodeSpec, ...]
    input_count: int
    precision: int = DEFAULT_PRECISION
    # derived, filled by __post_init__
    _order: Tuple[str, ...] = field(default=(), compare=False, repr=False)

    def __post_init__(self):
        by_id: Dict[str, NodeSpec] = {}
        for node in self.nodes:
            if node.id in by_id:
                raise SchemaError(f"duplicate node id {node.id!r}")
            by_id[node.id] = node

        inputs = [n for n in self.nodes if n.kind == INPUT]
        outputs = [n for n in self.nodes if n.kind == OUTPUT]
        if len(inputs) != self.input_count:
            raise ArityError(f"expected {self.input_count} input nodes, found {len(inputs)}")
        if len(outputs) != 1:
            raise SchemaError("exactly one output node is required")

        for node in self.nodes:
            if node.kind == INPUT:
                if node.in_edges or node.bias is not None or node.activation is not None:
                    raise SchemaError(f"input node {node.id!r} must have no edges, bias or activation")
            elif node.kind == HIDDEN:
                if node.activation is None:
                    raise SchemaError(f"hidden node {node.id!r} lacks an activation")
            elif node.kind == OUTPUT:
                if node.activation is not None:
                    raise SchemaError("output node applies no activation")
            else:
                raise SchemaError(f"unknown node kind {node.kind!r}")
            for e in node.in_edges:
                if e.src not in by_id:
                    raise SchemaError(f"edge from unknown node {e.src!r}")
                if by_id[e.src].kind == OUTPUT:
                    raise SchemaError("the output node cannot feed other nodes")
            if node.activation is not None and node.activation.kind == ARCSIN:
                if node.input_range is None:
                    raise SchemaError(f"arcsin node {node.id!r} lacks an input-range contract")
                lo, hi = node.input_range
                if lo.value < -1 or hi.value > 1 or lo.value > hi.value:
                    raise SchemaError(f"arcsin node {node.id!r} range must lie inside [-1, 1]")

        graph = {n.id: {e.src for e in n.in_edges} for n in self.nodes}
        try:
            order = tuple(graphlib.TopologicalSorter(graph).static_order())
        except graphlib.CycleError as exc:
            raise CycleError(str(exc)) from exc
        object.__setattr__(self, "_order", order)

    # -- helpers --------------------------------------------------------------
    def node(self, node_id: str) -> NodeSpec:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise KeyError(node_id)

    @property
    def by_id(self) -> Dict[str, NodeSpec]:
        return {n.id: n for n in self.nodes}

    @property
    def input_ids(self) -> Tuple[str, ...]:
        return tuple(n.id for n in self.nodes if n.kind == INPUT)

    @property
    def output_id(self) -> str:
        return next(n.id for n in self.nodes if n.kind == OUTPUT)

    def topological_order(self) -> Tuple[str, ...]:
        return self._order

    def skeleton(self) -> tuple:
        """Weight-free architecture fingerprint: nodes, kinds, activations, edges."""
        return tuple(
            (n.id, n.kind, n.activation.kind if n.activation else None,
             tuple(e.src for e in n.in_edges))
            for n in sorted(self.nodes, key=lambda n: n.id)
        )


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

def evaluate(net: NetGraph, xs: Sequence[BigReal], precision: Optional[int] = None,
             order: Optional[Sequence[str]] = None) -> BigReal:
    """Forward evaluation along a topological order.

    Runs with 32 guard bits and rounds the output to the requested precision
    (default: max of the graph precision and the input precisions).
    """
    if len(xs) != net.input_count:
        raise ArityError(f"expected {net.input_count} inputs, got {len(xs)}")
    prec = precision or max([net.precision] + [x.precision for x in xs])
    work = prec + 32
    snap = mpmath.mpf(2) ** (-(prec - 4))

    by_id = net.by_id
    values: Dict[str, mpmath.mpf] = {}
    with mp.workprec(work):
        # inputs are bound positionally in declaration order
        for input_id, x in zip(net.input_ids, xs):
            values[input_id] = x.value
        for node_id in (order or net.topological_order()):
            node = by_id[node_id]
            if node.kind == INPUT:
                continue
            acc = node.bias.value if node.bias is not None else mpmath.mpf(0)
            for e in node.in_edges:
                acc = acc + e.weight.value * values[e.src]
            if node.kind == OUTPUT:
                values[node_id] = acc
                continue
            values[node_id] = _apply_with_contracts(node, acc, snap)
    with mp.workprec(prec):
        return BigReal(+values[net.output_id], prec)


def _apply_with_contracts(node: NodeSpec, v: mpmath.mpf, snap: mpmath.mpf) -> mpmath.mpf:
    act = node.activation
    if act.kind == ARCSIN:
        lo, hi = node.input_range
        if v < lo.value - snap or v > hi.value + snap:
            raise NodeDomainError(node.id, f"arcsin input {mpmath.nstr(v, 10)} violates "
                                           f"declared range by more than 2^-(P-4)")
        # snap tolerance: values within 2^-(P-4) of the boundary clamp to it
        if v > 1:
            v = mpmath.mpf(1)
        elif v < -1:
            v = mpmath.mpf(-1)
        return mpmath.asin(v)
    if act.kind == "sin":
        return mpmath.sin(v)
    if act.kind == "floor":
        return mpf_floor(v)
    if act.kind == "sigma3":
        return _sigma3_raw(v)
    if act.kind == "exp":
        return mpmath.exp(v)
    if act.kind == "relu":
        return v if v > 0 else mpmath.mpf(0)
    if act.kind == "leaky_relu":
        return v if v >= 0 else act.slope.value * v
    if act.kind == "step":
        return mpmath.mpf(1 if v >= 0 else 0)
    if act.kind == "identity":
        return v
    raise AssertionError(act.kind)


def evaluate_exact(net: NetGraph, xs: Sequence[Fraction]) -> Fraction:
    """Exact rational forward evaluation; only piecewise-linear activations allowed."""
    if len(xs) != net.input_count:
        raise ArityError(f"expected {net.input_count} inputs, got {len(xs)}")
    values: Dict[str, Fraction] = {}
    for input_id, x in zip(net.input_ids, xs):
        values[input_id] = Fraction(x)
    by_id = net.by_id
    for node_id in net.topological_order():
        node = by_id[node_id]
        if node.kind == INPUT:
            continue
        acc = node.bias.as_fraction() if node.bias is not None else Fraction(0)
        for e in node.in_edges:
            acc += e.weight.as_fraction() * values[e.src]
        if node.kind == OUTPUT:
            values[node_id] = acc
        else:
            values[node_id] = node.activation.apply_fraction(acc)
    return values[net.output_id]


# ---------------------------------------------------------------------------
# composition and counting
# ---------------------------------------------------------------------------

def compose(outer: NetGraph, inner: Sequence[NetGraph]) -> NetGraph:
    """Substitute ``inner[i]`` for the i-th input of ``outer``.

    All inner graphs must share one input arity d; the result is a d-input
    graph computing outer(inner_0(x), ..., inner_{k-1}(x)).  Inner output
    nodes are affine and get inlined into their consumers, so the hidden-
    nodes-carry-activations invariant is preserved.
    """
    if len(inner) != outer.input_count:
        raise ArityError(f"outer expects {outer.input_count} inner graphs, got {len(inner)}")
    if not inner:
        return outer
    d = inner[0].input_count
    for g in inner:
        if g.input_count != d:
            raise ArityError("inner graphs disagree on input count")

    precision = max([outer.precision] + [g.precision for g in inner])
    nodes: list[NodeSpec] = [NodeSpec(id=f"in{j}", kind=INPUT) for j in range(d)]

    # inner hidden nodes, with ids prefixed and inputs remapped
    inline: Dict[str, NodeSpec] = {}  # outer input id -> inner output spec (renamed)
    for i, g in enumerate(inner):
        prefix = f"g{i}."
        remap = {inp: f"in{j}" for j, inp in enumerate(g.input_ids)}
        for n in g.nodes:
            if n.kind == INPUT:
                continue
            renamed_edges = tuple(
                Edge(remap.get(e.src, prefix + e.src), e.weight, None) for e in n.in_edges
            )
            spec = replace(n, id=prefix + n.id, in_edges=renamed_edges)
            if n.kind == OUTPUT:
                inline[outer.input_ids[i]] = spec
            else:
                nodes.append(spec)

    zero = BigReal.of(0, precision)
    for n in outer.nodes:
        if n.kind == INPUT:
            continue
        new_edges: list[Edge] = []
        bias = n.bias if n.bias is not None else (zero if n.kind == OUTPUT or n.in_edges else None)
        for e in n.in_edges:
            if e.src in inline:
                out_spec = inline[e.src]
                for inner_e in out_spec.in_edges:
                    new_edges.append(Edge(inner_e.src, e.weight * inner_e.weight, None))
                extra = e.weight * (out_spec.bias if out_spec.bias is not None else zero)
                bias = extra if bias is None else bias + extra
            else:
                new_edges.append(Edge("o." + e.src, e.weight, e.slot))
        nodes.append(replace(n, id="o." + n.id, in_edges=tuple(new_edges), bias=bias))

    return NetGraph(tuple(nodes), input_count=d, precision=precision)


def count(net: NetGraph) -> Tuple[int, int]:
    """(hidden neurons, connections); connections = total in-edges."""
    neurons = sum(1 for n in net.nodes if n.kind == HIDDEN)
    connections = sum(len(n.in_edges) for n in net.nodes)
    return neurons, connections


def reweight(net: NetGraph, assignment: Dict[str, ScalarLike]) -> NetGraph:
    """Return a copy of ``net`` with slot-named weights/biases replaced."""
    missing = dict(assignment)
    nodes = []
    for n in net.nodes:
        edges = []
        for e in n.in_edges:
            if e.slot is not None and e.slot in assignment:
                missing.pop(e.slot, None)
                edges.append(Edge(e.src, BigReal.of(assignment[e.slot], net.precision), e.slot))
            else:
                edges.append(e)
        bias = n.bias
        if n.bias_slot is not None and n.bias_slot in assignment:
            missing.pop(n.bias_slot, None)
            bias = BigReal.of(assignment[n.bias_slot], net.precision)
        nodes.append(replace(n, in_edges=tuple(edges), bias=bias))
    if missing:
        raise KeyError(f"unknown weight slots: {sorted(missing)}")
    return NetGraph(tuple(nodes), net.input_count, net.precision)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def _node_to_dict(n: NodeSpec) -> dict:
    d: dict = {"id": n.id, "kind": n.kind}
    if n.activation is not None:
        d["activation"] = n.activation.token()
    if n.bias is not None:
        d["bias"] = n.bias.to_decimal()
    if n.bias_slot is not None:
        d["bias_slot"] = n.bias_slot
    d["in_edges"] = [
        {"src": e.src, "weight": e.weight.to_decimal(), **({"slot": e.slot} if e.slot else {})}
        for e in n.in_edges
    ]
    if n.input_range is not None:
        d["input_range"] = [n.input_range[0].to_decimal(), n.input_range[1].to_decimal()]
    return d


def _payload(net: NetGraph) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "kind": "netgraph",
        "precision_bits": net.precision,
        "input_count": net.input_count,
        "nodes": [_node_to_dict(n) for n in net.nodes],
    }


def _checksum(payload: dict) -> str:
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def to_json(net: NetGraph) -> str:
    payload = _payload(net)
    payload["checksum"] = _checksum(_payload(net))
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def save(net: NetGraph, path) -> None:
    with open(path, "w") as fh:
        fh.write(to_json(net))


def from_json(text: str) -> NetGraph:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"not valid JSON: {exc}") from exc
    for key in ("format_version", "precision_bits", "input_count", "nodes", "checksum"):
        if key not in raw:
            raise SchemaError(f"missing field {key!r}")
    if raw["format_version"] != FORMAT_VERSION:
        raise SchemaError(f"unsupported format_version {raw['format_version']!r}")
    precision = int(raw["precision_bits"])

    nodes = []
    for nd in raw["nodes"]:
        try:
            activation = Activation.from_token(nd["activation"], precision) if "activation" in nd else None
            bias = BigReal(parse_decimal(nd["bias"], precision), precision) if "bias" in nd else None
            edges = tuple(
                Edge(e["src"], BigReal(parse_decimal(e["weight"], precision), precision),
                     e.get("slot"))
                for e in nd.get("in_edges", ())
            )
            rng = None
            if "input_range" in nd:
                lo, hi = nd["input_range"]
                rng = (BigReal(parse_decimal(lo, precision), precision),
                       BigReal(parse_decimal(hi, precision), precision))
            nodes.append(NodeSpec(id=nd["id"], kind=nd["kind"], activation=activation,
                                  bias=bias, in_edges=edges, bias_slot=nd.get("bias_slot"),
                                  input_range=rng))
        except (KeyError, ValueError) as exc:
            if isinstance(exc, (CycleError,)):
                raise
            raise SchemaError(f"bad node record: {exc}") from exc

    expected = {
        "format_version": raw["format_version"],
        "kind": raw.get("kind", "netgraph"),
        "precision_bits": precision,
        "input_count": int(raw["input_count"]),
        "nodes": [_node_to_dict(n) for n in nodes],
    }
    if _checksum(expected) != raw["checksum"]:
        raise ChecksumError("checksum mismatch")
    return NetGraph(tuple(nodes), int(raw["input_count"]), precision)


def load(path) -> NetGraph:
    with open(path) as fh:
        return from_json(fh.read())


# ---------------------------------------------------------------------------
# small factories used across builders and tests
# ---------------------------------------------------------------------------

def identity_net(d: int = 1, precision: int = DEFAULT_PRECISION) -> NetGraph:
    one = BigReal.of(1, precision)
    zero = BigReal.of(0, precision)
    nodes = [NodeSpec(id=f"in{j}", kind=INPUT) for j in range(d)]
    nodes.append(NodeSpec(id="out", kind=OUTPUT, bias=zero,
                          in_edges=tuple(Edge(f"in{j}", one) for j in range(d))))
    return NetGraph(tuple(nodes), d, precision)


def phi_gadget(precision: int = DEFAULT_PRECISION) -> NetGraph:
    """x - floor(x) as a one-hidden-node graph (the sawtooth gadget)."""
    one = BigReal.of(1, precision)
    zero = BigReal.of(0, precision)
    return NetGraph((
        NodeSpec(id="in0", kind=INPUT),
        NodeSpec(id="fl", kind=HIDDEN, activation=Activation.floor(), bias=zero,
                 in_edges=(Edge("in0", one),)),
        NodeSpec(id="out", kind=OUTPUT, bias=zero,
                 in_edges=(Edge("in0", one), Edge("fl", -one))),
    ), 1, precision)


def single_hidden_net(activation: Activation, w: ScalarLike = 1, h: ScalarLike = 0,
                      out_w: ScalarLike = 1, out_h: ScalarLike = 0,
                      precision: int = DEFAULT_PRECISION,
                      input_range=None) -> NetGraph:
    br = lambda v: BigReal.of(v, precision)
    return NetGraph((
        NodeSpec(id="in0", kind=INPUT),
        NodeSpec(id="h0", kind=HIDDEN, activation=activation, bias=br(h),
                 in_edges=(Edge("in0", br(w)),), input_range=input_range),
        NodeSpec(id="out", kind=OUTPUT, bias=br(out_h), in_edges=(Edge("h0", br(out_w)),)),
    ), 1, precision)


def layered_net(widths: Sequence[int], activation: Activation,
                precision: int = DEFAULT_PRECISION) -> NetGraph:
    """Fully connected 1-input layered skeleton with slot-named weights.

    Slots: ``L{l}.n{i}.w{j}`` for edges, ``L{l}.n{i}.b`` for biases, and
    ``out.w{j}`` / ``out.b`` on the output; initial weights are 1, biases 0.
    """
    one = BigReal.of(1, precision)
    zero = BigReal.of(0, precision)
    nodes = [NodeSpec(id="in0", kind=INPUT)]
    prev = ["in0"]
    for layer, width in enumerate(widths):
        cur = []
        for i in range(width):
            nid = f"L{layer}.n{i}"
            edges = tuple(Edge(p, one, slot=f"{nid}.w{j}") for j, p in enumerate(prev))
            nodes.append(NodeSpec(id=nid, kind=HIDDEN, activation=activation, bias=zero,
                                  in_edges=edges, bias_slot=f"{nid}.b"))
            cur.append(nid)
        prev = cur
    out_edges = tuple(Edge(p, one, slot=f"out.w{j}") for j, p in enumerate(prev))
    nodes.append(NodeSpec(id="out", kind=OUTPUT, bias=zero, in_edges=out_edges,
                          bias_slot="out.b"))
    return NetGraph(tuple(nodes), 1, precision)
