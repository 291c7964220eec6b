"""Approximate multiplication from curvature: the fixed 6-neuron gadget.

Squaring comes from the symmetric second difference of an activation with
nonzero second derivative at an expansion point x0; products follow from the
polarization identity xy = ((x+y)^2 - (x-y)^2) / 4.  Inputs are normalized by
the declared bound so the error scales as K * delta^2 * C^2 (which also keeps
the classical K * delta^2 * C^4 budget, with room to spare).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence, Tuple

import mpmath
from mpmath import mp

from .netgraph import Edge, NetGraph, NodeSpec
from .scalar import (
    Activation,
    BigReal,
    DEFAULT_PRECISION,
    DomainError,
    SIGMA3,
    SIN,
    _sigma3_second_raw,
)


class CurvatureError(ValueError):
    """The activation has (numerically) vanishing curvature at x0."""


@dataclass(frozen=True)
class MultiplierParams:
    x0: BigReal
    delta: BigReal
    c_bound: BigReal  # |x|, |y| <= C
    activation: Activation

    def __post_init__(self):
        if self.activation.kind not in (SIN, SIGMA3):
            raise ValueError("multiplier gadget supports sin or sigma3 activations")
        if self.delta.value <= 0 or self.c_bound.value <= 0:
            raise ValueError("delta and c_bound must be positive")
        if self.activation.kind == SIGMA3 and self.delta.value > mpmath.mpf(1) / 4:
            raise ValueError("sigma3 multiplier needs delta <= 1/4 to stay in its "
                             "curvature-controlled window")

    @property
    def precision(self) -> int:
        return max(self.x0.precision, self.delta.precision, self.c_bound.precision)


def second_deriv(activation: Activation, x0: BigReal) -> BigReal:
    prec = x0.precision
    with mp.workprec(prec + 16):
        if activation.kind == SIN:
            out = -mpmath.sin(x0.value)
        elif activation.kind == SIGMA3:
            out = _sigma3_second_raw(x0.value)
        else:
            raise ValueError(activation.kind)
    with mp.workprec(prec):
        return BigReal(+out, prec)


def _check_curvature(params: MultiplierParams) -> BigReal:
    curv = second_deriv(params.activation, params.x0)
    prec = params.precision
    if abs(curv.value) < mpmath.mpf(2) ** (-(prec // 2)):
        raise CurvatureError(
            f"second derivative at x0 is below 2^-(P/2): {mpmath.nstr(curv.value, 8)}")
    return curv


def mult_error_bound(params: MultiplierParams) -> BigReal:
    """Analytic worst-case |gadget(x, y) - x y| over |x|, |y| <= C.

    With inputs normalized by D = 2C the two squared terms satisfy
    u+^4 + u-^4 <= 1, giving error <= kappa * C^2 * delta^2 / 12 where kappa
    bounds |sigma''''| / |sigma''(x0)| over the probe window.  kappa <= 2 for
    both supported activations at their standard expansion points.
    """
    prec = params.precision
    curv = _check_curvature(params)
    with mp.workprec(prec + 16):
        if params.activation.kind == SIN:
            kappa = 2 / abs(curv.value)  # |sigma''''| <= 1 everywhere, margin 2
        else:
            kappa = mpmath.mpf(2)  # sigma3 at x0 = 0 with the delta < 1/4 constraint
        out = kappa * params.c_bound.value ** 2 * params.delta.value ** 2 / 12
    with mp.workprec(prec):
        return BigReal(+out, prec)


def delta_for_budget(budget: BigReal, c_bound: BigReal, activation: Activation,
                     x0: BigReal) -> BigReal:
    """Largest delta whose mult_error_bound stays within the requested budget."""
    prec = max(budget.precision, c_bound.precision, x0.precision)
    curv = second_deriv(activation, x0)
    with mp.workprec(prec + 16):
        kappa = 2 / abs(curv.value) if activation.kind == SIN else mpmath.mpf(2)
        out = mpmath.sqrt(12 * budget.value / (kappa * c_bound.value ** 2))
    with mp.workprec(prec):
        return BigReal(+out, prec)


def calibrate_k(activation: Activation, x0: BigReal, c_bound: BigReal,
                precision: int = DEFAULT_PRECISION) -> float:
    """One-time sweep estimating K in err ~ K * delta^2 * C^2 for this activation."""
    worst = 0.0
    for delta_exp in (-7, -10):
        delta = BigReal(mpmath.mpf(2) ** delta_exp, precision)
        params = MultiplierParams(x0, delta, c_bound, activation)
        net = multiplier_net(params)
        from .netgraph import evaluate
        c = float(c_bound.value)
        for fx in (-1.0, -0.4, 0.3, 1.0):
            for fy in (-1.0, 0.5, 0.9, 1.0):
                x = BigReal.of(fx * c, precision)
                y = BigReal.of(fy * c, precision)
                got = evaluate(net, [x, y])
                err = abs(float((got - x * y).value))
                worst = max(worst, err / (float(delta.value) ** 2 * c ** 2))
    return worst


def mult_gadget_nodes(prefix: str, x_edges: Sequence[Tuple[str, BigReal]],
                      y_edges: Sequence[Tuple[str, BigReal]],
                      x_bias: BigReal, y_bias: BigReal,
                      params: MultiplierParams) -> Tuple[List[NodeSpec], List[Tuple[str, BigReal]], BigReal]:
    """Six activation neurons computing approx (x * y) for affine inputs.

    ``x`` and ``y`` are described as affine forms over existing node outputs;
    returns (new nodes, output edge list, output bias) whose affine combination
    is the approximate product.
    """
    prec = params.precision
    curv = _check_curvature(params)
    with mp.workprec(prec + 16):
        d_norm = 2 * params.c_bound.value  # bound for x +- y
        probe = params.delta.value / d_norm
        gain = d_norm ** 2 / (4 * curv.value * params.delta.value ** 2)
    br = lambda v: BigReal(+v, prec)
    x0 = params.x0
    act = params.activation

    def _combine(sign_y: int, probe_sign: int) -> Tuple[Tuple[Edge, ...], BigReal]:
        acc: dict = {}
        with mp.workprec(prec + 16):
            for src, wgt in x_edges:
                acc[src] = acc.get(src, mpmath.mpf(0)) + probe_sign * probe * wgt.value
            for src, wgt in y_edges:
                acc[src] = acc.get(src, mpmath.mpf(0)) + probe_sign * sign_y * probe * wgt.value
            bias = x0.value + probe_sign * probe * (x_bias.value + sign_y * y_bias.value)
        edges = tuple(Edge(src, br(w)) for src, w in acc.items() if w != 0)
        return edges, br(bias)

    nodes: List[NodeSpec] = []
    out_edges: List[Tuple[str, BigReal]] = []
    with mp.workprec(prec):
        g = +gain
    for tag, sign_y in (("p", 1), ("m", -1)):
        sign_gain = br(g if tag == "p" else -g)
        for probe_tag, probe_sign in (("a", 1), ("b", -1)):
            nid = f"{prefix}.{tag}{probe_tag}"
            edges, bias = _combine(sign_y, probe_sign)
            nodes.append(NodeSpec(id=nid, kind="hidden", activation=act, bias=bias,
                                  in_edges=edges))
            out_edges.append((nid, sign_gain))
        nid0 = f"{prefix}.{tag}0"
        nodes.append(NodeSpec(id=nid0, kind="hidden", activation=act, bias=x0,
                              in_edges=()))
        out_edges.append((nid0, br(-2 * sign_gain.value)))
    return nodes, out_edges, BigReal.of(0, prec)


def multiplier_net(params: MultiplierParams) -> NetGraph:
    """Standalone 2-input approximate multiplier network."""
    prec = params.precision
    one = BigReal.of(1, prec)
    zero = BigReal.of(0, prec)
    nodes = [NodeSpec(id="in0", kind="input"), NodeSpec(id="in1", kind="input")]
    gadget, out_edges, out_bias = mult_gadget_nodes(
        "mul", [("in0", one)], [("in1", one)], zero, zero, params)
    nodes.extend(gadget)
    nodes.append(NodeSpec(id="out", kind="output", bias=out_bias,
                          in_edges=tuple(Edge(src, w) for src, w in out_edges)))
    return NetGraph(tuple(nodes), 2, prec)
