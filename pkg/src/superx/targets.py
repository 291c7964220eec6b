"""Builtin and CSV-table target functions for the builders and the CLI.

A target knows how to evaluate itself at big precision and reports exact
range data (min, max on the cube) plus a modulus-of-continuity bound, which
feed the error certificates.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import mpmath
from mpmath import mp

from .scalar import BigReal, DEFAULT_PRECISION, parse_decimal


@dataclass(frozen=True)
class Target:
    spec: str
    d: int
    f_min: BigReal
    f_max: BigReal
    _eval: Callable[[Sequence[BigReal], int], BigReal]
    _modulus: Callable[[BigReal], BigReal]

    def __call__(self, xs: Sequence[BigReal]) -> BigReal:
        if len(xs) != self.d:
            raise ValueError(f"target {self.spec!r} expects {self.d} coordinates")
        prec = max([x.precision for x in xs] + [self.f_min.precision])
        return self._eval(xs, prec)

    def modulus(self, delta: BigReal) -> BigReal:
        """Upper bound for sup |f(x) - f(y)| over euclidean |x - y| <= delta."""
        return self._modulus(delta)

    @property
    def max_abs(self) -> BigReal:
        return BigReal.of(max(abs(self.f_min.value), abs(self.f_max.value)),
                          self.f_min.precision)


def _capped_linear_modulus(rate: float | mpmath.mpf, cap: mpmath.mpf, precision: int):
    def bound(delta: BigReal) -> BigReal:
        with mp.workprec(precision):
            return BigReal(+min(mpmath.mpf(rate) * delta.value, cap), precision)
    return bound


def make_target(spec: str, d: int, precision: int = DEFAULT_PRECISION) -> Target:
    """Parse a target spec: const:<c>, linear, square, sin:<k>, step, csv:<path>."""
    if d < 1:
        raise ValueError("dimension must be >= 1")
    br = lambda v: BigReal.of(v, precision)
    name, _, arg = spec.partition(":")

    if name == "const":
        c = br(arg if arg else "0")
        return Target(spec, d, c, c,
                      lambda xs, prec: BigReal.of(c, prec),
                      _capped_linear_modulus(0, mpmath.mpf(0), precision))

    if name == "linear":
        # mean of the coordinates; the 1-d case is f(x) = x
        def ev(xs, prec):
            total = xs[0]
            for x in xs[1:]:
                total = total + x
            return total / len(xs)
        with mp.workprec(precision):
            rate = 1 / mpmath.sqrt(d)
        return Target(spec, d, br(0), br(1), ev,
                      _capped_linear_modulus(rate, mpmath.mpf(1), precision))

    if name == "square":
        def ev(xs, prec):
            total = xs[0] * xs[0]
            for x in xs[1:]:
                total = total + x * x
            return total / len(xs)
        if d == 1:
            def modulus(delta: BigReal) -> BigReal:
                with mp.workprec(precision):
                    dd = min(delta.value, mpmath.mpf(1))
                    return BigReal(+(dd * (2 - dd)), precision)
        else:
            with mp.workprec(precision):
                rate = 2 / mpmath.sqrt(d)
            modulus = _capped_linear_modulus(rate, mpmath.mpf(1), precision)
        return Target(spec, d, br(0), br(1), ev, modulus)

    if name == "sin":
        if d != 1:
            raise ValueError("sin:<k> targets are univariate")
        k = int(arg or "1")
        if k < 1:
            raise ValueError("sin:<k> needs k >= 1")

        def ev(xs, prec):
            with mp.workprec(prec + 16):
                out = mpmath.sinpi(2 * k * xs[0].value)
            with mp.workprec(prec):
                return BigReal(+out, prec)
        with mp.workprec(precision):
            rate = 2 * mp.pi * k
        return Target(spec, d, br(-1), br(1), ev,
                      _capped_linear_modulus(rate, mpmath.mpf(2), precision))

    if name == "step":
        if d != 1:
            raise ValueError("the step target is univariate")

        def ev(xs, prec):
            return BigReal.of(0 if xs[0].value < mpmath.mpf(1) / 2 else 1, prec)
        # a jump has no useful modulus: the certificate degrades to the full range
        return Target(spec, d, br(0), br(1), ev, lambda delta: br(1))

    if name == "csv":
        if d != 1:
            raise ValueError("csv table targets are univariate")
        return _csv_target(spec, arg, precision)

    raise ValueError(f"unknown target spec {spec!r}")


def _csv_target(spec: str, path: str, precision: int) -> Target:
    xs: List[BigReal] = []
    ys: List[BigReal] = []
    with open(path) as fh:
        for row in csv.reader(fh):
            if not row or row[0].lstrip().startswith("#") or row[0].strip() == "x":
                continue
            xs.append(BigReal(parse_decimal(row[0], precision), precision))
            ys.append(BigReal(parse_decimal(row[1], precision), precision))
    if len(xs) < 2:
        raise ValueError("csv target needs at least two knots")
    pairs = sorted(zip(xs, ys), key=lambda p: p[0].value)
    xs = [p[0] for p in pairs]
    ys = [p[1] for p in pairs]
    if any(xs[i].value == xs[i + 1].value for i in range(len(xs) - 1)):
        raise ValueError("csv target knots must have distinct x")

    lo = min(y.value for y in ys)
    hi = max(y.value for y in ys)
    with mp.workprec(precision):
        max_slope = max(abs((ys[i + 1].value - ys[i].value) / (xs[i + 1].value - xs[i].value))
                        for i in range(len(xs) - 1))
        cap = hi - lo

    def ev(pts: Sequence[BigReal], prec: int) -> BigReal:
        v = pts[0].value
        with mp.workprec(prec + 16):
            if v <= xs[0].value:
                out = ys[0].value
            elif v >= xs[-1].value:
                out = ys[-1].value
            else:
                j = 1
                while xs[j].value < v:
                    j += 1
                x0, x1 = xs[j - 1].value, xs[j].value
                y0, y1 = ys[j - 1].value, ys[j].value
                out = y0 + (y1 - y0) * (v - x0) / (x1 - x0)
        with mp.workprec(prec):
            return BigReal(+out, prec)

    return Target(spec, 1, BigReal(lo, precision), BigReal(hi, precision), ev,
                  _capped_linear_modulus(max_slope, cap, precision))
