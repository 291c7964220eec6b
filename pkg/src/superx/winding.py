"""Torus hitting solvers: find s with frac(s * a_n / m) * m close to y_n for all n.

Two routes are provided.  ``solve_oracle`` is an honest first-hit grid scan
over s (a fast float64 prescan proposes candidates, every accepted candidate
is confirmed in exact big-float arithmetic and re-verified at doubled
precision).  ``solve_inductive`` implements the pigeonhole recursion: divide
out the last coordinate, scan integer multiples of 1/a_N for a near-return of
the remaining coordinates, recurse on the small near-return vector, and lift.

Tolerances are per-coordinate.  A problem may override the uniform tolerance
with explicit per-coordinate radii and recentered targets; builders use this
to keep hits on the correct side of the sawtooth seam at 0/1.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence, Tuple

import mpmath
import numpy as np
from mpmath import mp

from .scalar import BigReal, DEFAULT_PRECISION, decimal_str, parse_decimal

# fixed-point fractional bits for the exact integer recurrence that anchors
# float chunks of the scan
_FIXED_BITS = 192
_CHUNK = 1 << 18
_PRESCAN_SLACK = 1e-6


class SolverFailure(RuntimeError):
    """A winding solve did not produce a solution meeting its tolerance."""


class NotFound(SolverFailure):
    """Scan exhausted without a hit; carries the best candidate seen."""

    def __init__(self, message: str, best: Optional["WindingSolution"] = None):
        super().__init__(message)
        self.best = best


class RecursionBudgetExceeded(SolverFailure):
    """A near-return scan ran past its iteration cap; carries the best candidate."""

    def __init__(self, message: str, best: Optional["WindingSolution"] = None):
        super().__init__(message)
        self.best = best


class PrecisionError(ValueError):
    """Working precision too small for the requested scan range."""


class ScreenFailure(RuntimeError):
    """No candidate w passed the integer-relation screen within the budget."""


# ---------------------------------------------------------------------------
# problem / solution records
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WindingProblem:
    a: Tuple[BigReal, ...]
    y: Tuple[BigReal, ...]
    tol: BigReal
    s_max: BigReal
    modulus: BigReal = None  # default 1
    step: Optional[BigReal] = None
    radii: Optional[Tuple[BigReal, ...]] = None
    near_return_cap: int = 10**6
    seed: int = 0

    def __post_init__(self):
        if self.modulus is None:
            object.__setattr__(self, "modulus", BigReal.of(1, self.precision))
        if len(self.a) != len(self.y) or not self.a:
            raise ValueError("need equally many coefficients and targets, at least one")
        if any(x.value == 0 for x in self.a):
            raise ValueError("all coefficients a_n must be nonzero")
        if not (0 < self.tol.value < self.modulus.value / 2):
            raise ValueError("tolerance must lie in (0, modulus/2)")
        if self.radii is not None:
            if len(self.radii) != len(self.a):
                raise ValueError("radii must match the coordinate count")
            if any(not (0 < r.value <= self.tol.value) for r in self.radii):
                raise ValueError("per-coordinate radii must lie in (0, tol]")
        for t in self.y:
            if not (0 <= t.value < self.modulus.value):
                raise ValueError("targets must lie in [0, modulus)")
        if self.step is not None and self.step.value > self._step_cap():
            raise ValueError("step too coarse: must be <= tol / (2 max|a_n|)")

    @property
    def n(self) -> int:
        return len(self.a)

    @property
    def precision(self) -> int:
        vals = [x.precision for x in self.a] + [x.precision for x in self.y]
        vals += [self.tol.precision, self.s_max.precision]
        return max(vals)

    def _min_radius(self) -> mpmath.mpf:
        if self.radii is None:
            return self.tol.value
        return min(r.value for r in self.radii)

    def _max_abs_a(self) -> mpmath.mpf:
        return max(abs(x.value) for x in self.a)

    def _step_cap(self) -> mpmath.mpf:
        return self._min_radius() / (2 * self._max_abs_a())

    def effective_step(self) -> BigReal:
        """User step, or the largest power of two <= min_radius / (4 max|a|).

        A dyadic default keeps scan points k*step exactly representable, so
        e.g. an exact rational solution is returned exactly.
        """
        if self.step is not None:
            return self.step
        prec = self.precision
        with mp.workprec(prec):
            bound = self._min_radius() / (4 * self._max_abs_a())
            exponent = mpmath.floor(mpmath.log(bound, 2))
            return BigReal(mpmath.mpf(2) ** int(exponent), prec)

    def effective_radii(self) -> Tuple[BigReal, ...]:
        if self.radii is not None:
            return self.radii
        return tuple(self.tol for _ in self.a)


@dataclass(frozen=True)
class WindingSolution:
    s: BigReal
    achieved: BigReal  # max over n of the per-coordinate torus distance
    solver: str
    evaluations: int
    met_tol: bool
    per_coord: Tuple[BigReal, ...] = ()

    def to_dict(self) -> dict:
        return {
            "format_version": "1",
            "kind": "winding_solution",
            "s": self.s.to_decimal(),
            "achieved": self.achieved.to_decimal(),
            "solver": self.solver,
            "evaluations": self.evaluations,
            "met_tol": self.met_tol,
            "per_coord": [d.to_decimal() for d in self.per_coord],
        }


def problem_to_dict(p: WindingProblem) -> dict:
    return {
        "format_version": "1",
        "kind": "winding_problem",
        "precision_bits": p.precision,
        "a": [x.to_decimal() for x in p.a],
        "y": [x.to_decimal() for x in p.y],
        "tol": p.tol.to_decimal(),
        "modulus": p.modulus.to_decimal(),
        "s_max": p.s_max.to_decimal(),
        **({"step": p.step.to_decimal()} if p.step is not None else {}),
        **({"radii": [r.to_decimal() for r in p.radii]} if p.radii is not None else {}),
        "near_return_cap": p.near_return_cap,
        "seed": p.seed,
    }


def problem_from_dict(raw: dict) -> WindingProblem:
    prec = int(raw.get("precision_bits", DEFAULT_PRECISION))
    br = lambda s: BigReal(parse_decimal(s, prec), prec)
    return WindingProblem(
        a=tuple(br(s) for s in raw["a"]),
        y=tuple(br(s) for s in raw["y"]),
        tol=br(raw["tol"]),
        s_max=br(raw["s_max"]),
        modulus=br(raw.get("modulus", "1")),
        step=br(raw["step"]) if "step" in raw else None,
        radii=tuple(br(s) for s in raw["radii"]) if "radii" in raw else None,
        near_return_cap=int(raw.get("near_return_cap", 10**6)),
        seed=int(raw.get("seed", 0)),
    )


# ---------------------------------------------------------------------------
# metric
# ---------------------------------------------------------------------------

def torus_dist(b1: Sequence[BigReal], b2: Sequence[BigReal],
               modulus: BigReal | int = 1) -> BigReal:
    """Euclidean norm of the coordinatewise displacements min(|d|, m - |d|)."""
    if len(b1) != len(b2):
        raise ValueError("points must have equal dimension")
    prec = max([x.precision for x in b1] + [x.precision for x in b2] + [DEFAULT_PRECISION])
    m = BigReal.of(modulus, prec).value
    with mp.workprec(prec + 16):
        total = mpmath.mpf(0)
        for u, v in zip(b1, b2):
            d = _circle_dist(u.value, v.value, m)
            total += d * d
        out = mpmath.sqrt(total)
    with mp.workprec(prec):
        return BigReal(+out, prec)


def _circle_dist(u: mpmath.mpf, v: mpmath.mpf, m: mpmath.mpf) -> mpmath.mpf:
    d = u - v
    d = d - m * mpmath.floor(d / m)  # in [0, m)
    return min(d, m - d)


# ---------------------------------------------------------------------------
# fixed-point chunk plumbing for the scans
# ---------------------------------------------------------------------------

def _mpf_to_fixed(x: mpmath.mpf, bits: int = _FIXED_BITS) -> int:
    sign, man, exp, _ = x._mpf_
    man = int(man)
    sh = exp + bits
    if sh >= 0:
        out = man << sh
    else:
        out = (man + (1 << (-sh - 1))) >> (-sh)
    return -out if sign else out


def _chunk_bases(incs: Sequence[mpmath.mpf], modulus: mpmath.mpf, k_total: int,
                 chunk: int) -> Iterable[Tuple[int, int, List[float]]]:
    """Yield (k0, count, base_floats) per chunk of the arithmetic progression.

    Chunk anchors advance by an exact integer recurrence in fixed point, so
    float error never accumulates beyond one chunk.
    """
    mod_int = _mpf_to_fixed(modulus)
    inc_int = [_mpf_to_fixed(v) % mod_int for v in incs]
    stride = [(v * chunk) % mod_int for v in inc_int]
    base = [0] * len(incs)
    scale = 1.0 / (1 << _FIXED_BITS)
    k0 = 0
    while k0 <= k_total:
        count = min(chunk, k_total - k0 + 1)
        yield k0, count, [b * scale for b in base]
        base = [(b + s) % mod_int for b, s in zip(base, stride)]
        k0 += chunk


# ---------------------------------------------------------------------------
# oracle scan
# ---------------------------------------------------------------------------

def _required_bits(s_max: mpmath.mpf, max_a: mpmath.mpf, min_radius: mpmath.mpf) -> int:
    with mp.workprec(64):
        span = max(s_max * max_a, mpmath.mpf(1))
        out_bits = max(-mpmath.log(min_radius, 2), mpmath.mpf(0))
        return int(mpmath.ceil(mpmath.log(span, 2))) + int(mpmath.ceil(out_bits)) + 32


def _check_precision(p: WindingProblem) -> None:
    need = _required_bits(p.s_max.value, p._max_abs_a(), p._min_radius())
    if p.precision < need:
        raise PrecisionError(
            f"precision_bits={p.precision} < {need} required for s_max*max|a| at this tolerance")


def _exact_distances(p: WindingProblem, s: mpmath.mpf, precision: int) -> List[mpmath.mpf]:
    m = p.modulus.value
    with mp.workprec(precision):
        return [_circle_dist(s * a.value, y.value, m) for a, y in zip(p.a, p.y)]


def _solution_from_k(p: WindingProblem, k: int, step: BigReal, solver: str,
                     evaluations: int) -> WindingSolution:
    prec = p.precision
    with mp.workprec(prec):
        s = mpmath.mpf(k) * step.value
    dists = _exact_distances(p, s, 2 * prec)  # doubled-precision confirmation
    radii = p.effective_radii()
    met = all(d <= r.value for d, r in zip(dists, radii))
    with mp.workprec(prec):
        per = tuple(BigReal(+d, prec) for d in dists)
        achieved = BigReal(+max(dists), prec)
    return WindingSolution(BigReal(s, prec), achieved, solver, evaluations, met, per)


def solve_oracle(p: WindingProblem, workers: int = 1) -> WindingSolution:
    """First scanned s = k*step in [0, s_max] with every coordinate inside its radius.

    Raises ``NotFound`` (carrying the best-ratio candidate) when the scan
    exhausts s_max.  The prescan runs in float64 against exact fixed-point
    chunk anchors; candidates are confirmed in exact arithmetic and the
    returned solution is re-verified at doubled precision, so false positives
    from rounding are impossible.
    """
    _check_precision(p)
    prec = p.precision
    step = p.effective_step()
    radii = p.effective_radii()
    with mp.workprec(prec):
        k_total = int(mpmath.floor(p.s_max.value / step.value))
        incs = [+(step.value * a.value) for a in p.a]
    m_f = float(p.modulus.value)
    centers = np.array([float(t.value) for t in p.y])
    inv_radii = np.array([1.0 / float(r.value) for r in radii])

    best_ratio = math.inf
    best_k = 0
    threshold = 1.0 + _PRESCAN_SLACK

    for k0, count, bases in _chunk_bases(incs, p.modulus.value, k_total, _CHUNK):
        idx = np.arange(count, dtype=np.float64)
        ratio = None
        for n in range(p.n):
            pos = (bases[n] + idx * float(incs[n])) % m_f
            d = np.abs(pos - centers[n])
            np.minimum(d, m_f - d, out=d)
            d *= inv_radii[n]
            ratio = d if ratio is None else np.maximum(ratio, d, out=ratio)
        i = int(np.argmin(ratio))
        if ratio[i] < best_ratio:
            best_ratio = float(ratio[i])
            best_k = k0 + i
        if ratio[i] <= threshold:
            for cand in np.flatnonzero(ratio <= threshold):
                k = k0 + int(cand)
                dists = _exact_distances(p, mpmath.mpf(k) * step.value, prec)
                if all(d <= r.value for d, r in zip(dists, radii)):
                    sol = _solution_from_k(p, k, step, "oracle", k + 1)
                    if sol.met_tol:
                        return sol
    best = _solution_from_k(p, best_k, step, "oracle", k_total + 1)
    raise NotFound(
        f"no s in [0, {decimal_str(p.s_max.value)}] met the tolerance "
        f"(best ratio {best_ratio:.3g} at s = {decimal_str(best.s.value)})",
        best=best)


# ---------------------------------------------------------------------------
# pigeonhole induction
# ---------------------------------------------------------------------------

def _signed_frac(v: mpmath.mpf) -> mpmath.mpf:
    f = v - mpmath.floor(v)
    return f - 1 if f >= mpmath.mpf(1) / 2 else f


def _near_return_scan(incs: List[mpmath.mpf], eps: mpmath.mpf, cap: int,
                      precision: int) -> Tuple[Optional[int], int, float, int]:
    """First m in [1, cap] with ||signed frac(m * incs)||_2 < eps (euclid, mod 1).

    Returns (hit m or None, iterations scanned, best norm seen, best m).
    """
    eps_f = float(eps)
    limit = (eps_f * (1.0 + _PRESCAN_SLACK)) ** 2
    one = mpmath.mpf(1)
    best = math.inf
    best_m = 1
    degenerate_floor = mpmath.mpf(2) ** (-(precision // 2))
    for k0, count, bases in _chunk_bases(incs, one, cap, _CHUNK):
        idx = np.arange(count, dtype=np.float64)
        total = None
        for n, inc in enumerate(incs):
            pos = (bases[n] + idx * float(inc)) % 1.0
            d = np.minimum(pos, 1.0 - pos)
            d *= d
            total = d if total is None else total + d
        if k0 == 0:
            total[0] = math.inf  # m = 0 is the trivial return
        i = int(np.argmin(total))
        if total[i] < best:
            best = float(total[i])
            best_m = k0 + i
        if total[i] <= limit:
            for cand in np.flatnonzero(total <= limit):
                m = k0 + int(cand)
                if m == 0:
                    continue
                with mp.workprec(precision):
                    comps = [_signed_frac(m * inc) for inc in incs]
                    norm = mpmath.sqrt(sum(c * c for c in comps))
                if norm < eps and all(abs(c) > degenerate_floor for c in comps):
                    return m, m, float(norm), m
    return None, cap, math.sqrt(best), best_m


def _inductive_level(a: List[mpmath.mpf], y: List[mpmath.mpf], tol: mpmath.mpf,
                     cap: int, precision: int, stats: dict) -> mpmath.mpf:
    """Solve frac(s * a_n) ~ y_n (modulus 1, per-coordinate sup tolerance)."""
    if len(a) == 1:
        return y[0] / a[0]
    with mp.workprec(precision):
        s0 = 1 / a[-1]
        c = y[-1]
        incs = [+(s0 * an) for an in a[:-1]]
        eps = tol * mpmath.mpf("0.49")
    m2, scanned, achieved, best_m = _near_return_scan(incs, eps, cap, precision)
    stats["evaluations"] += scanned
    if m2 is None:
        stats["budget_exceeded"] = True
        stats.setdefault("notes", []).append(
            f"near-return cap {cap} reached at dimension {len(a)}; best {achieved:.3g}")
        m2 = best_m  # best candidate found: complete the construction with it
    with mp.workprec(precision + 64):
        b = [_signed_frac(m2 * an * s0) for an in a[:-1]]
        floor_b = mpmath.mpf(2) ** (-precision)
        b = [bn if abs(bn) > floor_b else floor_b for bn in b]  # keep the recursion well posed
        y_adj = [(yn - c * s0 * an) for yn, an in zip(y[:-1], a[:-1])]
        y_adj = [v - mpmath.floor(v) for v in y_adj]
    with mp.workprec(precision):
        t0 = _inductive_level(b, y_adj, tol * mpmath.mpf("0.49"), cap, precision, stats)
        t_int = mpmath.floor(t0)
        return (m2 * t_int + c) * s0


def solve_inductive(p: WindingProblem) -> WindingSolution:
    """Pigeonhole construction: reduce dimension through near-returns, then lift.

    Per level, s0 = 1/a_N; integer multiples m*s0 are scanned for a near-return
    of the first N-1 coordinates; the small near-return vector becomes the next
    level's coefficient vector; the recursive solution t is lifted through
    s = (m2 * floor(t) + c) * s0 where c shifts the last coordinate onto its
    target exactly.  Per-coordinate error: tol/2 from the recursion plus the
    near-return size < tol/2.
    """
    if p.radii is not None:
        raise ValueError("solve_inductive supports a uniform tolerance only")
    _check_precision(p)
    prec = p.precision
    stats = {"evaluations": 0, "budget_exceeded": False}
    with mp.workprec(prec):
        m = p.modulus.value
        a = [+(x.value / m) for x in p.a]
        y = [+(t.value / m) for t in p.y]
        tol = +(p.tol.value / m)
        s = _inductive_level(a, y, tol, p.near_return_cap, prec, stats)

    dists = _exact_distances(p, s, 2 * prec)
    met = all(d <= p.tol.value for d in dists)
    with mp.workprec(prec):
        per = tuple(BigReal(+d, prec) for d in dists)
        achieved = BigReal(+max(dists), prec)
        sol = WindingSolution(BigReal(+s, prec), achieved, "inductive",
                              stats["evaluations"], met, per)
    if stats["budget_exceeded"]:
        raise RecursionBudgetExceeded("; ".join(stats.get("notes", ["budget exceeded"])), best=sol)
    if not met:
        raise NotFound("lifted solution missed the tolerance after rounding", best=sol)
    return sol


# ---------------------------------------------------------------------------
# w selection: curvature-probing offset plus an integer-relation screen
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PickWResult:
    w: BigReal
    attempts: int
    values: Tuple[BigReal, ...]  # a_n = sigma1(center + w n)


_GOLDEN_MIX = 0x9E3779B97F4A7C15


def _attempt_scale(seed: int, attempt: int) -> float:
    h = (attempt * _GOLDEN_MIX + (seed + 1) * 0xBF58476D1CE4E5B9) & ((1 << 64) - 1)
    return 1.0 + (h >> 52) / 4096.0 * 0.2  # in [1, 1.2)


def pick_w(sigma1, center: BigReal, half_width: BigReal, n: int,
           screen_budget: int = 8, seed: int = 0,
           precision: int = DEFAULT_PRECISION,
           screen_maxcoeff: int = 2**16) -> PickWResult:
    """Choose w with |w| n < half_width whose sampled activations pass a
    small-coefficient integer-relation screen.

    The base choice is half_width/(2n) scaled by the golden ratio; retries
    apply deterministic seed-derived perturbations.  The screen runs PSLQ at
    working precision with |lambda_n| <= screen_maxcoeff; finding no relation
    is the pass condition (rational independence itself is not certifiable at
    finite precision: downstream code checks achieved distances instead).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    with mp.workprec(precision):
        golden = (1 + mpmath.sqrt(5)) / 2
        base = half_width.value / (2 * n) * golden
    tiny = mpmath.mpf(2) ** (-(precision // 2))

    for attempt in range(screen_budget):
        with mp.workprec(precision):
            w = +(base / _attempt_scale(seed, attempt))
            if abs(w) * n >= half_width.value:
                continue
            wb = BigReal(w, precision)
            values = tuple(sigma1(center + wb * k) for k in range(1, n + 1))
        if any(abs(v.value) <= tiny for v in values):
            continue
        if n == 1:
            return PickWResult(wb, attempt + 1, values)
        with mp.workprec(precision):
            rel = mpmath.pslq([v.value for v in values], maxcoeff=screen_maxcoeff,
                              maxsteps=512 + 64 * n * n)
        if rel is None:
            return PickWResult(wb, attempt + 1, values)
        residual = abs(sum(l * v.value for l, v in zip(rel, values)))
        scale = max(abs(v.value) for v in values)
        if residual > scale * mpmath.mpf(2) ** (-(precision // 4)):
            # spurious PSLQ output, not a genuine relation at working precision
            return PickWResult(wb, attempt + 1, values)
    raise ScreenFailure(f"no w passed the relation screen in {screen_budget} attempts")
