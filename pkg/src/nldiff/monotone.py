"""Maximal monotone graphs on the real line with 0 in the graph at 0.

A graph is stored as an ordered path of elements, each covering a closed
box in the (r, v) plane:

* ``affine``   v = a + b*r with b >= 0 on an r-interval,
* ``power``    v = c*sign(r)*|r|**e with c, e > 0 on an r-interval,
* ``vertical`` a jump or ray: fixed r, v running over an interval.

Consecutive elements share a corner, the first corner sits at r or v equal
to -inf and the last at +inf, which is exactly maximality.  Corner values
are stored explicitly so that constructions (inverses, splits, obstacles)
stay bit-consistent.

Resolvents and regularized evaluations never subtract nearly equal
quantities: each element has a closed form, or a monotone bisection whose
accuracy is independent of the regularization parameter.
"""
from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from .errors import InvalidParameter, NumericalFailure

_INF = float("inf")


class El(NamedTuple):
    kind: str  # "affine" | "power" | "vertical"
    r0: float
    r1: float
    v0: float
    v1: float
    p: float  # affine: a;  power: c;  vertical: unused (0.0)
    q: float  # affine: b;  power: e;  vertical: unused (0.0)


def _affine(r0, r1, a, b):
    return El("affine", float(r0), float(r1), _aff_val(a, b, r0), _aff_val(a, b, r1),
              float(a), float(b))


def _aff_val(a, b, r):
    if math.isinf(r):
        if b == 0.0:
            return float(a)
        return _INF if r > 0 else -_INF
    return float(a) + float(b) * float(r)


def _pow_val(c, e, r):
    if r == 0.0:
        return 0.0
    if math.isinf(r):
        return _INF if r > 0 else -_INF
    return float(c) * math.copysign(abs(float(r)) ** float(e), float(r))


def _power(r0, r1, c, e):
    return El("power", float(r0), float(r1), _pow_val(c, e, r0), _pow_val(c, e, r1),
              float(c), float(e))


def _vertical(t, v0, v1):
    return El("vertical", float(t), float(t), float(v0), float(v1), 0.0, 0.0)


class MonotoneGraph:
    """Piecewise representation of a maximal monotone graph.

    Most callers build instances through the ``make_*`` helpers or
    :func:`from_config` rather than from raw elements.
    """

    __slots__ = (
        "elements",
        "domain",
        "range_inf",
        "range_sup",
        "breakpoints",
        "jumps",
        "_corner_r",
        "_corner_v",
        "_plus",
        "_minus",
        "_inv",
    )

    def __init__(self, elements):
        els = []
        for el in elements:
            el = El(*el)
            if el.kind == "power" and el.q == 1.0:
                el = El("affine", el.r0, el.r1, el.v0, el.v1, 0.0, el.p)
            els.append(el)
        if not els:
            raise InvalidParameter("graph needs at least one element")
        for el in els:
            if el.kind == "vertical":
                if not math.isfinite(el.r0) or el.r0 != el.r1:
                    raise InvalidParameter("vertical element needs a finite knot")
                if not el.v0 < el.v1:
                    raise InvalidParameter("vertical element needs v0 < v1")
            elif el.kind == "affine":
                if not el.r0 < el.r1:
                    raise InvalidParameter("affine element needs r0 < r1")
                if not (math.isfinite(el.p) and math.isfinite(el.q) and el.q >= 0):
                    raise InvalidParameter("affine element needs finite a, b >= 0")
            elif el.kind == "power":
                if not el.r0 < el.r1:
                    raise InvalidParameter("power element needs r0 < r1")
                if not (el.p > 0 and math.isfinite(el.p) and el.q > 0
                        and math.isfinite(el.q)):
                    raise InvalidParameter("power element needs c, e > 0")
            else:
                raise InvalidParameter("unknown element kind %r" % (el.kind,))
        for left, right in zip(els, els[1:]):
            if not (left.r1 == right.r0 and left.v1 == right.v0):
                raise InvalidParameter(
                    "elements do not chain: %s then %s" % (left, right)
                )
        first, last = els[0], els[-1]
        if not (math.isinf(first.r0) or math.isinf(first.v0)):
            raise InvalidParameter("graph is not maximal at the lower end")
        if not (math.isinf(last.r1) or math.isinf(last.v1)):
            raise InvalidParameter("graph is not maximal at the upper end")
        self.elements = tuple(els)
        self.domain = (first.r0, last.r1)
        self.range_inf = first.v0
        self.range_sup = last.v1
        self.breakpoints = tuple(
            el.r0 for el in els if el.kind == "vertical" and math.isfinite(el.v0)
            and math.isfinite(el.v1)
        )
        self.jumps = {
            el.r0: (el.v0, el.v1)
            for el in els
            if el.kind == "vertical"
        }
        self._corner_r = np.array([first.r0] + [el.r1 for el in els])
        self._corner_v = np.array([first.v0] + [el.v1 for el in els])
        self._plus = None
        self._minus = None
        self._inv = None
        lo, hi = self.interval(0.0) if self.domain[0] <= 0.0 <= self.domain[1] else (1, 1)
        if not (lo <= 0.0 <= hi):
            raise InvalidParameter("graph must contain (0, 0)")

    # -- basic queries ------------------------------------------------------

    def interval(self, r) -> tuple[float, float]:
        """Closed value interval at r; raises outside the domain."""
        r = float(r)
        if r < self.domain[0] or r > self.domain[1]:
            raise InvalidParameter("r=%g outside domain %s" % (r, self.domain))
        lo, hi = _INF, -_INF
        for el in self.elements:
            if el.r0 <= r <= el.r1:
                if el.kind == "vertical":
                    lo, hi = min(lo, el.v0), max(hi, el.v1)
                else:
                    val = self._piece_at(el, r)
                    lo, hi = min(lo, val), max(hi, val)
        return lo, hi

    @staticmethod
    def _piece_at(el: El, r: float) -> float:
        if el.kind == "affine":
            val = _aff_val(el.p, el.q, r)
        else:
            val = _pow_val(el.p, el.q, r)
        return min(max(val, el.v0), el.v1)

    def minimal_section(self, s) -> float:
        s = float(s)
        if s < self.domain[0]:
            return -_INF
        if s > self.domain[1]:
            return _INF
        lo, hi = self.interval(s)
        if lo > 0.0:
            return lo
        if hi < 0.0:
            return hi
        return 0.0

    def range_bounds(self) -> tuple[float, float]:
        return self.range_inf, self.range_sup

    def is_strictly_increasing_surjective(self) -> bool:
        """True when the graph is a strictly increasing bijection of the line."""
        if self.domain != (-_INF, _INF):
            return False
        if (self.range_inf, self.range_sup) != (-_INF, _INF):
            return False
        for el in self.elements:
            if el.kind == "vertical":
                return False
            if el.kind == "affine" and el.q == 0.0:
                return False
        return True

    def value_slope(self, r):
        """Value and one-sided slope for function-like graphs (no jumps)."""
        r = np.asarray(r, dtype=float)
        idx = np.clip(
            np.searchsorted(self._corner_r[1:-1], r, side="right"),
            0,
            len(self.elements) - 1,
        )
        val = np.empty_like(r)
        slope = np.empty_like(r)
        for i, el in enumerate(self.elements):
            m = idx == i
            if not np.any(m):
                continue
            if el.kind == "vertical":
                raise InvalidParameter("value_slope needs a function-like graph")
            rm = r[m]
            if el.kind == "affine":
                val[m] = np.clip(el.p + el.q * rm, el.v0, el.v1)
                slope[m] = el.q
            else:
                val[m] = np.clip(
                    el.p * np.sign(rm) * np.abs(rm) ** el.q, el.v0, el.v1
                )
                with np.errstate(divide="ignore", over="ignore"):
                    slope[m] = el.p * el.q * np.abs(rm) ** (el.q - 1.0)
        return val, np.minimum(slope, 1e300)

    # -- resolvent and regularized evaluation --------------------------------

    def _regions(self, mu):
        with np.errstate(invalid="ignore"):
            sc = self._corner_r + mu * self._corner_v
        # corners are monotone in both coordinates, so sc is sorted
        return sc

    def resolvent(self, mu, s):
        """Solve s in r + mu*graph(r) for r; nonexpansive in s."""
        if mu <= 0:
            raise InvalidParameter("mu must be positive")
        scalar = np.isscalar(s) or np.ndim(s) == 0
        s = np.atleast_1d(np.asarray(s, dtype=float))
        sc = self._regions(mu)
        idx = np.clip(
            np.searchsorted(sc[1:-1], s, side="right"), 0, len(self.elements) - 1
        )
        out = np.empty_like(s)
        for i, el in enumerate(self.elements):
            m = idx == i
            if not np.any(m):
                continue
            sm = s[m]
            if el.kind == "vertical":
                out[m] = el.r0
            elif el.kind == "affine":
                out[m] = np.clip((sm - mu * el.p) / (1.0 + mu * el.q), el.r0, el.r1)
            else:
                out[m] = _bisect_resolvent_power(el, mu, sm)
        return float(out[0]) if scalar else out

    def yosida(self, lam, s):
        val, _ = self._yosida_impl(lam, s, want_slope=False)
        return val

    def yosida_slope(self, lam, s):
        """Regularized value together with a one-sided derivative in s."""
        return self._yosida_impl(lam, s, want_slope=True)

    def _yosida_impl(self, lam, s, want_slope):
        if lam <= 0:
            raise InvalidParameter("lambda must be positive")
        scalar = np.isscalar(s) or np.ndim(s) == 0
        s = np.atleast_1d(np.asarray(s, dtype=float))
        mu = 1.0 / lam
        sc = self._regions(mu)
        idx = np.clip(
            np.searchsorted(sc[1:-1], s, side="right"), 0, len(self.elements) - 1
        )
        out = np.empty_like(s)
        slope = np.empty_like(s) if want_slope else None
        for i, el in enumerate(self.elements):
            m = idx == i
            if not np.any(m):
                continue
            sm = s[m]
            if el.kind == "vertical":
                raw = lam * (sm - el.r0)
                out[m] = np.clip(raw, el.v0, el.v1)
                if want_slope:
                    slope[m] = np.where((raw > el.v0) & (raw < el.v1), lam, 0.0)
            elif el.kind == "affine":
                out[m] = np.clip(
                    (el.p + el.q * sm) / (1.0 + mu * el.q), el.v0, el.v1
                )
                if want_slope:
                    slope[m] = el.q / (1.0 + mu * el.q)
            else:
                w = _bisect_yosida_power(el, mu, sm)
                out[m] = w
                if want_slope:
                    r = sm - mu * w
                    with np.errstate(divide="ignore", over="ignore"):
                        t = el.p * el.q * np.abs(r) ** (el.q - 1.0)
                    slope[m] = np.where(t > 1e300, lam, t / (1.0 + mu * t))
        if scalar:
            return (float(out[0]), float(slope[0]) if want_slope else None)
        return out, slope

    # -- integration ----------------------------------------------------------

    def primitive(self, r) -> float:
        """Integral of the minimal section from 0 to r; +inf outside the domain."""
        r = float(r)
        if math.isnan(r):
            raise InvalidParameter("r must not be NaN")
        if r < self.domain[0] or r > self.domain[1]:
            return _INF
        if r == 0.0:
            return 0.0
        lo, hi = (r, 0.0) if r < 0 else (0.0, r)
        sign = -1.0 if r < 0 else 1.0
        total = 0.0
        for el in self.elements:
            if el.kind == "vertical":
                continue
            a = max(el.r0, lo)
            b = min(el.r1, hi)
            if a >= b:
                continue
            total += _piece_integral(el, a, b)
            if math.isinf(total):
                break
        return sign * total

    def inverse(self) -> "MonotoneGraph":
        if self._inv is None:
            els = []
            for el in self.elements:
                if el.kind == "vertical":
                    els.append(El("affine", el.v0, el.v1, el.r0, el.r1, el.r0, 0.0))
                elif el.kind == "affine":
                    if el.q == 0.0:
                        els.append(El("vertical", el.p, el.p, el.r0, el.r1, 0.0, 0.0))
                    else:
                        els.append(
                            El("affine", el.v0, el.v1, el.r0, el.r1,
                               -el.p / el.q, 1.0 / el.q)
                        )
                else:
                    els.append(
                        El("power", el.v0, el.v1, el.r0, el.r1,
                           el.p ** (-1.0 / el.q), 1.0 / el.q)
                    )
            self._inv = MonotoneGraph(els)
        return self._inv

    def conjugate(self, v) -> float:
        """Convex conjugate of the primitive, as the inverse graph's primitive."""
        return self.inverse().primitive(v)

    # -- derived graphs --------------------------------------------------------

    def split_plus(self) -> "MonotoneGraph":
        if self._plus is None:
            top = self.interval(0.0)[1]
            els = [_affine(-_INF, 0.0, 0.0, 0.0)]
            if top > 0.0:
                els.append(_vertical(0.0, 0.0, top))
            els.extend(_path_from(self.elements, 0.0, top))
            self._plus = MonotoneGraph(els)
        return self._plus

    def split_minus(self) -> "MonotoneGraph":
        if self._minus is None:
            bot = self.interval(0.0)[0]
            els = list(_path_to(self.elements, 0.0, bot))
            if bot < 0.0:
                els.append(_vertical(0.0, bot, 0.0))
            els.append(_affine(0.0, _INF, 0.0, 0.0))
            self._minus = MonotoneGraph(els)
        return self._minus

    def scale_values(self, factor) -> "MonotoneGraph":
        """Vertical scaling r -> factor * graph(r) for factor > 0."""
        factor = float(factor)
        if not factor > 0:
            raise InvalidParameter("scale factor must be positive")
        els = []
        for el in self.elements:
            if el.kind == "affine":
                els.append(El("affine", el.r0, el.r1, factor * el.v0,
                              factor * el.v1, factor * el.p, factor * el.q))
            elif el.kind == "power":
                els.append(El("power", el.r0, el.r1, factor * el.v0,
                              factor * el.v1, factor * el.p, el.q))
            else:
                els.append(El("vertical", el.r0, el.r1, factor * el.v0,
                              factor * el.v1, 0.0, 0.0))
        return MonotoneGraph(els)

    def __repr__(self):
        return "MonotoneGraph(domain=%s, range=(%g, %g), jumps=%d)" % (
            self.domain,
            self.range_inf,
            self.range_sup,
            len(self.jumps),
        )


# ---------------------------------------------------------------------------
# element helpers
# ---------------------------------------------------------------------------

def _clip_el(el: El, r0, r1, v0, v1) -> El:
    return El(el.kind, r0, r1, v0, v1, el.p, el.q)


def _path_from(elements, r_cut, v_cut):
    """The part of the path strictly after the corner (r_cut, v_cut)."""
    out = []
    for el in elements:
        if el.r1 < r_cut or (el.r1 == r_cut and el.kind != "vertical"):
            continue
        if el.kind == "vertical":
            if el.r0 < r_cut or el.v1 <= v_cut:
                continue
            if el.r0 == r_cut:
                if el.v0 < v_cut:
                    out.append(_clip_el(el, el.r0, el.r1, v_cut, el.v1))
                else:
                    out.append(el)
            else:
                out.append(el)
        else:
            if el.r0 < r_cut:
                val = MonotoneGraph._piece_at(el, r_cut)
                out.append(_clip_el(el, r_cut, el.r1, val, el.v1))
            else:
                out.append(el)
    return out


def _path_to(elements, r_cut, v_cut):
    """The part of the path strictly before the corner (r_cut, v_cut)."""
    out = []
    for el in elements:
        if el.r0 > r_cut or (el.r0 == r_cut and el.kind != "vertical"):
            continue
        if el.kind == "vertical":
            if el.r0 > r_cut or el.v0 >= v_cut:
                continue
            if el.r0 == r_cut:
                if el.v1 > v_cut:
                    out.append(_clip_el(el, el.r0, el.r1, el.v0, v_cut))
                else:
                    out.append(el)
            else:
                out.append(el)
        else:
            if el.r1 > r_cut:
                val = MonotoneGraph._piece_at(el, r_cut)
                out.append(_clip_el(el, el.r0, r_cut, el.v0, val))
            else:
                out.append(el)
    return out


def _piece_integral(el: El, a, b) -> float:
    """Integral of the piece value over [a, b] with a < b."""
    if math.isinf(a) or math.isinf(b):
        if el.kind == "affine" and el.p == 0.0 and el.q == 0.0:
            return 0.0
        # the overlap sits on one side of 0, where the sign is constant
        return _INF if (math.isinf(b) and b > 0) or a >= 0 else -_INF
    if el.kind == "affine":
        return el.p * (b - a) + 0.5 * el.q * (b * b - a * a)
    ep1 = el.q + 1.0
    return el.p * (abs(b) ** ep1 - abs(a) ** ep1) / ep1


def _bisect_yosida_power(el: El, mu, s):
    """Root of w = piece(s - mu*w) on a power piece, to absolute precision."""
    r_near = np.clip(0.0, el.r0, el.r1)
    r_far = np.clip(s, el.r0, el.r1)
    wa = el.p * np.sign(r_near) * np.abs(r_near) ** el.q
    wb = el.p * np.sign(r_far) * np.abs(r_far) ** el.q
    # the root lies in the value-side bracket and in the resolvent-side
    # bracket; their intersection is never much wider than the root itself
    ra = (s - r_near) / mu
    rb = (s - r_far) / mu
    lo = np.maximum(np.minimum(wa, wb), np.minimum(ra, rb))
    hi = np.minimum(np.maximum(wa, wb), np.maximum(ra, rb))
    for _ in range(110):
        mid = 0.5 * (lo + hi)
        r = s - mu * mid
        h = mid - el.p * np.sign(r) * np.abs(r) ** el.q
        take_hi = h > 0
        hi = np.where(take_hi, mid, hi)
        lo = np.where(take_hi, lo, mid)
    w = 0.5 * (lo + hi)
    for _ in range(3):
        r = s - mu * w
        with np.errstate(divide="ignore", over="ignore"):
            t = np.minimum(el.p * el.q * np.abs(r) ** (el.q - 1.0), 1e300)
        h = w - el.p * np.sign(r) * np.abs(r) ** el.q
        w = np.clip(w - h / (1.0 + mu * t), lo, hi)
    return np.clip(w, el.v0, el.v1)


def _bisect_resolvent_power(el: El, mu, s):
    """Root of r + mu*piece(r) = s on a power piece.

    Runs the bracket all the way down: an early width-based stop loses
    value accuracy for exponents below one, where piece(r) amplifies
    tiny errors in r near the origin.
    """
    lo = np.minimum(np.clip(0.0, el.r0, el.r1), np.clip(s, el.r0, el.r1))
    hi = np.maximum(np.clip(0.0, el.r0, el.r1), np.clip(s, el.r0, el.r1))
    for _ in range(110):
        mid = 0.5 * (lo + hi)
        h = mid + mu * el.p * np.sign(mid) * np.abs(mid) ** el.q - s
        take_hi = h > 0
        hi = np.where(take_hi, mid, hi)
        lo = np.where(take_hi, lo, mid)
    return np.clip(0.5 * (lo + hi), el.r0, el.r1)


# ---------------------------------------------------------------------------
# builders
# ---------------------------------------------------------------------------

def make_identity() -> MonotoneGraph:
    return MonotoneGraph([_affine(-_INF, _INF, 0.0, 1.0)])


def make_zero() -> MonotoneGraph:
    """The graph of the zero map: every r maps to 0."""
    return MonotoneGraph([_affine(-_INF, _INF, 0.0, 0.0)])


def make_stefan(latent) -> MonotoneGraph:
    """Identity below 0, a jump of height ``latent`` at 0, shifted identity above."""
    latent = float(latent)
    if not latent > 0:
        raise InvalidParameter("latent must be positive")
    return MonotoneGraph(
        [
            _affine(-_INF, 0.0, 0.0, 1.0),
            _vertical(0.0, 0.0, latent),
            _affine(0.0, _INF, latent, 1.0),
        ]
    )


def make_hele_shaw() -> MonotoneGraph:
    """Zero below 0, the full unit jump at 0, one above."""
    return MonotoneGraph(
        [
            _affine(-_INF, 0.0, 0.0, 0.0),
            _vertical(0.0, 0.0, 1.0),
            _affine(0.0, _INF, 1.0, 0.0),
        ]
    )


def make_power(s) -> MonotoneGraph:
    """Odd power map r -> |r|**(s-1) * r."""
    s = float(s)
    if not s > 0:
        raise InvalidParameter("exponent must be positive")
    if s == 1.0:
        return make_identity()
    return MonotoneGraph([_power(-_INF, _INF, 1.0, s)])


def make_obstacle(lo, hi, inner: MonotoneGraph) -> MonotoneGraph:
    """Restrict ``inner`` to [lo, hi] and complete with vertical rays."""
    lo, hi = float(lo), float(hi)
    if not (lo <= 0.0 <= hi):
        raise InvalidParameter("obstacle interval must contain 0")
    if lo == hi:
        return MonotoneGraph([_vertical(0.0, -_INF, _INF)])
    dlo, dhi = inner.domain
    if lo < dlo or hi > dhi:
        raise InvalidParameter("inner graph must cover the obstacle interval")
    els = []
    if math.isfinite(lo):
        top_at_lo = inner.interval(lo)[1]
        els.append(_vertical(lo, -_INF, top_at_lo))
        els.extend(el for el in _path_from(inner.elements, lo, top_at_lo)
                   if el.r0 < hi or (el.kind == "vertical" and el.r0 <= hi))
    else:
        els.extend(el for el in inner.elements)
    if math.isfinite(hi):
        bot_at_hi = inner.interval(hi)[0]
        els = list(_path_to(els, hi, bot_at_hi))
        els.append(_vertical(hi, bot_at_hi, _INF))
    return MonotoneGraph(els)


def from_config(cfg) -> MonotoneGraph:
    """Build a graph from a config mapping (see README for the schema)."""
    kind = cfg.get("type")
    if kind == "identity":
        return make_identity()
    if kind == "zero":
        return make_zero()
    if kind == "stefan":
        return make_stefan(cfg.get("latent", 1.0))
    if kind == "hele_shaw":
        return make_hele_shaw()
    if kind == "power":
        return make_power(cfg["exponent"])
    if kind == "obstacle":
        inner = from_config(cfg.get("inner", {"type": "identity"}))
        return make_obstacle(_ext(cfg.get("lo", -_INF)), _ext(cfg.get("hi", _INF)),
                             inner)
    if kind == "piecewise":
        els = []
        for piece in cfg["elements"]:
            pk = piece["kind"]
            if pk == "affine":
                els.append(_affine(_ext(piece["lo"]), _ext(piece["hi"]),
                                   piece["a"], piece["b"]))
            elif pk == "power":
                els.append(_power(_ext(piece["lo"]), _ext(piece["hi"]),
                                  piece["c"], piece["e"]))
            elif pk == "vertical":
                els.append(_vertical(piece["at"], _ext(piece["lo"]),
                                     _ext(piece["hi"])))
            else:
                raise InvalidParameter("unknown piece kind %r" % (pk,))
        return MonotoneGraph(els)
    raise InvalidParameter("unknown graph type %r" % (kind,))


def _ext(x) -> float:
    if isinstance(x, str):
        if x in ("inf", "+inf", "Infinity"):
            return _INF
        if x in ("-inf", "-Infinity"):
            return -_INF
        raise InvalidParameter("cannot parse extended real %r" % (x,))
    return float(x)


# ---------------------------------------------------------------------------
# free-function interface
# ---------------------------------------------------------------------------

def resolvent(g: MonotoneGraph, mu, s):
    return g.resolvent(mu, s)


def yosida(g: MonotoneGraph, lam, s):
    return g.yosida(lam, s)


def split_plus(g: MonotoneGraph) -> MonotoneGraph:
    return g.split_plus()


def split_minus(g: MonotoneGraph) -> MonotoneGraph:
    return g.split_minus()


def minimal_section(g: MonotoneGraph, s) -> float:
    return g.minimal_section(s)


def primitive(g: MonotoneGraph, r) -> float:
    return g.primitive(r)


def conjugate(g: MonotoneGraph, v) -> float:
    return g.conjugate(v)


def range_bounds(g: MonotoneGraph) -> tuple[float, float]:
    return g.range_bounds()
