"""Brute-force reference solvers for desk-scale problems.

Everything here is deliberately independent of the production solvers: the
stationary reference works coordinate by coordinate with nested scalar
bisection (or a finite-difference Newton with multistarts once bisection
nesting gets too deep), the evolution reference diagonalizes the linear
operator, and the boundary-map reference eliminates interior nodes densely.
Shared pieces are data types only.
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass

import numpy as np

from .errors import (
    InvalidParameter,
    NonlinearCase,
    NumericalFailure,
    TooLarge,
)

_INF = float("inf")

MAX_ORACLE_NODES = 8
BISECT_TOL = 1e-12
MULTISTART_COUNT = 16
_MULTISTART_SEED = 16061


@dataclass(frozen=True)
class DenseInstance:
    """Dense copy of a small space, at most 8 nodes."""

    kernel: tuple
    nu: tuple

    def __post_init__(self):
        n = len(self.nu)
        if n > MAX_ORACLE_NODES:
            raise TooLarge("oracle instances are capped at %d nodes, got %d"
                           % (MAX_ORACLE_NODES, n))
        if len(self.kernel) != n or any(len(row) != n for row in self.kernel):
            raise InvalidParameter("kernel shape does not match nu")

    @classmethod
    def from_space(cls, space) -> "DenseInstance":
        return cls(
            kernel=tuple(tuple(float(v) for v in row) for row in space.kernel),
            nu=tuple(float(v) for v in space.nu),
        )

    @property
    def node_count(self) -> int:
        return len(self.nu)


# ---------------------------------------------------------------------------
# stationary reference
# ---------------------------------------------------------------------------

def _interval_fn(graph):
    """Fast scalar closure for the graph's value interval and domain."""
    els = graph.elements
    dom_lo, dom_hi = graph.domain
    knots = tuple(sorted(graph.jumps))

    def at(t):
        lo, hi = _INF, -_INF
        for el in els:
            if el.r0 <= t <= el.r1:
                if el.kind == "vertical":
                    if el.v0 < lo:
                        lo = el.v0
                    if el.v1 > hi:
                        hi = el.v1
                else:
                    if el.kind == "affine":
                        val = el.p + el.q * t
                    else:
                        val = el.p * math.copysign(abs(t) ** el.q, t)
                    if val < el.v0:
                        val = el.v0
                    elif val > el.v1:
                        val = el.v1
                    if val < lo:
                        lo = val
                    if val > hi:
                        hi = val
        return lo, hi

    return at, dom_lo, dom_hi, knots


def _node_tables(instance, problem):
    """Per-node neighbor lists, graph closures, and flux power."""
    n = instance.node_count
    omega2 = set(int(x) for x in problem.partition.omega2)
    q2 = problem.integration_set == "Q2"
    neighbors = []
    for x in range(n):
        row = instance.kernel[x]
        lst = []
        for y in range(n):
            if row[y] != 0.0 and y != x:
                if q2 and x in omega2 and y in omega2:
                    continue
                lst.append((y, row[y]))
        neighbors.append(lst)
    graphs = []
    for x in range(n):
        g = problem.beta if x in omega2 else problem.gamma
        graphs.append(_interval_fn(g))
    p = float(problem.flux.p)
    if p == 2.0:
        ap = lambda r: r  # noqa: E731
    else:
        pm1 = p - 1.0

        def ap(r):
            try:
                return math.copysign(abs(r) ** pm1, r)
            except OverflowError:
                return math.copysign(_INF, r)

    return neighbors, graphs, ap


def dense_gp_oracle(instance, problem, grid_resolution=64):
    """Reference stationary solve by nested bisection or multistart Newton.

    Parameters
    ----------
    instance : DenseInstance
        Dense copy of the space, at most 8 nodes.
    problem : StationaryProblem
        The problem to solve; its space must mirror ``instance``.
    grid_resolution : int
        Lattice points scanned to bracket the outermost unknown.

    Returns
    -------
    SolutionPair
        Reference solution with the inclusion gap in ``residual_inf``.
    """
    from .stationary import SolutionPair

    n = instance.node_count
    neighbors, graphs, ap = _node_tables(instance, problem)
    phi = [float(problem.phi[x]) for x in range(n)]
    lam = float(problem.lambda_scale)
    counter = [0]

    def psi(x, u):
        acc = 0.0
        ux = u[x]
        for y, mxy in neighbors[x]:
            acc += mxy * ap(u[y] - ux)
        counter[0] += 1
        return phi[x] + lam * acc

    def excess(x, u):
        s = psi(x, u)
        lo, hi = graphs[x][0](u[x])
        if s > hi:
            return s - hi
        if s < lo:
            return s - lo
        return 0.0

    scale = 1.0 + max(abs(v) for v in phi)

    if n <= 3:
        u = _nested_bisection(n, neighbors, graphs, excess, scale,
                              int(grid_resolution))
    else:
        u = _multistart_newton(n, graphs, psi, scale)

    u = _snap_breakpoints(u, graphs, psi)
    v = [psi(x, u) for x in range(n)]
    gap = _inclusion_gap(u, v, graphs, scale)
    if gap > 1e-9 * scale:
        raise NumericalFailure("oracle self-check failed: inclusion gap %g" % gap)
    return SolutionPair(
        u=np.array(u),
        v=np.array(v),
        residual_inf=gap,
        iterations=counter[0],
        schedule_trace=(),
    )


def _clip_bracket(graphs, x, half_width):
    _, dlo, dhi, _ = graphs[x]
    return max(dlo, -half_width), min(dhi, half_width)


def _nested_bisection(n, neighbors, graphs, excess, scale, grid_resolution):
    """Coordinates eliminated innermost-first; each level is monotone."""

    def solve_from(k, u):
        # fills u[k:] in place with the unique values solving their equations
        if k == n:
            return

        def level_excess(t):
            u[k] = t
            solve_from(k + 1, u)
            return excess(k, u)

        lo, hi = _clip_bracket(graphs, k, 64.0 * scale)
        _, dlo, dhi, _ = graphs[k]
        for _ in range(80):
            if lo == dlo or level_excess(lo) >= 0.0:
                break
            lo = max(dlo, 2.0 * lo - hi)
        for _ in range(80):
            if hi == dhi or level_excess(hi) <= 0.0:
                break
            hi = min(dhi, 2.0 * hi - lo)
        if k == 0 and grid_resolution > 1:
            step = (hi - lo) / grid_resolution
            if step > 0.0:
                t = lo
                for _ in range(grid_resolution):
                    if level_excess(t + step) <= 0.0:
                        lo, hi = t, t + step
                        break
                    t += step
        guard = 0
        while hi - lo > BISECT_TOL and guard < 200:
            mid = 0.5 * (lo + hi)
            if level_excess(mid) > 0.0:
                lo = mid
            else:
                hi = mid
            guard += 1
        level_excess(0.5 * (lo + hi))

    u = [0.0] * n
    solve_from(0, u)
    return u


def _multistart_newton(n, graphs, psi, scale):
    """Damped Newton with finite-difference Jacobian from seeded starts."""

    def theta(x, t):
        lo, hi = graphs[x][0](t)
        if lo != hi:
            raise InvalidParameter(
                "the Newton reference needs strictly increasing graphs"
            )
        return lo

    def residual(u):
        return [theta(x, u[x]) - psi(x, u) for x in range(n)]

    rng = random.Random(_MULTISTART_SEED)
    starts = [[0.0] * n]
    while len(starts) < MULTISTART_COUNT:
        starts.append([rng.gauss(0.0, scale) for _ in range(n)])
    tol = 1e-12 * scale
    for u0 in starts:
        u = list(u0)
        ok = _newton_run(u, residual, n, tol)
        if ok:
            return u
    raise NumericalFailure("no Newton start converged in the oracle")


def _newton_run(u, residual, n, tol):
    for _ in range(80):
        f = residual(u)
        norm = max(abs(v) for v in f)
        if norm <= tol:
            return True
        jac = np.empty((n, n))
        for j in range(n):
            h = 1e-7 * (1.0 + abs(u[j]))
            saved = u[j]
            u[j] = saved + h
            fj = residual(u)
            u[j] = saved
            for i in range(n):
                jac[i, j] = (fj[i] - f[i]) / h
        try:
            step = np.linalg.solve(jac + 1e-13 * np.eye(n), np.array(f))
        except np.linalg.LinAlgError:
            return False
        if not np.all(np.isfinite(step)):
            return False
        alpha = 1.0
        for _ in range(40):
            trial = [u[i] - alpha * step[i] for i in range(n)]
            try:
                fn = residual(trial)
            except (OverflowError, ValueError):
                alpha *= 0.5
                continue
            if max(abs(v) for v in fn) < norm * (1.0 - 1e-4 * alpha) + 1e-300:
                u[:] = trial
                break
            alpha *= 0.5
        else:
            return False
    return False


def _snap_breakpoints(u, graphs, psi):
    """Pull coordinates sitting within bisection noise of a jump onto it."""
    out = list(u)
    for x, t in enumerate(out):
        at = graphs[x][0]
        for bp in graphs[x][3]:
            if abs(t - bp) <= 1e-10 * (1.0 + abs(bp)):
                trial = list(out)
                trial[x] = bp
                s = psi(x, trial)
                jlo, jhi = at(bp)
                if jlo - 1e-12 <= s <= jhi + 1e-12:
                    out[x] = bp
                break
    return out


def _inclusion_gap(u, v, graphs, scale):
    gap = 0.0
    delta = 1e-10 * scale
    for x, t in enumerate(u):
        at, dlo, dhi, _ = graphs[x]
        lo = at(max(dlo, t - delta))[0]
        hi = at(min(dhi, t + delta))[1]
        if v[x] > hi:
            gap = max(gap, v[x] - hi)
        elif v[x] < lo:
            gap = max(gap, lo - v[x])
    return gap


# ---------------------------------------------------------------------------
# linear evolution reference
# ---------------------------------------------------------------------------

def _is_identity_graph(g) -> bool:
    els = g.elements
    return (
        len(els) == 1
        and els[0].kind == "affine"
        and els[0].p == 0.0
        and els[0].q == 1.0
    )


def _is_zero_graph(g) -> bool:
    els = g.elements
    return (
        len(els) == 1
        and els[0].kind == "affine"
        and els[0].p == 0.0
        and els[0].q == 0.0
    )


def _const_forcing(source, width, what):
    if source is None:
        return np.zeros(width)
    if callable(source) or isinstance(source, tuple):
        raise NonlinearCase(
            "the eigendecomposition reference needs constant forcing"
        )
    arr = np.asarray(source, dtype=float)
    if arr.shape != (width,):
        raise NonlinearCase("%s must be a length-%d vector" % (what, width))
    return arr


def _exp_phases(lam, t):
    z = lam * float(t)
    phase = np.exp(z)
    phi1 = np.where(
        np.abs(z) > 1e-8,
        np.expm1(z) / np.where(z == 0, 1, z),
        1.0 + 0.5 * z,
    )
    return phase, phi1


def linear_evolution_oracle(instance, problem, times):
    """Exact linear trajectory via eigendecomposition.

    Only covers the autonomous linear case: quadratic flux, constant
    forcing, and identity state graphs; a zero bulk graph with an
    identity boundary graph (the evolving boundary-flux case) is also
    accepted when the bulk carries no forcing. Solves the linear system
    on the partition exactly and returns the states at the requested
    times, one row per time, with zeros off the evolving support.
    """
    if float(problem.flux.p) != 2.0:
        raise NonlinearCase("the eigendecomposition reference needs exponent 2")
    n = instance.node_count
    o1 = np.asarray(problem.partition.omega1, dtype=int)
    o2 = np.asarray(problem.partition.omega2, dtype=int)
    if o2.size and not _is_identity_graph(problem.beta):
        raise NonlinearCase("the eigendecomposition reference needs an identity "
                            "boundary graph")
    gamma_zero = o1.size and _is_zero_graph(problem.gamma)
    if o1.size and not gamma_zero and not _is_identity_graph(problem.gamma):
        raise NonlinearCase("the eigendecomposition reference needs identity or "
                            "zero bulk graphs")
    omega = np.union1d(o1, o2)
    kernel = np.array(instance.kernel)[np.ix_(omega, omega)]
    nu = np.array(instance.nu)[omega]
    laplacian = np.diag(nu * kernel.sum(axis=1)) - nu[:, None] * kernel
    out = np.zeros((len(times), n))

    if gamma_zero:
        # instantaneous bulk lifting, dynamics on the boundary alone
        if o2.size == 0:
            raise NonlinearCase("a zero bulk graph needs a boundary part")
        f0 = _const_forcing(problem.f, o1.size, "f")
        if np.any(f0 != 0.0):
            raise NonlinearCase("the zero-bulk reference needs an unforced bulk")
        g0 = _const_forcing(problem.g, o2.size, "g")
        wpos = np.searchsorted(omega, o1)
        bpos = np.searchsorted(omega, o2)
        l_ww = laplacian[np.ix_(wpos, wpos)]
        l_wb = laplacian[np.ix_(wpos, bpos)]
        l_bw = laplacian[np.ix_(bpos, wpos)]
        l_bb = laplacian[np.ix_(bpos, bpos)]
        schur = l_bb - l_bw @ np.linalg.solve(l_ww, l_wb)
        half = np.sqrt(nu[bpos])
        sym = -schur / np.outer(half, half)
        lam, q = np.linalg.eigh(0.5 * (sym + sym.T))
        y0 = q.T @ (half * np.asarray(problem.w0, dtype=float))
        yg = q.T @ (half * g0)
        for i, t in enumerate(times):
            phase, phi1 = _exp_phases(lam, t)
            y = phase * y0 + float(t) * phi1 * yg
            out[i, o2] = (q @ y) / half
        return out

    state0 = np.zeros(omega.size)
    forcing = np.zeros(omega.size)
    if o1.size:
        state0[np.searchsorted(omega, o1)] = np.asarray(problem.v0, dtype=float)
        forcing[np.searchsorted(omega, o1)] = _const_forcing(
            problem.f, o1.size, "f"
        )
    if o2.size:
        state0[np.searchsorted(omega, o2)] = np.asarray(problem.w0, dtype=float)
        forcing[np.searchsorted(omega, o2)] = _const_forcing(
            problem.g, o2.size, "g"
        )
    half = np.sqrt(nu)
    sym = -laplacian / np.outer(half, half)
    lam, q = np.linalg.eigh(0.5 * (sym + sym.T))
    y0 = q.T @ (half * state0)
    yf = q.T @ (half * forcing)
    for i, t in enumerate(times):
        phase, phi1 = _exp_phases(lam, t)
        y = phase * y0 + float(t) * phi1 * yf
        out[i, omega] = (q @ y) / half
    return out


# ---------------------------------------------------------------------------
# boundary map reference
# ---------------------------------------------------------------------------

def schur_dtn_oracle(instance, W):
    """Dense Schur complement of the weighted Laplacian on the closure of W.

    Eliminates the interior nodes and returns the matrix acting on boundary
    values, ordered by sorted boundary index.
    """
    n = instance.node_count
    kernel = np.array(instance.kernel)
    nu = np.array(instance.nu)
    w_nodes = sorted(set(int(x) for x in W))
    if any(x < 0 or x >= n for x in w_nodes):
        raise InvalidParameter("W contains node indices outside the space")
    in_w = np.zeros(n, dtype=bool)
    in_w[w_nodes] = True
    reach = kernel[:, w_nodes].sum(axis=1)
    boundary = sorted(x for x in range(n) if not in_w[x] and reach[x] > 0.0)
    closure = w_nodes + boundary
    idx = {x: i for i, x in enumerate(closure)}
    m = len(closure)
    lap = np.zeros((m, m))
    for x in closure:
        i = idx[x]
        row = kernel[x]
        inside = sum(row[y] for y in closure)
        lap[i, i] = nu[x] * inside
        for y in closure:
            if y != x:
                lap[i, idx[y]] -= nu[x] * row[y]
    k = len(w_nodes)
    l_ww = lap[:k, :k]
    l_wb = lap[:k, k:]
    l_bw = lap[k:, :k]
    l_bb = lap[k:, k:]
    if k == 0:
        return l_bb
    return l_bb - l_bw @ np.linalg.solve(l_ww, l_wb)
