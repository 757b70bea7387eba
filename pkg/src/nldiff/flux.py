"""Odd monotone flux functions and the nonlocal operators built on them.

A flux assigns to every node pair and every difference r an antisymmetric,
strictly monotone value with power-type growth and coercivity. The
operators here are plain weighted sums against the walk kernel: divergence
over a node set and the two flavors of Neumann boundary derivative.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    InvalidExponent,
    InvalidParameter,
    MissingValues,
    WeightOutOfRange,
)
from .space import m_boundary, m_closure, pair_mask

_VALIDATION_TRIPLES = 1000
_VALIDATION_SEED = 424243


@dataclass(frozen=True)
class LerayLionsFlux:
    """Flux function a(x, y, r) with growth and coercivity constants.

    Attributes
    ----------
    p : float
        Growth exponent, strictly above 1.
    kind : str
        One of "p_laplacian", "weighted", "custom".
    c_p, C_p : float
        Coercivity and growth constants: a(x,y,r)·r >= c_p·|r|**p and
        |a(x,y,r)| <= C_p·(1+|r|**(p-1)).
    phi : ndarray or None
        Node weights for the weighted kind.
    evaluator : callable or None
        Custom evaluator with signature (x, y, r) -> value, broadcastable.
    """

    p: float
    kind: str
    c_p: float
    C_p: float
    phi: np.ndarray | None = None
    evaluator: object = None
    _pair_dependent: bool = field(default=False, repr=False)

    def evaluate(self, x, y, r):
        """a(x, y, r) with numpy broadcasting over all three arguments."""
        r = np.asarray(r, dtype=float)
        if self.kind == "p_laplacian":
            return _odd_power(r, self.p - 1.0)
        if self.kind == "weighted":
            w = 0.5 * (self.phi[np.asarray(x)] + self.phi[np.asarray(y)])
            return w * _odd_power(r, self.p - 1.0)
        return np.asarray(self.evaluator(x, y, r), dtype=float)

    def slope(self, x, y, r, floor=1e-12):
        """Derivative of r -> a(x, y, r), floored away from 0 for p < 2."""
        r = np.asarray(r, dtype=float)
        base = np.maximum(np.abs(r), floor)
        if self.kind == "p_laplacian":
            return (self.p - 1.0) * base ** (self.p - 2.0)
        if self.kind == "weighted":
            w = 0.5 * (self.phi[np.asarray(x)] + self.phi[np.asarray(y)])
            return w * (self.p - 1.0) * base ** (self.p - 2.0)
        h = 1e-7 * (1.0 + np.abs(r))
        return (self.evaluate(x, y, r + h) - self.evaluate(x, y, r - h)) / (2.0 * h)


def _odd_power(r, e):
    return np.sign(r) * np.abs(r) ** e


def p_laplacian_flux(p) -> LerayLionsFlux:
    """Flux a(x,y,r) = |r|**(p-2)·r with unit constants."""
    p = float(p)
    if not p > 1.0:
        raise InvalidExponent("flux exponent must exceed 1, got %g" % p)
    return LerayLionsFlux(p=p, kind="p_laplacian", c_p=1.0, C_p=1.0)


def weighted_flux(p, phi) -> LerayLionsFlux:
    """Flux ((phi_x + phi_y)/2)·|r|**(p-2)·r for positive bounded weights."""
    p = float(p)
    if not p > 1.0:
        raise InvalidExponent("flux exponent must exceed 1, got %g" % p)
    phi = np.asarray(phi, dtype=float)
    if phi.ndim != 1 or phi.size == 0:
        raise WeightOutOfRange("weights must form a nonempty node vector")
    if not np.all(np.isfinite(phi)) or np.min(phi) <= 0.0:
        raise WeightOutOfRange("weights must be finite and strictly positive")
    return LerayLionsFlux(
        p=p,
        kind="weighted",
        c_p=float(np.min(phi)),
        C_p=float(np.max(phi)),
        phi=phi.copy(),
        _pair_dependent=True,
    )


def custom_flux(p, evaluator, c_p, C_p, node_hint=8) -> LerayLionsFlux:
    """Wrap a user evaluator after checking the structural conditions.

    The evaluator is probed on sampled (x, y, r) triples for antisymmetry,
    strict monotonicity, growth against C_p, coercivity against c_p, and
    the sign condition; construction fails on any violation.
    """
    p = float(p)
    if not p > 1.0:
        raise InvalidExponent("flux exponent must exceed 1, got %g" % p)
    if not (c_p > 0 and C_p > 0):
        raise InvalidParameter("constants c_p, C_p must be positive")
    rng = np.random.default_rng(_VALIDATION_SEED)
    xs = rng.integers(0, node_hint, _VALIDATION_TRIPLES)
    ys = rng.integers(0, node_hint, _VALIDATION_TRIPLES)
    rs = rng.standard_normal(_VALIDATION_TRIPLES) * 10.0 ** rng.integers(
        -4, 4, _VALIDATION_TRIPLES
    )
    a = np.asarray(evaluator(xs, ys, rs), dtype=float)
    a_flip = np.asarray(evaluator(ys, xs, -rs), dtype=float)
    tol = 1e-10 * (1.0 + np.abs(a))
    if not np.all(np.abs(a + a_flip) <= tol):
        raise InvalidParameter("custom flux is not antisymmetric on samples")
    ss = rs * rng.uniform(0.2, 0.8, rs.shape) + rng.standard_normal(rs.shape)
    b = np.asarray(evaluator(xs, ys, ss), dtype=float)
    gap = (a - b) * (rs - ss)
    if not np.all(gap[rs != ss] > 0.0):
        raise InvalidParameter("custom flux is not strictly monotone on samples")
    if not np.all(np.abs(a) <= C_p * (1.0 + np.abs(rs) ** (p - 1.0)) * (1 + 1e-10)):
        raise InvalidParameter("custom flux violates the stated growth bound")
    if not np.all(a * rs >= c_p * np.abs(rs) ** p * (1 - 1e-10)):
        raise InvalidParameter("custom flux violates the stated coercivity bound")
    zero = np.asarray(evaluator(xs[:1], ys[:1], np.zeros(1)), dtype=float)
    if not np.all(zero == 0.0):
        raise InvalidParameter("custom flux must vanish at r = 0")
    return LerayLionsFlux(
        p=p, kind="custom", c_p=float(c_p), C_p=float(C_p),
        evaluator=evaluator, _pair_dependent=True,
    )


# ---------------------------------------------------------------------------
# nonlocal operators
# ---------------------------------------------------------------------------

def _checked_vector(space, u, nodes, what="u"):
    u = np.asarray(u, dtype=float)
    if u.shape != (space.node_count,):
        raise MissingValues(
            "%s must be a length-%d node vector, got shape %s"
            % (what, space.node_count, u.shape)
        )
    if not np.all(np.isfinite(u[nodes])):
        raise MissingValues("%s has non-finite entries on the requested nodes" % what)
    return u


def divergence(space, flux, u, Omega=None):
    """Weighted flux balance at each node of Omega, summed over Omega.

    Returns the vector ((div u)(x))_{x in sorted(Omega)} with
    (div u)(x) = sum_y m[x, y] * a(x, y, u[y] - u[x]) over y in Omega.
    """
    omega = (
        np.arange(space.node_count)
        if Omega is None
        else space.node_set(Omega)
    )
    u = _checked_vector(space, u, omega)
    sub = space.kernel[np.ix_(omega, omega)]
    du = u[omega][None, :] - u[omega][:, None]
    vals = flux.evaluate(omega[:, None], omega[None, :], du)
    return (sub * vals).sum(axis=1)


def neumann_n1(space, flux, u, W):
    """Boundary flux against the whole closure of W, on the m-boundary."""
    bd = m_boundary(space, W)
    cl = m_closure(space, W)
    u = _checked_vector(space, u, cl)
    if bd.size == 0:
        return np.zeros(0)
    sub = space.kernel[np.ix_(bd, cl)]
    du = u[cl][None, :] - u[bd][:, None]
    vals = flux.evaluate(bd[:, None], cl[None, :], du)
    return -(sub * vals).sum(axis=1)


def neumann_n2(space, flux, u, W):
    """Boundary flux against W only, on the m-boundary."""
    bd = m_boundary(space, W)
    w_nodes = space.node_set(W)
    u = _checked_vector(space, u, m_closure(space, W))
    if bd.size == 0:
        return np.zeros(0)
    sub = space.kernel[np.ix_(bd, w_nodes)]
    du = u[w_nodes][None, :] - u[bd][:, None]
    vals = flux.evaluate(bd[:, None], w_nodes[None, :], du)
    return -(sub * vals).sum(axis=1)


def pairing_identity(space, flux, u, w, Omega, integration_set):
    """Both sides of the summation-by-parts identity on the chosen pair set.

    Returns (lhs, rhs) where lhs pairs w against the divergence and rhs is
    half the double sum of flux values against differences of w.
    """
    omega = space.node_set(Omega)
    u = _checked_vector(space, u, omega)
    w = _checked_vector(space, w, omega, what="w")
    mask = pair_mask(space, omega, integration_set)
    sub = space.kernel[np.ix_(omega, omega)] * mask
    du = u[omega][None, :] - u[omega][:, None]
    dw = w[omega][None, :] - w[omega][:, None]
    vals = flux.evaluate(omega[:, None], omega[None, :], du)
    div = (sub * vals).sum(axis=1)
    lhs = -float(np.sum(space.nu[omega] * w[omega] * div))
    rhs = 0.5 * float(np.sum(space.nu[omega][:, None] * sub * vals * dw))
    return lhs, rhs
