"""Pointwise curvature of a metric given by Taylor jets.

All tensors are numpy arrays laid out as ``(batch, ncoef, *indices)`` where
the coefficient axis holds Taylor coefficients in the frame's jet space and
every index is a lowered chart index unless a name says otherwise.  A
covariant derivative appends its derivative slot last, so ``nabla(P)[..., i,
j, k]`` is ``P_ij,k``.

Sign convention: ``Riem[i, j, k, l] = <R(d_i, d_j) d_l, d_k>`` with ``R(X, Y)
= [nabla_X, nabla_Y] - nabla_[X,Y]``.  The unit sphere then has
``R_ijij = +1`` on orthonormal pairs and ``Ric_jl = g^ik R_ijkl``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import jets
from .errors import ContractViolation
from .jets import Jet, JetSpace, jet_space


@dataclass(frozen=True)
class Frame:
    """Binds chart axes to jet variables.

    ``active`` lists the chart axes that carry a jet variable; partial
    derivatives along every other axis are identically zero.  Restricting the
    active set is what keeps jets small when fields depend on few axes.
    """

    n: int
    active: tuple[int, ...]
    order: int

    def __post_init__(self):
        if sorted(set(self.active)) != list(self.active):
            raise ContractViolation("frame axes must be sorted and distinct")
        if self.active and not (0 <= self.active[0] and self.active[-1] < self.n):
            raise ContractViolation(f"frame axes {self.active} out of range for n={self.n}")

    @classmethod
    def full(cls, n: int, order: int) -> "Frame":
        return cls(n, tuple(range(n)), order)

    @property
    def space(self) -> JetSpace:
        return jet_space(len(self.active), self.order)

    @cached_property
    def axes(self) -> tuple[int | None, ...]:
        lookup = {a: v for v, a in enumerate(self.active)}
        return tuple(lookup.get(c) for c in range(self.n))

    def var(self, axis: int) -> int | None:
        return self.axes[axis]

    def with_order(self, order: int) -> "Frame":
        return Frame(self.n, self.active, order)

    def merged(self, axes) -> "Frame":
        return Frame(self.n, tuple(sorted(set(self.active) | set(axes))), self.order)


# ---------------------------------------------------------------------------
# small tensor-jet helpers


def _perm(a: np.ndarray, src: str, dst: str) -> np.ndarray:
    """Permute tensor axes (leaving batch/coefficient axes alone)."""
    return np.einsum(f"zq{src}->zq{dst}", a)


def order(space: JetSpace, a: np.ndarray) -> int:
    return jets.order_of(space, a)


def values(a: np.ndarray) -> np.ndarray:
    """Value part ``(batch, *indices)`` of a tensor jet."""
    return a[:, 0]


def kulkarni_nomizu(space: JetSpace, alpha: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """``(alpha . beta)_ijkl = a_ik b_jl + a_jl b_ik - a_il b_jk - a_jk b_il``."""
    x = jets.mul(space, alpha, beta, "ac,bd->abcd")
    return (
        x
        + _perm(x, "jilk", "ijkl")
        - _perm(x, "ijlk", "ijkl")
        - _perm(x, "jikl", "ijkl")
    )


def raise_pair(space: JetSpace, g_inv: np.ndarray, t: np.ndarray) -> np.ndarray:
    """``T^{ij} = g^{ia} g^{jb} T_ab``."""
    tmp = jets.mul(space, g_inv, t, "ia,ab->ib")
    return jets.mul(space, tmp, g_inv, "ib,bj->ij")


def full_contract(space: JetSpace, g_inv: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``A_ij B^ij`` for symmetric-or-not 2-tensors, returned as a scalar jet."""
    return jets.mul(space, a, raise_pair(space, g_inv, b), "ij,ij->")


# ---------------------------------------------------------------------------
# metric jets


class MetricJet:
    """Jets of ``g_ij`` and ``g^ij`` at a batch of chart points."""

    def __init__(self, frame: Frame, g: np.ndarray, g_inv: np.ndarray | None = None):
        n = frame.n
        if g.ndim != 4 or g.shape[2:] != (n, n):
            raise ContractViolation(f"metric array must have shape (batch, ncoef, {n}, {n})")
        if jets.order_of(frame.space, g) != frame.order:
            raise ContractViolation("metric jet order does not match its frame")
        self.frame = frame
        self.g = g
        self.g_inv = _inverse(frame.space, g) if g_inv is None else g_inv

    @property
    def n(self) -> int:
        return self.frame.n

    @property
    def order(self) -> int:
        return self.frame.order

    @property
    def space(self) -> JetSpace:
        return self.frame.space

    @property
    def batch(self) -> int:
        return self.g.shape[0]

    def component(self, i: int, j: int, point: int = 0) -> Jet:
        s = self.space
        return Jet(s.dim, s.order, self.g[point, :, i, j])

    def inverse_component(self, i: int, j: int, point: int = 0) -> Jet:
        s = self.space
        return Jet(s.dim, s.order, self.g_inv[point, :, i, j])

    def sqrt_det(self) -> np.ndarray:
        """Value of sqrt(det g) per point."""
        return np.sqrt(np.linalg.det(self.g[:, 0]))

    def rescaled(self, u: np.ndarray) -> "MetricJet":
        """Jets of ``e^{2u} g`` for a scalar jet array ``u`` of shape ``(batch, ncoef)``."""
        if u.shape[0] != self.batch:
            raise ContractViolation("conformal factor batch does not match the metric")
        if jets.order_of(self.space, u) < self.order:
            raise ContractViolation("conformal factor jets are shallower than the metric jets")
        u = u[:, : self.space.size]
        s = self.space
        e2u = jets.compose(s, 2.0 * u, "exp")
        em2u = jets.compose(s, -2.0 * u, "exp")
        return MetricJet(self.frame, jets.mul(s, e2u, self.g), jets.mul(s, em2u, self.g_inv))


def _inverse(space: JetSpace, g: np.ndarray) -> np.ndarray:
    """Jet of the matrix inverse via the terminating Neumann series."""
    g0 = g[:, 0]
    inv0 = np.linalg.inv(g0)
    k = jets.order_of(space, g)
    d = g.copy()
    d[:, 0] = 0.0
    x = -np.einsum("zij,zqjk->zqik", inv0, d)
    eye = np.broadcast_to(np.eye(g.shape[-1]), g0.shape)
    total = jets.constant(space, eye, k)
    term = total
    for _ in range(k):
        term = jets.mul(space, x, term, "ij,jk->ik")
        total = total + term
    return np.einsum("zqij,zjk->zqik", total, inv0)


# ---------------------------------------------------------------------------
# connection and covariant derivatives


@dataclass(frozen=True)
class Christoffel:
    """``first[l, j, k] = Gamma_{l,jk}`` and ``second[i, j, k] = Gamma^i_jk``."""

    first: np.ndarray
    second: np.ndarray


def christoffel(m: MetricJet) -> Christoffel:
    if m.order < 1:
        raise ContractViolation("Christoffel symbols need metric jets of order >= 1")
    s = m.space
    dg = jets.chart_gradient(s, m.g, m.frame.axes)  # dg[a, b, c] = d_c g_ab
    first = 0.5 * (
        _perm(dg, "lkj", "ljk") + _perm(dg, "jlk", "ljk") - _perm(dg, "jkl", "ljk")
    )
    second = jets.mul(s, m.g_inv, first, "il,ljk->ijk")
    return Christoffel(first, second)


def _letters(count):
    return "".join(jets.einsum_letters(count))


def covariant_derivative(
    frame: Frame, t: np.ndarray, gamma: Christoffel | np.ndarray
) -> np.ndarray:
    """``nabla T`` for a covariant tensor jet, derivative slot appended last."""
    s = frame.space
    k = jets.order_of(s, t)
    if k < 1:
        raise ContractViolation("covariant derivative needs tensor jets of order >= 1")
    gam = gamma.second if isinstance(gamma, Christoffel) else gamma
    rank = t.ndim - 2
    out = jets.chart_gradient(s, t, frame.axes)
    letters = _letters(rank + 2)
    idx, m, a = letters[:rank], letters[rank], letters[rank + 1]
    for slot in range(rank):
        src = idx[:slot] + m + idx[slot + 1 :]
        out = jets.sub(s, out, jets.mul(s, gam, t, f"{m}{a}{idx[slot]},{src}->{idx}{a}"))
    return out


def divergence(
    frame: Frame, g_inv: np.ndarray, t: np.ndarray, gamma: Christoffel, slot: int
) -> np.ndarray:
    """``g^{ab} nabla_a T_{.. b ..}`` with ``b`` in position ``slot``.

    Equal to contracting :func:`covariant_derivative` but avoids forming the
    full rank-(r+1) derivative.
    """
    s = frame.space
    rank = t.ndim - 2
    if not 0 <= slot < rank:
        raise ContractViolation(f"slot {slot} out of range for rank {rank}")
    gam = gamma.second
    letters = _letters(rank + 4)
    idx, a, b, m, y = letters[:rank], letters[rank], letters[rank + 1], letters[rank + 2], letters[rank + 3]
    src = idx[:slot] + b + idx[slot + 1 :]
    dst = idx[:slot] + idx[slot + 1 :]
    dt = jets.chart_gradient(s, t, frame.axes)
    out = jets.mul(s, g_inv, dt, f"{a}{b},{src}{a}->{dst}")
    # gamma_up[b, m, i] = g^{ab} Gamma^m_{ai}; trace_gamma[m] = g^{ab} Gamma^m_{ab}
    gamma_up = jets.mul(s, g_inv, gam, f"{a}{b},{m}{a}{y}->{b}{m}{y}")
    trace_gamma = jets.mul(s, g_inv, gam, f"{a}{b},{m}{a}{b}->{m}")
    moved = idx[:slot] + m + idx[slot + 1 :]
    out = jets.sub(s, out, jets.mul(s, trace_gamma, t, f"{m},{moved}->{dst}"))
    for other in range(rank):
        if other == slot:
            continue
        both = list(src)
        both[other] = m
        both = "".join(both)
        out = jets.sub(s, out, jets.mul(s, gamma_up, t, f"{b}{m}{idx[other]},{both}->{dst}"))
    return out


def hessian(frame: Frame, f: np.ndarray, gamma: Christoffel) -> np.ndarray:
    """Covariant Hessian ``f_ij`` of a scalar jet array ``(batch, ncoef)``."""
    df = jets.chart_gradient(frame.space, f, frame.axes)
    return covariant_derivative(frame, df, gamma)


# ---------------------------------------------------------------------------
# curvature


def riemann(m: MetricJet, gamma: Christoffel) -> np.ndarray:
    s = m.space
    if m.order < 2:
        raise ContractViolation("Riemann tensor needs metric jets of order >= 2")
    dg = jets.chart_gradient(s, m.g, m.frame.axes)
    ddg = jets.chart_gradient(s, dg, m.frame.axes)  # ddg[a, b, c, d] = d_d d_c g_ab
    linear = 0.5 * (
        _perm(ddg, "jkli", "ijkl")
        - _perm(ddg, "jlki", "ijkl")
        - _perm(ddg, "iklj", "ijkl")
        + _perm(ddg, "ilkj", "ijkl")
    )
    quad = jets.mul(s, gamma.first, gamma.second, "mjk,mil->ijkl") - jets.mul(
        s, gamma.first, gamma.second, "mik,mjl->ijkl"
    )
    return jets.add(s, linear, quad)


def sigma_polynomials(tr1, tr2, tr3):
    """Elementary symmetric polynomials from power-sum traces (Newton's identities)."""
    s1 = tr1
    s2 = 0.5 * (tr1 * tr1 - tr2)
    s3 = (tr1**3 - 3.0 * tr1 * tr2 + 2.0 * tr3) / 6.0
    return s1, s2, s3


def _trunc(space, a, k):
    return a[:, : space.sizes[k]]


class CurvatureBundle:
    """Every pointwise tensor derived from a :class:`MetricJet`.

    Jet depths for a metric of order K: Christoffel K-1; Riem, Ric, R, P, W,
    sigma_k, T2, v2, v4 K-2; C K-3; B and v6 K-4.  Attributes are
    full jet arrays; :meth:`value` extracts the value part.
    """

    def __init__(self, m: MetricJet):
        n, K = m.n, m.order
        if K < 2:
            raise ContractViolation(f"curvature needs metric jets of order >= 2, got {K}")
        if n < 3:
            raise ContractViolation(f"curvature bundle requires n >= 3, got {n}")
        s = m.space
        self.metric = m
        self.frame = m.frame
        self.n = n
        self.gamma = christoffel(m)
        self.riem = riemann(m, self.gamma)
        kr = K - 2
        g = _trunc(s, m.g, kr)
        g_inv = _trunc(s, m.g_inv, kr)
        self.ric = jets.mul(s, g_inv, self.riem, "ik,ijkl->jl")
        self.scalar = jets.mul(s, g_inv, self.ric, "jl,jl->")
        self.P = (self.ric - jets.mul(s, self.scalar, g) / (2.0 * (n - 1))) / (n - 2)
        self.W = self.riem - kulkarni_nomizu(s, self.P, g)

        # A = g^{-1} P as a mixed tensor A[i, j] = A^i_j
        A = jets.mul(s, g_inv, self.P, "ik,kj->ij")
        A2 = jets.mul(s, A, A, "ik,kj->ij")
        tr1 = np.einsum("zqii->zq", A)
        tr2 = np.einsum("zqii->zq", A2)
        tr3 = jets.mul(s, A2, A, "ik,ki->")
        s1 = tr1
        s2 = 0.5 * (jets.mul(s, tr1, tr1) - tr2)
        s3 = (jets.mul(s, jets.mul(s, tr1, tr1), tr1) - 3.0 * jets.mul(s, tr1, tr2) + 2.0 * tr3) / 6.0
        self.A = A
        self.sigma = (s1, s2, s3)
        PgP = jets.mul(s, self.P, A, "ik,kj->ij")
        self.T2 = jets.mul(s, s2, g) - jets.mul(s, s1, self.P) + PgP
        self.v2 = -0.5 * s1
        self.v4 = 0.25 * s2

        self.C = None
        self.B = None
        self.v6 = None
        self.PB = None
        if K >= 3:
            dP = covariant_derivative(self.frame, self.P, self.gamma)
            self.C = dP - _perm(dP, "ikj", "ijk")
        if K >= 4:
            if n < 4:
                raise ContractViolation("Bach tensor requires n >= 4")
            # D[i, k, j] = nabla^l W_likj ; Bach = nabla^k D_ikj / (n-3) + R^{kl} W_likj / (n-2)
            D = divergence(self.frame, m.g_inv, self.W, self.gamma, 0)
            self.div_W = D
            lead = divergence(self.frame, m.g_inv, D, self.gamma, 1)
            ric_up = raise_pair(s, g_inv, self.ric)
            tail = jets.mul(s, ric_up, self.W, "kl,likj->ij")
            self.B = jets.add(s, lead / (n - 3), tail / (n - 2))
            if n != 4:
                self.PB = full_contract(s, m.g_inv, self.P, self.B)
                self.v6 = -(jets.add(s, s3, self.PB / (3.0 * (n - 4)))) / 8.0

    @staticmethod
    def value(a: np.ndarray) -> np.ndarray:
        return a[:, 0]

    def summary(self, point: int = 0) -> dict:
        """Scalar digest of the bundle at one batch point."""

        def norm(t):
            if t is None:
                return None
            return float(np.sqrt(np.sum(t[point, 0] ** 2)))

        out = {
            "R": float(self.scalar[point, 0]),
            "P": self.P[point, 0].tolist(),
            "sigma1": float(self.sigma[0][point, 0]),
            "sigma2": float(self.sigma[1][point, 0]),
            "sigma3": float(self.sigma[2][point, 0]),
            "norm_W": norm(self.W),
            "norm_C": norm(self.C),
            "norm_B": norm(self.B),
            "v2": float(self.v2[point, 0]),
            "v4": float(self.v4[point, 0]),
            "v6": None if self.v6 is None else float(self.v6[point, 0]),
        }
        return out


def curvature_bundle(m: MetricJet) -> CurvatureBundle:
    return CurvatureBundle(m)


def einstein_reference(n: int, R: float) -> tuple[float, float]:
    """Closed forms on an Einstein metric: ``v6`` and the factor with ``L = c * Laplacian``."""
    if n < 5:
        raise ContractViolation(f"einstein_reference requires n >= 5, got {n}")
    v6 = -(n - 2) * R**3 / (384.0 * n**2 * (n - 1) ** 2)
    coef = (n - 2) * R**2 / (64.0 * n**2 * (n - 1))
    return v6, coef


def einstein_sigma3_route(n: int, R: float) -> float:
    """``v6 = -sigma_3/8`` with ``P = R/(2n(n-1)) g`` on an Einstein metric."""
    lam = R / (2.0 * n * (n - 1))
    return -math.comb(n, 3) * lam**3 / 8.0
