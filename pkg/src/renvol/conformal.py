"""Conformal rescaling ``g~ = e^{2u} g`` and the curvature transformation laws.

Every transformed tensor is returned fully lowered in the base chart; mixed
laws are lowered with ``g~`` before they are returned.  Derivatives of ``u``
are always covariant with respect to the base metric.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import jets
from .curvature import CurvatureBundle, Frame, MetricJet, hessian, kulkarni_nomizu
from .errors import ContractViolation
from .metric_zoo import FieldSpec, MetricFamily


@dataclass(frozen=True)
class ConformalFactor:
    """A conformal factor ``u`` given as a field spec."""

    u: FieldSpec

    def jet(self, frame: Frame, points: np.ndarray) -> np.ndarray:
        return self.u.jet(frame, points)

    def axes(self) -> set[int]:
        return self.u.axes()


@dataclass(frozen=True)
class ConformalPath:
    """``g_t = e^{2 u(t)} g`` with ``u(t) = t phi + t^2 psi / 2``."""

    family: MetricFamily
    phi: FieldSpec
    psi: FieldSpec | None = None

    def fields(self):
        return (self.phi,) if self.psi is None else (self.phi, self.psi)

    def u_jet(self, t: float, frame: Frame, points: np.ndarray) -> np.ndarray:
        out = t * self.phi.jet(frame, points)
        if self.psi is not None and t != 0.0:
            out = out + 0.5 * t * t * self.psi.jet(frame, points)
        return out

    def u_values(self, t: float, points: np.ndarray) -> np.ndarray:
        out = t * self.phi.values(points)
        if self.psi is not None:
            out = out + 0.5 * t * t * self.psi.values(points)
        return out


def rescaled_metric_jet(m: MetricJet, u: np.ndarray) -> MetricJet:
    """Jets of ``e^{2u} g``; the direct route every law is checked against."""
    return m.rescaled(u)


def _gradient_up(bundle: CurvatureBundle, u: np.ndarray):
    s = bundle.frame.space
    du = jets.chart_gradient(s, u, bundle.frame.axes)
    du_up = jets.mul(s, bundle.metric.g_inv, du, "ij,j->i")
    return du, du_up


def alpha_tensor(bundle: CurvatureBundle, u: np.ndarray) -> np.ndarray:
    """``alpha_ij = u_ij - u_i u_j + |grad u|^2 g_ij / 2`` as a jet array."""
    if jets.order_of(bundle.frame.space, u) < 2:
        raise ContractViolation("alpha needs jets of u to order >= 2")
    s = bundle.frame.space
    hess = hessian(bundle.frame, u, bundle.gamma)
    du, du_up = _gradient_up(bundle, u)
    grad2 = jets.mul(s, du, du_up, "i,i->")
    uu = jets.mul(s, du, du, "i,j->ij")
    half = jets.mul(s, 0.5 * grad2, bundle.metric.g)
    return jets.add(s, jets.sub(s, hess, uu), half)


def transform_schouten(P: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    """Lowered Schouten tensor of ``e^{2u} g``: ``P - alpha``."""
    k = min(P.shape[1], alpha.shape[1])
    return P[:, :k] - alpha[:, :k]


def transform_riem_ric_scalar(bundle: CurvatureBundle, u: np.ndarray, alpha: np.ndarray):
    """Values of ``(Riem~, Ric~, R~)`` for ``e^{2u} g`` from the base bundle."""
    n = bundle.n
    s = bundle.frame.space
    g = bundle.metric.g[:, :1]
    a0 = alpha[:, :1]
    e2u = np.exp(2.0 * u[:, 0])
    riem = e2u[:, None, None, None, None, None] * (bundle.riem[:, :1] - kulkarni_nomizu(s, a0, g))
    trace = np.einsum("zij,zij->z", bundle.metric.g_inv[:, 0], a0[:, 0])
    ric = bundle.ric[:, 0] - (n - 2) * a0[:, 0] - trace[:, None, None] * g[:, 0]
    scalar = np.exp(-2.0 * u[:, 0]) * (bundle.scalar[:, 0] - 2.0 * (n - 1) * trace)
    return riem[:, 0], ric, scalar


def transform_bach(bundle: CurvatureBundle, u: np.ndarray) -> np.ndarray:
    """Value of the lowered Bach tensor of ``e^{2u} g``.

    The mixed law ``B~_i^j = e^{-4u} (B_i^j + (n-4) u^k (C_i^j_k + C^j_ik)
    + (n-4) u^k u^l W_ik^j_l)`` lowered with ``g~_jm = e^{2u} g_jm``.
    """
    n = bundle.n
    if n < 5:
        raise ContractViolation("the Bach transformation law is used for n >= 5")
    s = bundle.frame.space
    _, du_up = _gradient_up(bundle, u)
    uk = du_up[:, 0]
    C = bundle.C[:, 0]
    W = bundle.W[:, 0]
    B = bundle.B[:, 0]
    cotton = np.einsum("zk,zimk->zim", uk, C) + np.einsum("zk,zmik->zim", uk, C)
    weyl = np.einsum("zk,zl,zikml->zim", uk, uk, W)
    e = np.exp(-2.0 * u[:, 0])
    return e[:, None, None] * (B + (n - 4) * cotton + (n - 4) * weyl)


def direct_bundle(m: MetricJet, u: np.ndarray) -> CurvatureBundle:
    return CurvatureBundle(rescaled_metric_jet(m, u))
