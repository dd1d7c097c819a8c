"""Integrated quantities over a conformal class.

``F(g) = int v6 dv``, ``V = int dv`` and the normalized
``F3 = F * V^{-(n-6)/n}``, together with the closed-form first and second
variations along ``g_t = e^{2u(t)} g``, ``u(t) = t phi + t^2 psi / 2``.

All integrals are fixed-order quadrature sums over a :class:`QuadratureGrid`,
evaluated in node chunks so memory stays bounded in dimension seven.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import jets
from .curvature import CurvatureBundle, Frame, hessian
from .errors import ContractViolation, PreconditionError
from .metric_zoo import FieldSpec, MetricFamily, QuadratureGrid

CRITICAL_RTOL = 1e-8


@dataclass(frozen=True)
class FunctionalValue:
    F: float
    V: float
    F3: float
    v6_mean: float
    v6_max_deviation: float


@dataclass(frozen=True)
class VariationValue:
    first: float
    second: float
    second_F: float


@dataclass
class NodeData:
    """Base-metric quantities at grid nodes (values only)."""

    sqrt_det: np.ndarray
    v6: np.ndarray
    P_up: np.ndarray
    T2_up: np.ndarray
    B_up: np.ndarray
    C: np.ndarray
    g_inv: np.ndarray


def _chunk_size(frame: Frame) -> int:
    size = frame.space.size
    return max(8, min(512, 40000 // max(size, 1)))


class GridEvaluator:
    """Curvature-bundle evaluation over every node of a grid.

    ``fields`` lists every field spec whose jets will be requested; the jet
    frame covers the union of their axes and the metric's axes.
    """

    def __init__(self, family: MetricFamily, grid: QuadratureGrid, fields=(), order: int = 4):
        if order < 4:
            raise ContractViolation("v6 needs metric jets of order >= 4")
        if grid.family is not family:
            raise ContractViolation("grid was built for a different family")
        self.family = family
        self.grid = grid
        self.n = family.n
        # pointwise scalars are evaluated at isometric images of the nodes that
        # keep sphere charts away from their poles
        self._rotate = bool(family.factors) and set(grid.effective_dims) <= set(family.zonal_axes())
        self.points = family.evaluation_points(grid.nodes) if self._rotate else grid.nodes
        self.frame = family.frame(order, [self.chart_field(f) for f in fields])
        step = _chunk_size(self.frame)
        self.chunks = [slice(i, min(i + step, grid.size)) for i in range(0, grid.size, step)]
        self._metric = [family.metric_jets(self.points[c], order, frame=self.frame) for c in self.chunks]
        self._base = None

    def chart_field(self, f: FieldSpec | None):
        return self.family.evaluation_field(f) if self._rotate else f

    def field_jets(self, f: FieldSpec) -> list[np.ndarray]:
        f = self.chart_field(f)
        return [f.jet(self.frame, self.points[c]) for c in self.chunks]

    def field_values(self, f: FieldSpec) -> np.ndarray:
        return f.values(self.grid.nodes)

    # -- functional along conformal factors ---------------------------------

    def v6_and_density(self, u_chunks=None):
        """``v6`` and ``sqrt(det)`` of ``e^{2u} g`` at every node."""
        v6, dens = [], []
        for i, (c, m) in enumerate(zip(self.chunks, self._metric)):
            d = self.grid.sqrt_det[c]
            if u_chunks is not None:
                m = m.rescaled(u_chunks[i])
                d = d * np.exp(self.n * u_chunks[i][:, 0])
            b = CurvatureBundle(m)
            v6.append(b.v6[:, 0])
            dens.append(d)
        return np.concatenate(v6), np.concatenate(dens)

    def functional_values(self, u_chunks=None) -> FunctionalValue:
        v6, dens = self.v6_and_density(u_chunks)
        return summarize(self.grid, v6, dens, self.n)

    # -- base-metric data for closed forms -----------------------------------

    def base(self) -> NodeData:
        if self._base is None:
            parts = []
            for c, m in zip(self.chunks, self._metric):
                b = CurvatureBundle(m)
                gi = m.g_inv[:, 0]
                parts.append(
                    (
                        self.grid.sqrt_det[c],
                        b.v6[:, 0],
                        np.einsum("zia,zjb,zab->zij", gi, gi, b.P[:, 0]),
                        np.einsum("zia,zjb,zab->zij", gi, gi, b.T2[:, 0]),
                        np.einsum("zia,zjb,zab->zij", gi, gi, b.B[:, 0]),
                        b.C[:, 0],
                        gi,
                    )
                )
            self._base = NodeData(*[np.concatenate(x) for x in zip(*parts)])
        return self._base

    def derivatives(self, f: FieldSpec):
        """Gradient ``f_k`` and covariant Hessian ``f_ij`` (values) at every node."""
        grads, hess = [], []
        for fj, m in zip(self.field_jets(f), self._metric):
            gam = _gamma_cache(m)
            grads.append(jets.chart_gradient(self.frame.space, fj, self.frame.axes)[:, 0])
            hess.append(hessian(self.frame, fj, gam)[:, 0])
        return np.concatenate(grads), np.concatenate(hess)


def _gamma_cache(m):
    gam = getattr(m, "_gamma", None)
    if gam is None:
        from .curvature import christoffel

        gam = christoffel(m)
        m._gamma = gam
    return gam


def summarize(grid: QuadratureGrid, v6: np.ndarray, dens: np.ndarray, n: int) -> FunctionalValue:
    if not (np.all(np.isfinite(v6)) and np.all(np.isfinite(dens))):
        raise FloatingPointError("non-finite v6 or volume density")
    F = grid.integrate(v6, dens)
    V = grid.integrate(np.ones_like(v6), dens)
    F3 = F * V ** (-(n - 6) / n)
    mean = F / V
    return FunctionalValue(F, V, F3, mean, float(np.max(np.abs(v6 - mean))))


def integrate(values: np.ndarray, grid: QuadratureGrid, sqrt_det: np.ndarray | None = None) -> float:
    return grid.integrate(values, sqrt_det)


def functional_values(family: MetricFamily, grid: QuadratureGrid, order: int = 4) -> FunctionalValue:
    return GridEvaluator(family, grid, order=order).functional_values()


def is_critical(fv: FunctionalValue, rtol: float = CRITICAL_RTOL) -> bool:
    return fv.v6_max_deviation <= rtol * (abs(fv.v6_mean) + 1.0)


# ---------------------------------------------------------------------------
# the linearized operator and closed-form variations


def L_values(ev: GridEvaluator, f: FieldSpec) -> np.ndarray:
    """``L(f) = B^ij f_ij / (24(n-4)) + T2^ij f_ij / 8 - P^ij C_ij^k f_k / 12`` per node."""
    n = ev.n
    base = ev.base()
    grad, hess = ev.derivatives(f)
    grad_up = np.einsum("zkc,zc->zk", base.g_inv, grad)
    b_term = np.einsum("zij,zij->z", base.B_up, hess) / (24.0 * (n - 4))
    t_term = np.einsum("zij,zij->z", base.T2_up, hess) / 8.0
    c_term = np.einsum("zij,zijk,zk->z", base.P_up, base.C, grad_up) / 12.0
    return b_term + t_term - c_term


def L_operator(ev: GridEvaluator, f: FieldSpec) -> np.ndarray:
    return L_values(ev, f)


def inner(ev: GridEvaluator, a: np.ndarray, b: np.ndarray) -> float:
    return ev.grid.integrate(a * b, ev.base().sqrt_det)


def first_variation_closed(ev: GridEvaluator, phi: FieldSpec) -> float:
    """``dF3/dt`` at ``t = 0``: ``(n-6) V^{-(n-6)/n} int phi (v6 - mean v6) dv``."""
    n = ev.n
    base = ev.base()
    V = ev.grid.integrate(np.ones_like(base.v6), base.sqrt_det)
    mean = ev.grid.integrate(base.v6, base.sqrt_det) / V
    phi_v = ev.field_values(phi)
    return (n - 6) * V ** (-(n - 6) / n) * ev.grid.integrate(phi_v * (base.v6 - mean), base.sqrt_det)


def first_variation_F(ev: GridEvaluator, phi: FieldSpec) -> float:
    """``dF/dt`` at ``t = 0`` for a general metric: ``(n-6) int phi v6 dv``."""
    base = ev.base()
    return (ev.n - 6) * ev.grid.integrate(ev.field_values(phi) * base.v6, base.sqrt_det)


def second_variation_closed_F(ev: GridEvaluator, phi: FieldSpec, psi: FieldSpec | None = None) -> float:
    """``d^2F/dt^2`` at ``t = 0`` for a general base metric."""
    n = ev.n
    base = ev.base()
    phi_v = ev.field_values(phi)
    psi_v = np.zeros_like(phi_v) if psi is None else ev.field_values(psi)
    integrand = (n - 6) * psi_v * base.v6 + (n - 6) ** 2 * phi_v**2 * base.v6
    integrand = integrand + (n - 6) * phi_v * L_values(ev, phi)
    return ev.grid.integrate(integrand, base.sqrt_det)


def volume_variations(ev: GridEvaluator, phi: FieldSpec, psi: FieldSpec | None = None):
    """``(V, dV/dt, d^2V/dt^2)`` at ``t = 0``."""
    n = ev.n
    dens = ev.base().sqrt_det
    phi_v = ev.field_values(phi)
    psi_v = np.zeros_like(phi_v) if psi is None else ev.field_values(psi)
    V = ev.grid.integrate(np.ones_like(phi_v), dens)
    return V, n * ev.grid.integrate(phi_v, dens), ev.grid.integrate(n * n * phi_v**2 + n * psi_v, dens)


def second_variation_closed_F3(ev: GridEvaluator, phi: FieldSpec, psi: FieldSpec | None = None) -> float:
    """``d^2F3/dt^2`` at ``t = 0`` for any base metric, by the quotient rule."""
    n = ev.n
    a = (n - 6) / n
    base = ev.base()
    F = ev.grid.integrate(base.v6, base.sqrt_det)
    V, dV, ddV = volume_variations(ev, phi, psi)
    dF = first_variation_F(ev, phi)
    ddF = second_variation_closed_F(ev, phi, psi)
    return (
        ddF * V**-a
        - 2 * a * dF * V ** (-a - 1) * dV
        + F * (a * (a + 1) * V ** (-a - 2) * dV**2 - a * V ** (-a - 1) * ddV)
    )


def second_variation_closed_F3_critical(ev: GridEvaluator, phi: FieldSpec, rtol: float = CRITICAL_RTOL) -> float:
    """``(n-6) V^{-(n-6)/n} int [-6 v6 phibar^2 + L(phibar) phibar] dv`` at a critical metric."""
    n = ev.n
    base = ev.base()
    fv = summarize(ev.grid, base.v6, base.sqrt_det, n)
    if not is_critical(fv, rtol):
        raise PreconditionError(
            f"metric is not critical: v6 deviates from its mean by {fv.v6_max_deviation:.3e}",
            v6_max_deviation=fv.v6_max_deviation,
        )
    phi_v = ev.field_values(phi)
    bar = phi_v - ev.grid.integrate(phi_v, base.sqrt_det) / fv.V
    # L annihilates constants, so L(phibar) = L(phi)
    integrand = -6.0 * base.v6 * bar**2 + L_values(ev, phi) * bar
    return (n - 6) * fv.V ** (-(n - 6) / n) * ev.grid.integrate(integrand, base.sqrt_det)


def variation_values(ev: GridEvaluator, phi: FieldSpec, psi: FieldSpec | None = None) -> VariationValue:
    return VariationValue(
        first=first_variation_closed(ev, phi),
        second=second_variation_closed_F3(ev, phi, psi),
        second_F=second_variation_closed_F(ev, phi, psi),
    )


def rayleigh_residual(ev: GridEvaluator, f: FieldSpec, eigenvalue: float) -> float:
    """Relative residual of ``-Laplacian f = eigenvalue f`` in the weighted L2 norm."""
    base = ev.base()
    _, hess = ev.derivatives(f)
    lap = np.einsum("zij,zij->z", base.g_inv, hess)
    fv = ev.field_values(f)
    num = math.sqrt(ev.grid.integrate((lap + eigenvalue * fv) ** 2, base.sqrt_det))
    den = math.sqrt(ev.grid.integrate((eigenvalue * fv) ** 2, base.sqrt_det)) + 1e-300
    return num / den


def laplacian_values(ev: GridEvaluator, f: FieldSpec) -> np.ndarray:
    base = ev.base()
    _, hess = ev.derivatives(f)
    return np.einsum("zij,zij->z", base.g_inv, hess)
