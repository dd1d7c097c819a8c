"""Analytic metric families, test fields and quadrature grids.

Charts:

* tori use coordinates ``x in [0, 2 pi)^n``;
* a sphere factor ``S^m(r)`` uses polar angles ``theta_1 .. theta_{m-1} in
  (0, pi)`` followed by an azimuth in ``[0, 2 pi)``, with metric
  ``r^2 (dtheta_1^2 + sin^2 theta_1 dtheta_2^2 + ...)``;
* products concatenate factor charts.

Test fields either live on the torus (:class:`TrigField`, a real
trigonometric polynomial) or are zonal on sphere factors (:class:`ZonalField`,
a polynomial in ``cos theta_1`` of one factor).
"""

from __future__ import annotations

import ast
import configparser
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import special

from . import jets
from .curvature import Frame, MetricJet
from .errors import ContractViolation, DomainError

FAMILY_KINDS = ("flat_torus", "conformal_torus", "perturbed_torus", "round_sphere", "einstein_product")


# ---------------------------------------------------------------------------
# fields


@dataclass(frozen=True)
class TrigField:
    """``sum_t amp_t * cos(freq_t . x + phase_t)`` on the torus."""

    terms: tuple[tuple[float, tuple[int, ...], float], ...] = ()

    def __post_init__(self):
        terms = tuple((float(a), tuple(int(k) for k in f), float(p)) for a, f, p in self.terms)
        object.__setattr__(self, "terms", terms)
        for _, freq, _ in terms:
            if any(abs(k) > 3 for k in freq):
                raise ContractViolation(f"frequencies are bounded by 3 per axis, got {freq}")

    @classmethod
    def constant(cls, n: int, value: float) -> "TrigField":
        return cls(((value, (0,) * n, 0.0),))

    def axes(self) -> set[int]:
        return {c for _, freq, _ in self.terms for c, k in enumerate(freq) if k}

    def __add__(self, other: "TrigField") -> "TrigField":
        return TrigField(self.terms + other.terms)

    def scaled(self, s: float) -> "TrigField":
        return TrigField(tuple((a * s, f, p) for a, f, p in self.terms))

    def values(self, points: np.ndarray) -> np.ndarray:
        out = np.zeros(points.shape[0])
        for amp, freq, phase in self.terms:
            out += amp * np.cos(points @ np.array(freq, dtype=float) + phase)
        return out

    def jet(self, frame: Frame, points: np.ndarray, order: int | None = None) -> np.ndarray:
        s = jets.jet_space(len(frame.active), frame.order if order is None else order)
        k = s.order
        out = np.zeros((points.shape[0], s.sizes[k]))
        for amp, freq, phase in self.terms:
            arg = jets.constant(s, points @ np.array(freq, dtype=float) + phase, k)
            for c, kc in enumerate(freq):
                if kc == 0:
                    continue
                var = frame.var(c)
                if var is None:
                    raise ContractViolation(f"field depends on axis {c} outside the frame {frame.active}")
                if k > 0:
                    arg[:, 1 + var] += kc
            out += amp * jets.compose(s, arg, "cos")
        return out


@dataclass(frozen=True)
class ZonalField:
    """Sum of polynomials in ``cos theta_1`` of individual sphere factors.

    ``terms`` holds ``(factor, coeffs)`` pairs with ``coeffs[j]`` multiplying
    ``cos^j``.  The family resolves ``factor`` to a chart axis.

    When ``equatorial_dims`` is set (sphere dimension per factor), the zonal
    coordinate is instead ``sin theta_1 ... sin theta_{m-1} cos(azimuth)``, the
    same function after a rotation that moves the poles onto the equator.
    """

    terms: tuple[tuple[int, tuple[float, ...]], ...] = ()
    axis_of_factor: tuple[int, ...] = (0,)
    equatorial_dims: tuple[int, ...] = ()

    def __post_init__(self):
        terms = tuple((int(f), tuple(float(c) for c in cs)) for f, cs in self.terms)
        object.__setattr__(self, "terms", terms)
        for f, _ in terms:
            if not 0 <= f < len(self.axis_of_factor):
                raise ContractViolation(f"unknown sphere factor {f}")

    def _factor_axes(self, f: int) -> tuple[int, ...]:
        off = self.axis_of_factor[f]
        if not self.equatorial_dims:
            return (off,)
        return tuple(range(off, off + self.equatorial_dims[f]))

    def axes(self) -> set[int]:
        return {a for f, cs in self.terms if any(cs[1:]) for a in self._factor_axes(f)}

    def __add__(self, other: "ZonalField") -> "ZonalField":
        if (self.axis_of_factor, self.equatorial_dims) != (other.axis_of_factor, other.equatorial_dims):
            raise ContractViolation("zonal fields live on different charts")
        return ZonalField(self.terms + other.terms, self.axis_of_factor, self.equatorial_dims)

    def scaled(self, s: float) -> "ZonalField":
        terms = tuple((f, tuple(c * s for c in cs)) for f, cs in self.terms)
        return ZonalField(terms, self.axis_of_factor, self.equatorial_dims)

    def equatorial(self, dims: tuple[int, ...]) -> "ZonalField":
        return ZonalField(self.terms, self.axis_of_factor, tuple(dims))

    def values(self, points: np.ndarray) -> np.ndarray:
        out = np.zeros(points.shape[0])
        for f, cs in self.terms:
            axes = self._factor_axes(f)
            if len(axes) == 1:
                x = np.cos(points[:, axes[0]])
            else:
                x = np.prod(np.sin(points[:, list(axes[:-1])]), axis=1) * np.cos(points[:, axes[-1]])
            out += np.polynomial.polynomial.polyval(x, cs)
        return out

    def _coordinate_jet(self, s, frame: Frame, points: np.ndarray, f: int) -> np.ndarray:
        axes = self._factor_axes(f)
        k = s.order
        acc = None
        for i, axis in enumerate(axes):
            var = frame.var(axis)
            if var is None:
                raise ContractViolation(f"field depends on axis {axis} outside the frame")
            fn = "cos" if i == len(axes) - 1 else "sin"
            term = jets.compose(s, jets.variable(s, var, points[:, axis], k), fn)
            acc = term if acc is None else jets.mul(s, acc, term)
        return acc

    def jet(self, frame: Frame, points: np.ndarray, order: int | None = None) -> np.ndarray:
        s = jets.jet_space(len(frame.active), frame.order if order is None else order)
        k = s.order
        out = np.zeros((points.shape[0], s.sizes[k]))
        for f, cs in self.terms:
            if not any(cs[1:]):
                out[:, 0] += cs[0] if cs else 0.0
                continue
            c = self._coordinate_jet(s, frame, points, f)
            acc = jets.constant(s, np.full(points.shape[0], cs[-1]), k)
            for coef in reversed(cs[:-1]):
                acc = jets.mul(s, acc, c)
                acc[:, 0] += coef
            out += acc
        return out


FieldSpec = TrigField | ZonalField


def random_trig_field(
    rng: np.random.Generator, n: int, axes, scale: float = 1.0, nterms: int = 2, max_freq: int = 3
) -> TrigField:
    """Random trig polynomial depending only on ``axes``.

    Amplitudes are uniform in ``[-1, 1]`` times ``scale``; per-axis
    frequencies come from ``{1, .., max_freq}`` with random sign.
    """
    terms = []
    axes = sorted(axes)
    for _ in range(nterms):
        freq = [0] * n
        for c in axes:
            freq[c] = int(rng.integers(1, max_freq + 1)) * int(rng.choice([-1, 1]))
        terms.append((scale * rng.uniform(-1.0, 1.0), tuple(freq), rng.uniform(0.0, 2 * math.pi)))
    return TrigField(tuple(terms))


# ---------------------------------------------------------------------------
# families


def sphere_volume(m: int, r: float = 1.0) -> float:
    """Volume of the round ``S^m`` of radius ``r``."""
    return 2.0 * math.pi ** ((m + 1) / 2) / math.gamma((m + 1) / 2) * r**m


def einstein_radii(p: int, q: int, r1: float) -> float:
    """Radius of ``S^q`` making ``S^p(r1) x S^q(r2)`` Einstein."""
    if p < 2 or q < 2:
        raise ContractViolation(f"einstein_radii needs p, q >= 2, got {(p, q)}")
    return r1 * math.sqrt((q - 1) / (p - 1))


def zonal_harmonic(m: int, degree: int, r: float = 1.0, factor: int = 0, axis_of_factor=(0,)):
    """Zonal Laplace eigenfunction on ``S^m(r)`` and its eigenvalue ``k(k+m-1)/r^2``."""
    if m < 2:
        raise ContractViolation("zonal harmonics need a sphere of dimension >= 2")
    poly = special.gegenbauer(degree, (m - 1) / 2.0)
    coeffs = tuple(float(c) for c in poly.coeffs[::-1])
    scale = max(abs(c) for c in coeffs)
    coeffs = tuple(c / scale for c in coeffs)
    return ZonalField(((factor, coeffs),), tuple(axis_of_factor)), degree * (degree + m - 1) / r**2


@dataclass(frozen=True)
class MetricFamily:
    """An analytic metric on a compact chart.

    Construct through the ``flat_torus``/``conformal_torus``/... helpers
    rather than directly.
    """

    kind: str
    n: int
    seed: int | None = None
    w: TrigField | None = None
    h: tuple[tuple[TrigField, ...], ...] | None = None
    eps: float = 0.0
    factors: tuple[tuple[int, float], ...] = ()
    einstein: bool = False
    effective_dims: tuple[int, ...] = ()

    def __post_init__(self):
        if self.kind not in FAMILY_KINDS:
            raise ContractViolation(f"unknown family kind {self.kind!r}")
        if self.n < 3:
            raise ContractViolation(f"dimension must be >= 3, got {self.n}")
        if self.kind == "perturbed_torus":
            # Gershgorin: eigenvalues of delta + eps h stay within 1 +- max row sum
            bound = max(
                sum(abs(a) for j in range(self.n) for a, _, _ in self.h[i][j].terms)
                for i in range(self.n)
            )
            if self.eps * bound > 0.5:
                raise DomainError(
                    f"perturbation too large: eigenvalues may leave [1/2, 3/2] (eps*bound={self.eps * bound:.3g})"
                )
        if self.factors:
            if sum(m for m, _ in self.factors) != self.n:
                raise ContractViolation("sphere factor dimensions must add up to n")
            if self.einstein:
                lam = {(m - 1) / r**2 for m, r in self.factors}
                ref = next(iter(lam))
                if any(abs(x - ref) > 1e-12 * abs(ref) for x in lam):
                    raise ContractViolation("factors do not satisfy the Einstein condition")

    # -- chart structure -------------------------------------------------

    def descriptor(self) -> dict:
        """Plain-data summary used in reports."""
        return {
            "kind": self.kind,
            "n": self.n,
            "seed": self.seed,
            "eps": self.eps,
            "factors": [[m, r] for m, r in self.factors],
            "effective_dims": list(self.effective_dims),
        }

    @property
    def is_torus(self) -> bool:
        return self.kind.endswith("torus")

    @cached_property
    def factor_offsets(self) -> tuple[int, ...]:
        offs, c = [], 0
        for m, _ in self.factors:
            offs.append(c)
            c += m
        return tuple(offs)

    def polar_axes(self) -> tuple[int, ...]:
        """Sphere chart axes ranging over ``(0, pi)``."""
        out = []
        for off, (m, _) in zip(self.factor_offsets, self.factors):
            out.extend(range(off, off + m - 1))
        return tuple(out)

    def metric_axes(self) -> tuple[int, ...]:
        """Chart axes the metric components depend on."""
        if self.kind == "flat_torus":
            return ()
        if self.kind == "conformal_torus":
            return tuple(sorted(self.w.axes()))
        if self.kind == "perturbed_torus":
            ax = set()
            for row in self.h:
                for f in row:
                    ax |= f.axes()
            return tuple(sorted(ax))
        return self.polar_axes()

    def frame(self, order: int, fields=()) -> Frame:
        # at least one variable so that a jet's order stays readable from its length
        axes = set(self.metric_axes()) or {min(self.effective_dims, default=0)}
        for f in fields:
            if f is not None:
                axes |= f.axes()
        return Frame(self.n, tuple(sorted(axes)), order)

    def evaluation_points(self, points: np.ndarray) -> np.ndarray:
        """Isometric images of grid nodes where the chart is far from its poles.

        A node ``(t, pi/2, .., pi/2, 0)`` of a sphere factor is rotated to
        ``(pi/2, .., pi/2, t)``; torus points are returned unchanged.  Only
        valid for nodes whose collapsed axes sit at their default values.
        """
        points = np.array(points, dtype=float)
        if not self.factors:
            return points
        out = points.copy()
        for off, (m, _) in zip(self.factor_offsets, self.factors):
            out[:, off : off + m - 1] = 0.5 * math.pi
            out[:, off + m - 1] = points[:, off]
        return out

    def evaluation_field(self, f):
        """The field expressed in the chart used at :meth:`evaluation_points`."""
        if f is None or not self.factors:
            return f
        if not isinstance(f, ZonalField):
            raise ContractViolation("sphere families take zonal fields")
        return f.equatorial(tuple(m for m, _ in self.factors))

    def zonal_axes(self) -> tuple[int, ...]:
        return self.factor_offsets

    def zonal(self, factor: int, coeffs) -> ZonalField:
        """Polynomial in ``cos theta_1`` of sphere factor ``factor``."""
        return ZonalField(((factor, tuple(coeffs)),), self.factor_offsets)

    def harmonic(self, factor: int, degree: int) -> tuple[ZonalField, float]:
        """Zonal eigenfunction of degree ``degree`` on one factor, with its eigenvalue."""
        m, r = self.factors[factor]
        return zonal_harmonic(m, degree, r, factor, self.factor_offsets)

    def volume(self) -> float | None:
        """Closed-form volume when available."""
        if self.kind == "flat_torus":
            return (2 * math.pi) ** self.n
        if self.factors:
            return math.prod(sphere_volume(m, r) for m, r in self.factors)
        return None

    def scalar_curvature(self) -> float | None:
        """Closed-form scalar curvature for the constant-curvature/product families."""
        if self.kind == "flat_torus":
            return 0.0
        if self.factors:
            return sum(m * (m - 1) / r**2 for m, r in self.factors)
        return None

    def first_eigenvalue(self) -> float | None:
        """Smallest nonzero Laplace eigenvalue of the sphere/product families."""
        if not self.factors:
            return None
        return min(m / r**2 for m, r in self.factors)

    def check_point(self, points: np.ndarray):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if points.shape[1] != self.n:
            raise ContractViolation(f"chart points must have {self.n} coordinates")
        polar = list(self.polar_axes())
        if polar:
            th = points[:, polar]
            if np.any(th <= 0.0) or np.any(th >= math.pi):
                raise DomainError("point lies on a polar-chart singularity (theta must be in (0, pi))")
        return points

    # -- metric jets -----------------------------------------------------

    def metric_array(self, frame: Frame, points: np.ndarray) -> np.ndarray:
        """Jets of ``g_ij`` in ``frame`` at ``points``, shape ``(batch, ncoef, n, n)``."""
        points = self.check_point(points)
        s = frame.space
        k = frame.order
        n = self.n
        z = points.shape[0]
        missing = set(self.metric_axes()) - set(frame.active)
        if missing:
            raise ContractViolation(f"frame lacks axes {sorted(missing)} the metric depends on")
        eye = np.broadcast_to(np.eye(n), (z, n, n))
        g = jets.constant(s, eye, k)
        if self.kind == "conformal_torus":
            e2w = jets.compose(s, 2.0 * self.w.jet(frame, points, k), "exp")
            g = e2w[:, :, None, None] * np.eye(n)
        elif self.kind == "perturbed_torus":
            for i in range(n):
                for j in range(i, n):
                    hij = self.h[i][j]
                    if not hij.terms:
                        continue
                    val = self.eps * hij.jet(frame, points, k)
                    g[:, :, i, j] += val
                    if i != j:
                        g[:, :, j, i] += val
        elif self.factors:
            g = np.zeros_like(g)
            for off, (m, r) in zip(self.factor_offsets, self.factors):
                diag = jets.constant(s, np.full(z, r * r), k)
                g[:, :, off, off] = diag
                for a in range(1, m):
                    axis = off + a - 1
                    th = jets.variable(s, frame.var(axis), points[:, axis], k)
                    sn = jets.compose(s, th, "sin")
                    diag = jets.mul(s, diag, jets.mul(s, sn, sn))
                    g[:, :, off + a, off + a] = diag
        return g

    def metric_jets(self, points: np.ndarray, order: int, fields=(), frame: Frame | None = None) -> MetricJet:
        if frame is None:
            frame = self.frame(order, fields)
        return MetricJet(frame, self.metric_array(frame, points))

    def sqrt_det(self, points: np.ndarray) -> np.ndarray:
        frame = self.frame(0)
        g = self.metric_array(frame, points)[:, 0]
        return np.sqrt(np.linalg.det(g))


def metric_jet(family: MetricFamily, point, order: int) -> MetricJet:
    """Metric jets at a single chart point in the full ``n``-variable frame."""
    if not 0 <= order <= jets.MAX_ORDER:
        raise ContractViolation(f"order must be in [0, {jets.MAX_ORDER}]")
    point = family.check_point(point)
    if point.shape[0] != 1:
        raise ContractViolation("metric_jet takes a single point; use MetricFamily.metric_jets for batches")
    return family.metric_jets(point, order, frame=Frame.full(family.n, order))


# -- constructors -------------------------------------------------------------


def _torus_axes(n: int, effective_dims) -> tuple[int, ...]:
    axes = tuple(sorted(effective_dims)) if effective_dims is not None else tuple(range(min(n, 3)))
    if len(axes) > 3 or any(not 0 <= a < n for a in axes):
        raise ContractViolation("torus fields may depend on at most 3 valid axes")
    return axes


def flat_torus(n: int, effective_dims=None) -> MetricFamily:
    return MetricFamily("flat_torus", n, effective_dims=_torus_axes(n, effective_dims))


def conformal_torus(n: int, w: TrigField | None = None, eps: float = 0.1, seed: int = 0, effective_dims=None):
    axes = _torus_axes(n, effective_dims)
    if w is None:
        w = random_trig_field(np.random.default_rng(seed), n, axes, scale=eps)
    return MetricFamily("conformal_torus", n, seed=seed, w=w, eps=eps, effective_dims=axes)


def perturbed_torus(n: int, eps: float = 0.05, seed: int = 0, effective_dims=None, h=None, nterms: int = 1):
    """``g = delta + eps h`` with each ``h_ij`` a random trig polynomial (seeded)."""
    axes = _torus_axes(n, effective_dims)
    if h is None:
        rng = np.random.default_rng(seed)
        rows = [[None] * n for _ in range(n)]
        for i in range(n):
            for j in range(i, n):
                rows[i][j] = rows[j][i] = random_trig_field(rng, n, axes, nterms=nterms)
        h = tuple(tuple(r) for r in rows)
    return MetricFamily("perturbed_torus", n, seed=seed, h=h, eps=eps, effective_dims=axes)


def round_sphere(n: int, radius: float = 1.0) -> MetricFamily:
    return MetricFamily("round_sphere", n, factors=((n, radius),), einstein=True, effective_dims=(0,))


def einstein_product(p: int, q: int, r1: float = 1.0, r2: float | None = None) -> MetricFamily:
    flag = r2 is None
    r2 = einstein_radii(p, q, r1) if r2 is None else r2
    return MetricFamily(
        "einstein_product", p + q, factors=((p, r1), (q, r2)), einstein=flag, effective_dims=(0, p)
    )


def reseeded(family: MetricFamily, seed: int) -> MetricFamily:
    """The same kind of family with its random fields redrawn from ``seed``."""
    if family.kind == "perturbed_torus":
        nterms = max(len(family.h[0][0].terms), 1)
        return perturbed_torus(family.n, family.eps, seed, family.effective_dims, nterms=nterms)
    if family.kind == "conformal_torus":
        return conformal_torus(family.n, eps=family.eps, seed=seed, effective_dims=family.effective_dims)
    return family


def random_points(family: MetricFamily, rng: np.random.Generator, count: int, margin: float = 0.3) -> np.ndarray:
    """Random chart points; polar angles stay ``margin`` away from the poles."""
    pts = rng.uniform(0.0, 2 * math.pi, size=(count, family.n))
    polar = list(family.polar_axes())
    if polar:
        pts[:, polar] = rng.uniform(margin, math.pi - margin, size=(count, len(polar)))
    return pts


# ---------------------------------------------------------------------------
# quadrature


@dataclass(frozen=True)
class QuadratureGrid:
    """Tensor-product quadrature on a family's chart.

    ``coordinate_weights`` multiply ``sqrt(det g)`` evaluated at the nodes.
    Axes outside ``effective_dims`` collapse to one node; their weight is the
    exact integral of that axis's factor of the volume density divided by the
    factor's value at the node, which is exact for integrands independent of
    the collapsed axes.
    """

    family: MetricFamily
    nodes: np.ndarray
    coordinate_weights: np.ndarray
    effective_dims: tuple[int, ...]
    resolution: int

    @property
    def size(self) -> int:
        return self.nodes.shape[0]

    def integrate(self, values: np.ndarray, sqrt_det: np.ndarray | None = None) -> float:
        """Fixed-order sum of ``weights * sqrt(det g) * values``."""
        if sqrt_det is None:
            sqrt_det = self.sqrt_det
        terms = self.coordinate_weights * sqrt_det * np.asarray(values, dtype=float)
        return math.fsum(terms.tolist())

    @cached_property
    def sqrt_det(self) -> np.ndarray:
        return self.family.sqrt_det(self.nodes)

    def volume(self) -> float:
        return self.integrate(np.ones(self.size))


def _sphere_axis_exponent(family: MetricFamily, axis: int) -> int | None:
    """Power of ``sin(theta_axis)`` in the volume density, or None for an azimuth/torus axis."""
    for off, (m, _) in zip(family.factor_offsets, family.factors):
        if off <= axis < off + m - 1:
            return m - 1 - (axis - off)
    return None


def quadrature_grid(family: MetricFamily, resolution: int, effective_dims=None) -> QuadratureGrid:
    if resolution < 8:
        raise ContractViolation(f"resolution must be >= 8, got {resolution}")
    dims = tuple(sorted(family.effective_dims if effective_dims is None else effective_dims))
    polar = set(family.polar_axes())
    per_axis = []
    for axis in range(family.n):
        expo = _sphere_axis_exponent(family, axis)
        if axis in dims:
            if axis in polar:
                x, w = np.polynomial.legendre.leggauss(resolution)
                per_axis.append((0.5 * math.pi * (x + 1.0), 0.5 * math.pi * w))
            else:
                per_axis.append(
                    (2 * math.pi * np.arange(resolution) / resolution, np.full(resolution, 2 * math.pi / resolution))
                )
        elif axis in polar:
            # density factor sin^expo(theta) has value 1 at the node pi/2
            weight = math.sqrt(math.pi) * math.gamma((expo + 1) / 2) / math.gamma(expo / 2 + 1)
            per_axis.append((np.array([0.5 * math.pi]), np.array([weight])))
        else:
            per_axis.append((np.array([0.0]), np.array([2 * math.pi])))
    grids = np.meshgrid(*[p[0] for p in per_axis], indexing="ij")
    wgrids = np.meshgrid(*[p[1] for p in per_axis], indexing="ij")
    nodes = np.stack([g.ravel() for g in grids], axis=1)
    weights = np.prod(np.stack([w.ravel() for w in wgrids], axis=1), axis=1)
    return QuadratureGrid(family, nodes, weights, dims, resolution)


# ---------------------------------------------------------------------------
# config


def _literal(text: str):
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return text


def read_config(path) -> dict:
    """Flatten an INI-style config into dotted keys (``[family] kind = x`` -> ``family.kind``)."""
    parser = configparser.ConfigParser()
    with open(path) as fh:
        parser.read_file(fh)
    out = {}
    for section in parser.sections():
        for key, raw in parser.items(section):
            out[f"{section}.{key}"] = _literal(raw)
    return out


def family_from_config(cfg: dict) -> MetricFamily:
    """Build a family from dotted ``family.*`` keys."""
    kind = cfg.get("family.kind")
    if kind not in FAMILY_KINDS:
        raise ContractViolation(f"family.kind must be one of {FAMILY_KINDS}, got {kind!r}")
    n = int(cfg.get("family.n", 7))
    seed = int(cfg.get("family.seed", cfg.get("run.seed", 0)))
    dims = cfg.get("family.effective_dims")
    if kind == "flat_torus":
        return flat_torus(n, dims)
    if kind == "conformal_torus":
        return conformal_torus(n, eps=float(cfg.get("family.eps", 0.1)), seed=seed, effective_dims=dims)
    if kind == "perturbed_torus":
        return perturbed_torus(n, eps=float(cfg.get("family.eps", 0.05)), seed=seed, effective_dims=dims)
    if kind == "round_sphere":
        return round_sphere(n, float(cfg.get("family.radius", 1.0)))
    p = int(cfg.get("family.p", 3))
    q = int(cfg.get("family.q", n - p))
    r1 = float(cfg.get("family.r1", 1.0))
    r2 = cfg.get("family.r2")
    return einstein_product(p, q, r1, None if r2 is None else float(r2))
