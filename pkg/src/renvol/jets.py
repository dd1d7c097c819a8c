"""Truncated multivariate Taylor arithmetic.

Coefficients are stored as true Taylor coefficients ``f_alpha / alpha!`` in
graded-lexicographic order, so a jet of order ``k`` is a prefix of length
``binom(dim + k, k)`` of any higher-order jet over the same variables and a
product is a plain truncated convolution.

Two layers live here.  The batched layer works on numpy arrays laid out as
``(batch, ncoef, *tensor_axes)`` and is what the curvature engine uses; a jet
array's order is read off its coefficient count.  :class:`Jet` is a small
immutable single-point wrapper over the same tables.
"""

from __future__ import annotations

import functools
import itertools
import math
import string
from typing import Mapping, Sequence

import numpy as np

from .errors import ContractViolation, DomainError

MAX_ORDER = 6

ELEMENTARY = ("exp", "log", "sin", "cos", "sqrt", "reciprocal", "power")

_LETTERS = [c for c in string.ascii_letters if c not in "zq"]


class JetSpace:
    """Multi-index tables for jets in ``dim`` variables truncated at ``order``."""

    def __init__(self, dim: int, order: int):
        if dim < 0:
            raise ContractViolation(f"jet dimension must be >= 0, got {dim}")
        if not 0 <= order <= MAX_ORDER:
            raise ContractViolation(f"jet order must be in [0, {MAX_ORDER}], got {order}")
        self.dim = dim
        self.order = order
        alphas = []
        for deg in range(order + 1):
            for combo in itertools.combinations_with_replacement(range(dim), deg):
                alpha = [0] * dim
                for v in combo:
                    alpha[v] += 1
                alphas.append(tuple(alpha))
        self.alphas = alphas
        self.index = {a: i for i, a in enumerate(alphas)}
        self.sizes = [math.comb(dim + k, k) for k in range(order + 1)]
        self.degree = np.array([sum(a) for a in alphas], dtype=int)
        self.factorial = np.array(
            [math.prod(math.factorial(e) for e in a) for a in alphas], dtype=float
        )

        self.shift = []
        for alpha in alphas:
            m = self.sizes[order - sum(alpha)]
            self.shift.append(
                np.array(
                    [self.index[tuple(x + y for x, y in zip(alpha, beta))] for beta in alphas[:m]],
                    dtype=int,
                )
            )

        self.partial_src = []
        self.partial_fac = []
        m = self.sizes[order - 1] if order >= 1 else 0
        for v in range(dim):
            src, fac = [], []
            for beta in alphas[:m]:
                up = list(beta)
                up[v] += 1
                src.append(self.index[tuple(up)])
                fac.append(beta[v] + 1)
            self.partial_src.append(np.array(src, dtype=int))
            self.partial_fac.append(np.array(fac, dtype=float))

    def __repr__(self):
        return f"JetSpace(dim={self.dim}, order={self.order})"

    @property
    def size(self) -> int:
        return self.sizes[-1]

    def order_of(self, ncoef: int) -> int:
        try:
            return self.sizes.index(ncoef)
        except ValueError:
            raise ContractViolation(
                f"{ncoef} coefficients is not a valid jet size for {self!r}"
            ) from None


@functools.lru_cache(maxsize=None)
def jet_space(dim: int, order: int) -> JetSpace:
    return JetSpace(dim, order)


# ---------------------------------------------------------------------------
# batched layer


def order_of(space: JetSpace, a: np.ndarray) -> int:
    return space.order_of(a.shape[1])


def truncate(space: JetSpace, a: np.ndarray, order: int) -> np.ndarray:
    if order > order_of(space, a):
        raise ContractViolation("cannot raise the order of a jet by truncation")
    return a[:, : space.sizes[order]]


def constant(space: JetSpace, values, order: int | None = None) -> np.ndarray:
    """Jet array whose value part is ``values`` (shape ``(batch, *tensor)``)."""
    values = np.asarray(values, dtype=float)
    k = space.order if order is None else order
    out = np.zeros((values.shape[0], space.sizes[k]) + values.shape[1:])
    out[:, 0] = values
    return out


def variable(space: JetSpace, var: int, values, order: int | None = None) -> np.ndarray:
    """Jet of the coordinate function ``x_var`` based at ``values`` (shape ``(batch,)``)."""
    out = constant(space, values, order)
    if out.shape[1] > 1:
        out[:, 1 + var] = 1.0
    return out


def add(space: JetSpace, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    k = min(order_of(space, a), order_of(space, b))
    return a[:, : space.sizes[k]] + b[:, : space.sizes[k]]


def sub(space: JetSpace, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    k = min(order_of(space, a), order_of(space, b))
    return a[:, : space.sizes[k]] - b[:, : space.sizes[k]]


def _einsum_spec(spec: str) -> str:
    lhs, out = spec.replace(" ", "").split("->")
    left, right = lhs.split(",")
    if "z" in spec or "q" in spec:
        raise ContractViolation("index letters 'z' and 'q' are reserved")
    return f"z{left},zq{right}->zq{out}"


@functools.lru_cache(maxsize=None)
def _matmul_plan(spec: str, shape_a: tuple[int, ...], shape_b: tuple[int, ...]):
    """Plan for ``einsum(spec)`` over tensor axes as one batched matmul, or None.

    ``a`` has shape ``(z, *shape_a)`` and ``b`` has ``(z, q, *shape_b)``.
    Specs with repeated letters inside an operand fall back to einsum.
    """
    lhs, out = spec.replace(" ", "").split("->")
    la, lb = lhs.split(",")
    if len(set(la)) != len(la) or len(set(lb)) != len(lb) or len(set(out)) != len(out):
        return None
    size = {}
    for letters, shape in ((la, shape_a), (lb, shape_b)):
        for c, d in zip(letters, shape):
            size[c] = d
    batch = [c for c in la if c in lb and c in out]
    contr = [c for c in la if c in lb and c not in out]
    free_a = [c for c in la if c not in lb]
    free_b = [c for c in lb if c not in la]
    # letters summed within one operand alone
    sum_a = tuple(1 + la.index(c) for c in free_a if c not in out)
    sum_b = tuple(2 + lb.index(c) for c in free_b if c not in out)
    free_a = [c for c in free_a if c in out]
    free_b = [c for c in free_b if c in out]
    la_kept = [c for c in la if c in batch + contr + free_a]
    lb_kept = [c for c in lb if c in batch + contr + free_b]
    perm_a = [0] + [1 + la_kept.index(c) for c in batch + free_a + contr]
    perm_b = [0, 1] + [2 + lb_kept.index(c) for c in batch + contr + free_b]

    def prod(cs):
        return math.prod(size[c] for c in cs)

    nb, fa, nc, fb = prod(batch), prod(free_a), prod(contr), prod(free_b)
    res_letters = batch + free_a + free_b
    res_shape = tuple(size[c] for c in res_letters)
    perm_out = [0, 1] + [2 + res_letters.index(c) for c in out]
    return sum_a, sum_b, perm_a, perm_b, (nb, fa, nc), (nb, nc, fb), res_shape, perm_out


def _contract(plan, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    sum_a, sum_b, perm_a, perm_b, sha, shb, res_shape, perm_out = plan
    if sum_a:
        a = a.sum(axis=sum_a)
    if sum_b:
        b = b.sum(axis=sum_b)
    z, q = b.shape[:2]
    a2 = a.transpose(perm_a).reshape((z, 1) + sha)
    b2 = b.transpose(perm_b).reshape((z, q) + shb)
    r = np.matmul(a2, b2)
    return r.reshape((z, q) + res_shape).transpose(perm_out)


def mul(space: JetSpace, a: np.ndarray, b: np.ndarray, spec: str | None = None) -> np.ndarray:
    """Truncated product of two jet arrays.

    With ``spec=None`` the tensor parts multiply elementwise under numpy
    broadcasting; otherwise ``spec`` is an einsum contraction over the tensor
    axes only (e.g. ``"il,ljk->ijk"``).  The result order is the smaller of
    the two input orders.
    """
    k = min(order_of(space, a), order_of(space, b))
    sizes = space.sizes
    if spec is None:
        extra_a = b.ndim - a.ndim
        extra_b = a.ndim - b.ndim

        def term(alpha_coef, beta_block):
            x = alpha_coef[:, None]
            if extra_a > 0:
                x = x.reshape(x.shape[:2] + (1,) * extra_a + x.shape[2:])
            y = beta_block
            if extra_b > 0:
                y = y.reshape(y.shape[:2] + (1,) * extra_b + y.shape[2:])
            return x * y

    else:
        full = _einsum_spec(spec)
        plan = _matmul_plan(spec.replace(" ", ""), a.shape[2:], b.shape[2:])

        if plan is None:

            def term(alpha_coef, beta_block):
                return np.einsum(full, alpha_coef, beta_block, optimize=True)

        else:

            def term(alpha_coef, beta_block):
                return _contract(plan, alpha_coef, beta_block)

    out = term(a[:, 0], b[:, : sizes[k]])
    if not out.flags.writeable or out.base is not None:
        out = out.copy()
    for i in range(1, sizes[k]):
        coef = a[:, i]
        if not coef.any():
            continue
        m = sizes[k - space.degree[i]]
        out[:, space.shift[i][:m]] += term(coef, b[:, :m])
    return out


def _taylor_factors(fname: str, a0: np.ndarray, k: int, p: float | None):
    """Return ``[f^(m)(a0)/m! for m in 0..k]``, validating the domain."""
    if fname == "sqrt":
        fname, p = "power", 0.5
    elif fname == "reciprocal":
        fname, p = "power", -1.0
    if fname == "exp":
        e = np.exp(a0)
        return [e / math.factorial(m) for m in range(k + 1)]
    if fname == "log":
        if np.any(a0 <= 0):
            raise DomainError("log requires a positive value part")
        return [np.log(a0)] + [(-1.0) ** (m + 1) / (m * a0**m) for m in range(1, k + 1)]
    if fname in ("sin", "cos"):
        s, c = np.sin(a0), np.cos(a0)
        cycle = [s, c, -s, -c] if fname == "sin" else [c, -s, -c, s]
        return [cycle[m % 4] / math.factorial(m) for m in range(k + 1)]
    if fname == "power":
        if p is None:
            raise ContractViolation("power requires an exponent")
        p = float(p)
        integral = p.is_integer()
        if integral and p >= 0:
            pass
        elif integral:
            if np.any(a0 == 0):
                raise DomainError(f"power {p} requires a nonzero value part")
        elif np.any(a0 <= 0):
            raise DomainError(f"power {p} requires a positive value part")
        out = []
        binom = 1.0
        for m in range(k + 1):
            if m > 0:
                binom *= (p - m + 1) / m
            if binom == 0.0:
                out.append(np.zeros_like(a0))
            else:
                out.append(binom * a0 ** (p - m))
        return out
    raise ContractViolation(f"unknown elementary function {fname!r}; expected one of {ELEMENTARY}")


def compose(space: JetSpace, a: np.ndarray, fname: str, p: float | None = None) -> np.ndarray:
    """Apply an elementary function elementwise to a jet array."""
    k = order_of(space, a)
    a0 = a[:, 0]
    factors = _taylor_factors(fname, a0, k, p)
    out = np.zeros_like(a)
    out[:, 0] = factors[0]
    if k == 0:
        return out
    d = a.copy()
    d[:, 0] = 0.0
    power = d
    for m in range(1, k + 1):
        out += factors[m][:, None] * power
        if m < k:
            power = mul(space, power, d)
    return out


def partial(space: JetSpace, a: np.ndarray, var: int) -> np.ndarray:
    """Derivative along jet variable ``var``; lowers the order by one."""
    k = order_of(space, a)
    if k == 0:
        raise ContractViolation("cannot differentiate an order-0 jet")
    m = space.sizes[k - 1]
    fac = space.partial_fac[var][:m].reshape((m,) + (1,) * (a.ndim - 2))
    return a[:, space.partial_src[var][:m]] * fac


def chart_gradient(space: JetSpace, a: np.ndarray, axes: Sequence[int | None]) -> np.ndarray:
    """Coordinate gradient with the derivative index appended last.

    ``axes[c]`` is the jet variable carrying chart axis ``c``, or ``None``
    when nothing depends on that axis (its partial is identically zero).
    """
    k = order_of(space, a)
    if k == 0:
        raise ContractViolation("cannot differentiate an order-0 jet")
    m = space.sizes[k - 1]
    out = np.zeros((a.shape[0], m) + a.shape[2:] + (len(axes),))
    for c, var in enumerate(axes):
        if var is not None:
            out[..., c] = partial(space, a, var)
    return out


def raw_derivatives(space: JetSpace, a: np.ndarray) -> np.ndarray:
    """Convert Taylor coefficients to raw partial derivatives ``d^alpha f``."""
    m = a.shape[1]
    return a * space.factorial[:m].reshape((m,) + (1,) * (a.ndim - 2))


def einsum_letters(count: int) -> list[str]:
    return _LETTERS[:count]


# ---------------------------------------------------------------------------
# single-point wrapper


class Jet:
    """Immutable truncated Taylor expansion of a scalar field at a point."""

    __slots__ = ("space", "coeffs")

    def __init__(self, dim: int, order: int, coeffs=None):
        space = jet_space(dim, order)
        if coeffs is None:
            c = np.zeros(space.size)
        else:
            c = np.array(coeffs, dtype=float)
            if c.shape != (space.size,):
                raise ContractViolation(
                    f"expected {space.size} coefficients for dim={dim}, order={order}, got {c.shape}"
                )
        c.flags.writeable = False
        object.__setattr__(self, "space", space)
        object.__setattr__(self, "coeffs", c)

    def __setattr__(self, name, value):
        raise AttributeError("Jet is immutable")

    @property
    def dim(self) -> int:
        return self.space.dim

    @property
    def order(self) -> int:
        return self.space.order

    @property
    def value(self) -> float:
        return float(self.coeffs[0])

    def __repr__(self):
        return f"Jet(dim={self.dim}, order={self.order}, value={self.value:.6g})"

    @classmethod
    def constant(cls, dim: int, order: int, value: float) -> "Jet":
        c = np.zeros(jet_space(dim, order).size)
        c[0] = value
        return cls(dim, order, c)

    @classmethod
    def variable(cls, dim: int, order: int, axis: int, value: float = 0.0) -> "Jet":
        space = jet_space(dim, order)
        return cls._wrap(space, variable(space, axis, [value])[0])

    @classmethod
    def from_polynomial(cls, dim: int, order: int, terms: Mapping[tuple, float]) -> "Jet":
        """Jet of a polynomial about the origin, ``terms`` mapping exponents to coefficients."""
        space = jet_space(dim, order)
        c = np.zeros(space.size)
        for alpha, value in terms.items():
            alpha = tuple(alpha)
            if len(alpha) != dim or min(alpha, default=0) < 0:
                raise ContractViolation(f"bad multi-index {alpha} for dim {dim}")
            if sum(alpha) <= order:
                c[space.index[alpha]] += value
        return cls(dim, order, c)

    @classmethod
    def _wrap(cls, space: JetSpace, coeffs: np.ndarray) -> "Jet":
        return cls(space.dim, space.order, coeffs)

    def _check(self, other: "Jet"):
        if not isinstance(other, Jet):
            raise ContractViolation(f"expected a Jet, got {type(other).__name__}")
        if other.dim != self.dim or other.order != self.order:
            raise ContractViolation(
                f"jet mismatch: (dim={self.dim}, order={self.order}) vs "
                f"(dim={other.dim}, order={other.order})"
            )

    def coefficient(self, alpha: Sequence[int]) -> float:
        return float(self.coeffs[self.space.index[tuple(alpha)]])

    def derivative(self, alpha: Sequence[int]) -> float:
        """Raw partial derivative ``d^alpha f`` at the base point."""
        i = self.space.index[tuple(alpha)]
        return float(self.coeffs[i] * self.space.factorial[i])

    def __add__(self, other):
        if isinstance(other, (int, float)):
            c = self.coeffs.copy()
            c[0] += other
            return Jet._wrap(self.space, c)
        self._check(other)
        return Jet._wrap(self.space, self.coeffs + other.coeffs)

    __radd__ = __add__

    def __neg__(self):
        return Jet._wrap(self.space, -self.coeffs)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return Jet._wrap(self.space, self.coeffs * other)
        self._check(other)
        return Jet._wrap(self.space, mul(self.space, self.coeffs[None], other.coeffs[None])[0])

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, (int, float)):
            return self * (1.0 / other)
        return self * other.compose("reciprocal")

    def compose(self, fname: str, p: float | None = None) -> "Jet":
        return Jet._wrap(self.space, compose(self.space, self.coeffs[None], fname, p)[0])

    def exp(self):
        return self.compose("exp")

    def log(self):
        return self.compose("log")

    def sin(self):
        return self.compose("sin")

    def cos(self):
        return self.compose("cos")

    def sqrt(self):
        return self.compose("sqrt")

    def reciprocal(self):
        return self.compose("reciprocal")

    def __pow__(self, p):
        return self.compose("power", p)

    def partial(self, direction: int) -> "Jet":
        if not 0 <= direction < self.dim:
            raise ContractViolation(f"direction {direction} out of range for dim {self.dim}")
        if self.order == 0:
            raise ContractViolation("cannot differentiate an order-0 jet")
        lower = jet_space(self.dim, self.order - 1)
        return Jet._wrap(lower, partial(self.space, self.coeffs[None], direction)[0])


def jet_add(a: Jet, b: Jet) -> Jet:
    return a + b


def jet_mul(a: Jet, b: Jet) -> Jet:
    return a * b


def jet_scale(a: Jet, s: float) -> Jet:
    return a * float(s)


def jet_compose_univariate(fname: str, a: Jet, p: float | None = None) -> Jet:
    return a.compose(fname, p)


def jet_partial(a: Jet, direction: int) -> Jet:
    return a.partial(direction)
