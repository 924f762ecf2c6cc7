"""
Cylinder functionals F(t, m) = f(t, <phi_1, m>, ..., <phi_K, m>) and their
linear functional derivatives, assembled exactly from supplied pieces.
"""

import math
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from ..measures.models import AtomicMeasure
from ..measures.operations import integrate
from ..storage.models import CheckReport
from ..utils.errors import DimensionError
from ..utils.logger import setup_logger

logger = setup_logger(__name__)

Field_ = Callable[[np.ndarray], np.ndarray]
Outer = Callable[[float, np.ndarray], float]
OuterGrad = Callable[[float, np.ndarray], np.ndarray]


class InnerFunction(BaseModel):
    """Twice-differentiable scalar field with its derivatives and a growth certificate."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    name: str
    value: Field_ = Field(..., description="(n, d) -> (n,)")
    grad: Optional[Field_] = Field(default=None, description="(n, d) -> (n, d)")
    hess: Optional[Field_] = Field(default=None, description="(n, d) -> (n, d, d)")
    growth: float = Field(default=1.0, ge=0, description="|phi(x)| <= growth * (1 + |x|)^order")
    growth_order: int = Field(default=1, ge=0, le=2)
    grad_growth: Optional[float] = Field(
        default=None,
        ge=0,
        description="|grad phi(x)| <= grad_growth * (1 + |x|)^grad_order; None when undeclared"
    )
    grad_order: int = Field(default=0, ge=0, le=2)
    hess_growth: Optional[float] = Field(
        default=None,
        ge=0,
        description="Operator norm of the Hessian, <= hess_growth * (1 + |x|)^hess_order"
    )
    hess_order: int = Field(default=0, ge=0, le=2)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        if self.grad is None:
            raise ValueError(f"inner function '{self.name}' has no gradient")
        return np.asarray(self.grad(x), dtype=float)

    def hessian(self, x: np.ndarray) -> np.ndarray:
        if self.hess is None:
            raise ValueError(f"inner function '{self.name}' has no Hessian")
        return np.asarray(self.hess(x), dtype=float)


def constant_one() -> InnerFunction:
    return InnerFunction(
        name="one",
        value=lambda x: np.ones(x.shape[0]),
        grad=lambda x: np.zeros_like(x),
        hess=lambda x: np.zeros((x.shape[0], x.shape[1], x.shape[1])),
        growth=1.0,
        growth_order=0,
        grad_growth=0.0,
        hess_growth=0.0,
    )


def coordinate(j: int = 0) -> InnerFunction:
    def grad(x):
        out = np.zeros_like(x)
        out[:, j] = 1.0
        return out

    return InnerFunction(
        name=f"x{j + 1}",
        value=lambda x: x[:, j].copy(),
        grad=grad,
        hess=lambda x: np.zeros((x.shape[0], x.shape[1], x.shape[1])),
        growth=1.0,
        grad_growth=1.0,
        hess_growth=0.0,
    )


def squared_norm() -> InnerFunction:
    return InnerFunction(
        name="|x|^2",
        value=lambda x: np.sum(x ** 2, axis=1),
        grad=lambda x: 2.0 * x,
        hess=lambda x: np.broadcast_to(2.0 * np.eye(x.shape[1]), (x.shape[0], x.shape[1], x.shape[1])),
        growth=1.0,
        growth_order=2,
        grad_growth=2.0,
        grad_order=1,
        hess_growth=2.0,
    )


def japanese_bracket() -> InnerFunction:
    """q(x) = sqrt(1 + |x|^2)."""
    def value(x):
        return np.sqrt(1.0 + np.sum(x ** 2, axis=1))

    def grad(x):
        return x / value(x)[:, None]

    def hess(x):
        q = value(x)
        eye = np.eye(x.shape[1])[None, :, :]
        outer = np.einsum("ni,nj->nij", x, x) / (q ** 2)[:, None, None]
        return (eye - outer) / q[:, None, None]

    return InnerFunction(
        name="bracket", value=value, grad=grad, hess=hess, growth=1.0, grad_growth=1.0, hess_growth=1.0
    )


def cosine(freq: Sequence[float]) -> InnerFunction:
    """cos(omega . x)."""
    omega = np.atleast_1d(np.asarray(freq, dtype=float))

    def check(x):
        if x.shape[1] != omega.size:
            raise DimensionError(f"dimension: frequency of size {omega.size} for d={x.shape[1]}")
        return x @ omega

    return InnerFunction(
        name=f"cos[{','.join(f'{w:g}' for w in omega)}]",
        value=lambda x: np.cos(check(x)),
        grad=lambda x: -np.sin(check(x))[:, None] * omega[None, :],
        hess=lambda x: -np.cos(check(x))[:, None, None] * np.outer(omega, omega)[None, :, :],
        growth=1.0,
        growth_order=0,
        grad_growth=float(np.linalg.norm(omega)),
        hess_growth=float(omega @ omega),
    )


def gaussian_bump(center: Sequence[float], width: float = 1.0) -> InnerFunction:
    """exp(-|x - c|^2 / (2 w^2))."""
    c = np.atleast_1d(np.asarray(center, dtype=float))
    w2 = float(width) ** 2

    def value(x):
        return np.exp(-np.sum((x - c) ** 2, axis=1) / (2.0 * w2))

    def grad(x):
        return -(x - c) / w2 * value(x)[:, None]

    def hess(x):
        z = x - c
        outer = np.einsum("ni,nj->nij", z, z) / w2 ** 2
        return (outer - np.eye(x.shape[1])[None, :, :] / w2) * value(x)[:, None, None]

    return InnerFunction(
        name="bump", value=value, grad=grad, hess=hess, growth=1.0, growth_order=0,
        grad_growth=1.0 / float(width), hess_growth=1.0 / w2,
    )


class CylinderFunctional(BaseModel):
    """F(t, m) = f(t, <phi_1, m>, ..., <phi_K, m>) with supplied partial derivatives."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    name: str = "F"
    inner: Tuple[InnerFunction, ...]
    outer: Outer = Field(..., description="f(t, y)")
    d_t: Outer = Field(..., description="df/dt (t, y)")
    d_y: OuterGrad = Field(..., description="grad_y f (t, y) -> (K,)")
    d_yy: OuterGrad = Field(..., description="Hessian in y -> (K, K)")

    def moments(self, m: AtomicMeasure) -> np.ndarray:
        return np.array([integrate(m, phi.value) for phi in self.inner])

    def value(self, t: float, m: AtomicMeasure) -> float:
        return float(self.outer(t, self.moments(m)))

    def time_derivative(self, t: float, m: AtomicMeasure) -> float:
        return float(self.d_t(t, self.moments(m)))

    def weights(self, t: float, m: AtomicMeasure) -> np.ndarray:
        """d f / d y_i at the moments of m."""
        return np.asarray(self.d_y(t, self.moments(m)), dtype=float).reshape(-1)

    def inner_values(self, x: np.ndarray) -> np.ndarray:
        return np.stack([phi.value(x) for phi in self.inner], axis=1)

    def inner_grads(self, x: np.ndarray) -> np.ndarray:
        return np.stack([phi.gradient(x) for phi in self.inner], axis=1)

    def inner_hessians(self, x: np.ndarray) -> np.ndarray:
        return np.stack([phi.hessian(x) for phi in self.inner], axis=1)


def _points(x, dim: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x.reshape(1, -1) if x.size == dim else x.reshape(-1, 1)
    if x.shape[1] != dim:
        raise DimensionError(f"dimension: points of shape {x.shape} for d={dim}")
    return x


def lfd(F: CylinderFunctional, t: float, m: AtomicMeasure, x) -> np.ndarray:
    """delta F / delta m (t, m)(x) = sum_i d_{y_i} f phi_i(x)."""
    x = _points(x, m.dim)
    return F.inner_values(x) @ F.weights(t, m)


def lfd_grad(F: CylinderFunctional, t: float, m: AtomicMeasure, x) -> np.ndarray:
    """Gradient in x of the linear functional derivative, (n, d)."""
    x = _points(x, m.dim)
    return np.einsum("nkd,k->nd", F.inner_grads(x), F.weights(t, m))


def lfd_hess(F: CylinderFunctional, t: float, m: AtomicMeasure, x) -> np.ndarray:
    """Hessian in x of the linear functional derivative, (n, d, d)."""
    x = _points(x, m.dim)
    return np.einsum("nkij,k->nij", F.inner_hessians(x), F.weights(t, m))


# ----------------------------------------------------------------------
# Library of functionals

def _linear(name: str, phi: InnerFunction) -> CylinderFunctional:
    return CylinderFunctional(
        name=name,
        inner=(phi,),
        outer=lambda t, y: float(y[0]),
        d_t=lambda t, y: 0.0,
        d_y=lambda t, y: np.ones(1),
        d_yy=lambda t, y: np.zeros((1, 1)),
    )


def _squared(name: str, phi: InnerFunction) -> CylinderFunctional:
    return CylinderFunctional(
        name=name,
        inner=(phi,),
        outer=lambda t, y: float(y[0] ** 2),
        d_t=lambda t, y: 0.0,
        d_y=lambda t, y: np.array([2.0 * y[0]]),
        d_yy=lambda t, y: np.full((1, 1), 2.0),
    )


def mass_functional() -> CylinderFunctional:
    """F(m) = m(R^d)."""
    return _linear("mass", constant_one())


def linear_functional(phi: InnerFunction) -> CylinderFunctional:
    """F(m) = <phi, m>."""
    return _linear(f"<{phi.name},m>", phi)


def mass_squared() -> CylinderFunctional:
    """F(m) = m(R^d)^2."""
    return _squared("mass^2", constant_one())


def squared_linear(phi: InnerFunction) -> CylinderFunctional:
    """F(m) = <phi, m>^2."""
    return _squared(f"<{phi.name},m>^2", phi)


def aux_functional(L: float) -> CylinderFunctional:
    """theta(t, m) = e^{-L t} (<sqrt(1 + |x|^2), m> + m(R^d)^2)."""
    def outer(t, y):
        return math.exp(-L * t) * (y[0] + y[1] ** 2)

    return CylinderFunctional(
        name=f"aux[L={L:g}]",
        inner=(japanese_bracket(), constant_one()),
        outer=outer,
        d_t=lambda t, y: -L * outer(t, y),
        d_y=lambda t, y: math.exp(-L * t) * np.array([1.0, 2.0 * y[1]]),
        d_yy=lambda t, y: math.exp(-L * t) * np.array([[0.0, 0.0], [0.0, 2.0]]),
    )


def time_weighted(F: CylinderFunctional, rate: float) -> CylinderFunctional:
    """e^{rate t} F(t, m)."""
    return CylinderFunctional(
        name=f"e^({rate:g}t){F.name}",
        inner=F.inner,
        outer=lambda t, y: math.exp(rate * t) * F.outer(t, y),
        d_t=lambda t, y: math.exp(rate * t) * (rate * F.outer(t, y) + F.d_t(t, y)),
        d_y=lambda t, y: math.exp(rate * t) * np.asarray(F.d_y(t, y)),
        d_yy=lambda t, y: math.exp(rate * t) * np.asarray(F.d_yy(t, y)),
    )


def combine(a: float, F: CylinderFunctional, b: float, G: CylinderFunctional) -> CylinderFunctional:
    """a F + b G as one cylinder functional over the concatenated inner functions."""
    k = len(F.inner)

    def split(y):
        y = np.asarray(y, dtype=float)
        return y[:k], y[k:]

    def hessian(t, y):
        yf, yg = split(y)
        hf = np.asarray(F.d_yy(t, yf), dtype=float)
        hg = np.asarray(G.d_yy(t, yg), dtype=float)
        out = np.zeros((y.size, y.size))
        out[:k, :k] = a * hf
        out[k:, k:] = b * hg
        return out

    return CylinderFunctional(
        name=f"{a:g}*{F.name}+{b:g}*{G.name}",
        inner=F.inner + G.inner,
        outer=lambda t, y: a * F.outer(t, split(y)[0]) + b * G.outer(t, split(y)[1]),
        d_t=lambda t, y: a * F.d_t(t, split(y)[0]) + b * G.d_t(t, split(y)[1]),
        d_y=lambda t, y: np.concatenate([a * np.asarray(F.d_y(t, split(y)[0])),
                                         b * np.asarray(G.d_y(t, split(y)[1]))]),
        d_yy=hessian,
    )


# ----------------------------------------------------------------------
# Derivative checks along measure segments

Candidate = Callable[[AtomicMeasure, np.ndarray], np.ndarray]


def segment_measure(m: AtomicMeasure, m_prime: AtomicMeasure, lam: float) -> AtomicMeasure:
    """m' + lam (m - m') = (1 - lam) m' + lam m."""
    return m_prime.scaled(1.0 - lam).add(m.scaled(lam))


def segment_reconstruction(candidate: Candidate, m: AtomicMeasure, m_prime: AtomicMeasure, nodes: int = 64) -> float:
    """int_0^1 <candidate(m' + lam (m - m')), m - m'> d lam by Gauss-Legendre quadrature."""
    points, weights = np.polynomial.legendre.leggauss(nodes)
    lams = 0.5 * (points + 1.0)
    total = 0.0
    for lam, w in zip(lams, weights):
        mid = segment_measure(m, m_prime, float(lam))

        def field(x, mu=mid):
            return np.asarray(candidate(mu, x), dtype=float).reshape(-1)

        total += 0.5 * w * (integrate(m, field) - integrate(m_prime, field))
    return total


def lfd_segment_check(
    F: CylinderFunctional,
    t: float,
    m: AtomicMeasure,
    m_prime: AtomicMeasure,
    nodes: int = 64,
    tolerance: float = 1e-10
) -> CheckReport:
    """F(m) - F(m') against the segment integral of the supplied derivative."""
    direct = F.value(t, m) - F.value(t, m_prime)
    rebuilt = segment_reconstruction(lambda mu, x: lfd(F, t, mu, x), m, m_prime, nodes)
    gap = abs(direct - rebuilt)
    allowed = tolerance * max(1.0, abs(direct))
    return CheckReport.verdict(
        "lfd_segment",
        gap <= allowed,
        {"difference": direct, "reconstruction": rebuilt, "gap": gap, "functional": F.name},
        {"tolerance": allowed},
    )


def lfd_fd_check(
    F: CylinderFunctional,
    t: float,
    m: AtomicMeasure,
    m_prime: AtomicMeasure,
    lam: float = 0.5,
    step: float = 1e-2
) -> CheckReport:
    """
    Central differences of lam -> F((1 - lam) m + lam m') against
    <dF/dm, m' - m>; the error must shrink like step^2.
    """
    def g(s: float) -> float:
        return F.value(t, segment_measure(m_prime, m, s))

    mid = segment_measure(m_prime, m, lam)
    field = lambda x: lfd(F, t, mid, x)  # noqa: E731
    exact = integrate(m_prime, field) - integrate(m, field)
    errors: List[float] = []
    for h in (step, step / 2.0):
        estimate = (g(lam + h) - g(lam - h)) / (2.0 * h)
        errors.append(abs(estimate - exact))
    scale = max(1.0, abs(exact))
    # step^2 shrinks fourfold per halving; 1.5 absorbs higher-order terms
    ok = errors[0] <= 1e-9 * scale or errors[1] <= 1.5 * errors[0] / 4.0
    return CheckReport.verdict(
        "lfd_finite_difference",
        ok,
        {"derivative": exact, "errors": errors, "steps": [step, step / 2.0], "functional": F.name},
    )
