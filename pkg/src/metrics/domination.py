"""
Domination of the Fourier-Wasserstein metric by the truncated Wasserstein metric:
rho_F <= C * W1bar with C = (2 pi)^{-d/2} (int (|n|+3)^2 (1+|n|^2)^{-lambda} dn)^{1/2}.
"""

import math
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import quad

from .fourier import LambdaIndex, QuadratureScheme, default_scheme, rho_F
from .wasserstein import truncated_w1
from ..measures.models import AtomicMeasure
from ..storage.models import CheckReport
from ..utils.logger import setup_logger

logger = setup_logger(__name__)


@lru_cache(maxsize=None)
def domination_constant(d: int, lam: int) -> float:
    """Constant C computed by radial quadrature."""
    area = 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)
    radial, _ = quad(lambda r: (r + 3.0) ** 2 * r ** (d - 1) * (1.0 + r * r) ** (-lam), 0.0, np.inf,
                     epsabs=1e-13, epsrel=1e-12, limit=200)
    return (2.0 * math.pi) ** (-d / 2.0) * math.sqrt(area * radial)


def check_domination(
    m1: AtomicMeasure,
    m2: AtomicMeasure,
    idx: Optional[LambdaIndex] = None,
    scheme: Optional[QuadratureScheme] = None,
    base_point: Optional[Sequence[float]] = None,
) -> CheckReport:
    """
    Evaluate rho_F, W1bar and C and check rho_F <= C * W1bar.

    The inequality is judged with the quadrature tail bound and a 1e-12
    absolute slack on the right-hand side.
    """
    idx = idx or LambdaIndex.for_dim(m1.dim)
    scheme = scheme or default_scheme(idx.d)
    rho = rho_F(m1, m2, idx, scheme)
    w1 = truncated_w1(m1, m2, base_point=base_point)
    constant = domination_constant(idx.d, idx.lam)
    slack = math.sqrt(rho.tail_bound) + 1e-12
    holds = rho.value <= constant * w1.value + slack
    if not holds:
        logger.warning(f"Domination violated: rho_F={rho.value:.6g} > C*W1={constant * w1.value:.6g}")
    return CheckReport.verdict(
        "domination",
        holds,
        values={
            "rho_F": rho.value,
            "w1": w1.value,
            "constant_C": constant,
            "bound": constant * w1.value,
            "scheme": rho.scheme,
            "base_point": list(w1.base_point),
        },
        budgets={"slack": slack},
    )
