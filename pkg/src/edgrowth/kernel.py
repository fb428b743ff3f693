"""Interaction kernels K(j, k) for exchange-driven growth.

``K(j, k)`` is the rate factor for a size-``j`` cluster exporting one unit
of mass to a size-``k`` cluster.  Size 0 is the empty volume, which can
receive but never export, so ``K(0, k) = 0`` always.

Kernels come in two forms:

* separable sums ``K(j, k) = sum_r a_r(j) b_r(k)``, which admit an
  ``O(N R)`` right-hand side, and
* general callbacks ``K(j, k) = f(j, k)``, evaluated into a dense matrix.

Regime classification works off declared structure (exponents, symmetry,
bias) rather than sampled values, because the growth thresholds are
statements about asymptotics.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

import numpy as np

from .errors import InvalidKernel, InvalidParameter

__all__ = [
    "PowerFactor",
    "BiasedFactor",
    "SeparableTerm",
    "Kernel",
    "RegimeLabel",
    "Regime",
    "SymmetryReport",
    "eval_kernel",
    "constant_kernel",
    "product_kernel",
    "sum_kernel",
    "power_kernel",
    "make_biased",
    "callback_kernel",
    "BUILTIN_CALLBACKS",
    "classify",
    "check_symmetry",
]

DEFAULT_PROBE_BOUND = 64


# -- factor functions --------------------------------------------------------
# Small frozen callables instead of lambdas so kernels pickle cleanly into
# worker processes.

@dataclass(frozen=True)
class PowerFactor:
    """``s -> s**p`` with ``0**0 = 1``; ``zero_at_zero`` forces f(0) = 0."""

    p: float
    zero_at_zero: bool = False

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        out = np.power(s, self.p)
        if self.zero_at_zero:
            out = np.where(s == 0, 0.0, out)
        return out


@dataclass(frozen=True)
class BiasedFactor:
    """``s -> s**beta * (1 + eps)**s``."""

    beta: float
    eps: float

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        with np.errstate(over="ignore"):
            return np.power(s, self.beta) * np.power(1.0 + self.eps, s)


@dataclass(frozen=True)
class SeparableTerm:
    export_factor: Callable
    import_factor: Callable


# -- regime labels -----------------------------------------------------------

class RegimeLabel(enum.Enum):
    GlobalNonsymmetric = "GlobalNonsymmetric"
    GlobalSymmetric = "GlobalSymmetric"
    LocalExistenceOnly = "LocalExistenceOnly"
    ConjecturedGelation = "ConjecturedGelation"
    NonexistenceRiskSymmetric = "NonexistenceRiskSymmetric"
    NonexistenceRiskBiased = "NonexistenceRiskBiased"
    SublinearFactor = "SublinearFactor"
    Unclassified = "Unclassified"

    @property
    def at_risk(self):
        return self in (RegimeLabel.NonexistenceRiskBiased,
                        RegimeLabel.NonexistenceRiskSymmetric)


class Regime(NamedTuple):
    """Classification result.

    ``conjectured_gelation`` is only ever set together with
    ``LocalExistenceOnly`` (the intermediate symmetric regime).
    """

    label: RegimeLabel
    conjectured_gelation: bool = False


# -- the kernel --------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Kernel:
    """An interaction kernel with declared structural metadata.

    Parameters
    ----------
    terms : sequence of SeparableTerm, optional
        Present for the separable-sum form.
    callback : callable, optional
        ``callback(j, k) -> float`` for the general form.
    symmetric_declared : bool
        Claims ``K(j, k) = K(k, j)`` for ``j, k >= 1``.
    exponents : (mu, nu), optional
        Declared power-form exponents.
    growth_exponent : float, optional
        Declared ``beta`` with ``K(j, k) >= C j**beta`` for ``k >= 1``.
    bias : (beta, eps), optional
        Declared bias ``K(k, j) >= (1+eps) K(j, k)`` for ``j > k``.
    sublinear : bool
        Declared ``a(j), b(j) = o(j)`` factor form.
    """

    terms: Optional[tuple] = None
    callback: Optional[Callable] = None
    symmetric_declared: bool = False
    exponents: Optional[tuple] = None
    growth_exponent: Optional[float] = None
    bias: Optional[tuple] = None
    sublinear: bool = False
    name: str = "kernel"
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if (self.terms is None) == (self.callback is None):
            raise InvalidKernel("exactly one of terms/callback must be given")
        if self.terms is not None:
            object.__setattr__(self, "terms", tuple(self.terms))
            if not self.terms:
                raise InvalidKernel("separable kernel needs at least one term")

    def __getstate__(self):
        state = dict(self.__dict__)
        state["_cache"] = {}
        return state

    def __setstate__(self, state):
        self.__dict__.update(state)

    @property
    def form(self):
        return "separable-sum" if self.terms is not None else "general-callback"

    @property
    def is_separable(self):
        return self.terms is not None

    def __call__(self, j, k):
        return eval_kernel(self, j, k)

    # -- array views, cached per truncation order ---------------------------

    def factors(self, N):
        """Return ``(A, B)`` of shape ``(R, N+1)``: ``A[r, j] = a_r(j)``.

        ``A[:, 0]`` is forced to zero so that ``K(0, k) = 0``.
        """
        if not self.is_separable:
            raise InvalidKernel("factors() needs a separable-sum kernel")
        key = ("factors", N)
        if key not in self._cache:
            s = np.arange(N + 1, dtype=float)
            A = np.array([np.broadcast_to(t.export_factor(s), s.shape) for t in self.terms], dtype=float)
            B = np.array([np.broadcast_to(t.import_factor(s), s.shape) for t in self.terms], dtype=float)
            A[:, 0] = 0.0
            _validate_values(A, self.name)
            _validate_values(B, self.name)
            A.setflags(write=False)
            B.setflags(write=False)
            self._cache[key] = (A, B)
        return self._cache[key]

    def matrix(self, N):
        """Dense ``(N+1, N+1)`` matrix ``M[j, k] = K(j, k)``; row 0 is zero."""
        key = ("matrix", N)
        if key not in self._cache:
            if self.is_separable:
                A, B = self.factors(N)
                M = np.zeros((N + 1, N + 1))
                for r in range(A.shape[0]):
                    M += np.outer(A[r], B[r])
            else:
                M = np.zeros((N + 1, N + 1))
                for j in range(1, N + 1):
                    for k in range(N + 1):
                        M[j, k] = self.callback(j, k)
            _validate_values(M, self.name)
            M.setflags(write=False)
            self._cache[key] = M
        return self._cache[key]

    def zero_column_vanishes(self, N):
        """True when ``K(j, 0) = 0`` for all ``1 <= j <= N`` (classical mode)."""
        key = ("classical", N)
        if key not in self._cache:
            if self.is_separable:
                A, B = self.factors(N)
                col = A[:, 1:].T @ B[:, 0]
            else:
                col = np.array([self.callback(j, 0) for j in range(1, N + 1)])
            self._cache[key] = bool(np.all(col == 0.0))
        return self._cache[key]


def _validate_values(arr, name):
    if not np.all(np.isfinite(arr)):
        raise InvalidKernel(f"{name}: non-finite kernel value (overflow?)")
    if np.any(arr < 0):
        raise InvalidKernel(f"{name}: negative kernel value")


def _check_rate(value, name, j, k):
    value = float(value)
    if not math.isfinite(value) or value < 0:
        raise InvalidKernel(f"{name}: K({j},{k}) = {value!r} is not a finite nonnegative rate")
    return value


def eval_kernel(kernel, j, k):
    """Evaluate ``K(j, k)``; always 0 for ``j = 0``."""
    if j < 0 or k < 0:
        raise InvalidParameter(f"cluster sizes must be >= 0, got ({j}, {k})")
    if j == 0:
        return 0.0
    if kernel.is_separable:
        parts = [float(t.export_factor(float(j))) * float(t.import_factor(float(k)))
                 for t in kernel.terms]
        return _check_rate(math.fsum(parts), kernel.name, j, k)
    return _check_rate(kernel.callback(j, k), kernel.name, j, k)


# -- constructors ------------------------------------------------------------

def _import_factor(p, classical_mode):
    return PowerFactor(p, zero_at_zero=classical_mode)


def constant_kernel(classical_mode=False):
    """``K(j, k) = 1`` for ``j >= 1``; ``K(j, 0) = 0`` in classical mode."""
    term = SeparableTerm(PowerFactor(0.0, zero_at_zero=True), _import_factor(0.0, classical_mode))
    return Kernel(terms=(term,), symmetric_declared=True, exponents=(0.0, 0.0),
                  growth_exponent=0.0, name="constant")


def product_kernel(mu, nu=None, classical_mode=False):
    """``K(j, k) = j**mu * k**nu``.  Symmetric iff ``mu == nu``."""
    nu = mu if nu is None else nu
    _check_exponents(mu, nu)
    term = SeparableTerm(PowerFactor(mu, zero_at_zero=True), _import_factor(nu, classical_mode))
    return Kernel(terms=(term,), symmetric_declared=(mu == nu), exponents=(float(mu), float(nu)),
                  growth_exponent=float(mu), name=f"product({mu:g},{nu:g})")


def sum_kernel(mu, nu, classical_mode=False):
    """``K(j, k) = j**mu k**nu + j**nu k**mu`` (symmetric two-term form)."""
    _check_exponents(mu, nu)
    terms = (
        SeparableTerm(PowerFactor(mu, zero_at_zero=True), _import_factor(nu, classical_mode)),
        SeparableTerm(PowerFactor(nu, zero_at_zero=True), _import_factor(mu, classical_mode)),
    )
    return Kernel(terms=terms, symmetric_declared=True, exponents=(float(mu), float(nu)),
                  growth_exponent=float(max(mu, nu)), name=f"sum({mu:g},{nu:g})")


def power_kernel(beta, classical_mode=False):
    """Homogeneous symmetric ``K(j, k) = (j k)**beta``."""
    return product_kernel(beta, beta, classical_mode=classical_mode)


def make_biased(beta, eps):
    """Biased kernel ``K(j, k) = j**beta k**beta (1+eps)**k`` with ``K(j, 0) = 0``.

    Satisfies ``K(k, j) = (1+eps)**(j-k) K(j, k) >= (1+eps) K(j, k)`` for
    ``j > k >= 1`` and ``K(j, k) >= j**beta`` for ``k >= 1``.
    """
    if not beta > 1:
        raise InvalidParameter(f"biased kernel needs beta > 1, got {beta}")
    if not eps > 0:
        raise InvalidParameter(f"biased kernel needs eps > 0, got {eps}")
    term = SeparableTerm(PowerFactor(beta, zero_at_zero=True), BiasedFactor(beta, eps))
    return Kernel(terms=(term,), symmetric_declared=False, exponents=None,
                  growth_exponent=float(beta), bias=(float(beta), float(eps)),
                  name=f"biased({beta:g},{eps:g})")


def _min_kernel(j, k):
    return float(min(j, k))


def _max_kernel(j, k):
    return float(max(j, k)) if j > 0 else 0.0


BUILTIN_CALLBACKS = {
    "min": _min_kernel,
    "max": _max_kernel,
}


def callback_kernel(fn, symmetric=False, name="callback", **metadata):
    return Kernel(callback=fn, symmetric_declared=symmetric, name=name, **metadata)


def _check_exponents(mu, nu):
    for v in (mu, nu):
        if not math.isfinite(v) or v < 0:
            raise InvalidParameter(f"kernel exponents must be finite and >= 0, got {v}")


# -- classification ----------------------------------------------------------

def classify(kernel):
    """Map declared kernel structure to an existence regime.

    Pure function of the metadata; never samples the kernel.
    """
    if kernel.sublinear:
        return Regime(RegimeLabel.SublinearFactor)
    if kernel.bias is not None and kernel.bias[0] > 1:
        return Regime(RegimeLabel.NonexistenceRiskBiased)
    if kernel.exponents is None:
        if kernel.symmetric_declared and kernel.growth_exponent is not None and kernel.growth_exponent > 2:
            return Regime(RegimeLabel.NonexistenceRiskSymmetric)
        return Regime(RegimeLabel.Unclassified)

    mu, nu = kernel.exponents
    if kernel.symmetric_declared:
        if mu <= 2 and nu <= 2:
            if mu + nu <= 3:
                return Regime(RegimeLabel.GlobalSymmetric)
            return Regime(RegimeLabel.LocalExistenceOnly, conjectured_gelation=True)
        beta = kernel.growth_exponent if kernel.growth_exponent is not None else max(mu, nu)
        if beta > 2:
            return Regime(RegimeLabel.NonexistenceRiskSymmetric)
        return Regime(RegimeLabel.Unclassified)
    if mu <= 1 and nu <= 1:
        return Regime(RegimeLabel.GlobalNonsymmetric)
    return Regime(RegimeLabel.Unclassified)


class SymmetryReport(NamedTuple):
    is_nearly_symmetric: bool
    witness: Optional[tuple]


def check_symmetry(kernel, probe_bound=DEFAULT_PROBE_BOUND, rtol=1e-12):
    """Test ``K(j, k) == K(k, j)`` for ``1 <= j < k <= probe_bound``.

    The ``k = 0`` column is not part of near symmetry and is ignored.
    ``witness`` is the first failing pair in lexicographic order.
    """
    if probe_bound < 2:
        raise InvalidParameter("probe_bound must be >= 2")
    M = kernel.matrix(probe_bound)[1:, 1:]
    bad = ~np.isclose(M, M.T, rtol=rtol, atol=0.0)
    bad = np.triu(bad, k=1)
    if not bad.any():
        return SymmetryReport(True, None)
    j, k = np.argwhere(bad)[0]
    return SymmetryReport(False, (int(j) + 1, int(k) + 1))
