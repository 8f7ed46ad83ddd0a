"""Probe networks and estimators for distributed displacement and phase sensing."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from .gaussian import (
    GaussianState,
    HomodyneRecord,
    NumericalError,
    SymplecticTransform,
    apply_symplectic,
    displace_all_x,
    displace_x,
    distribution_array,
    random_gaussian_state,
    squeezed_vacuum,
    squeezing_factor,
    tensor_product,
    vacuum,
)


class Kind(str, Enum):
    ENTANGLED = "entangled"
    SEPARABLE = "separable"


class Task(str, Enum):
    DISPLACEMENT = "displacement"
    PHASE = "phase"


class SpecError(ValueError):
    """Invalid network description; ``field`` names the offending entry."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


def normalize_weights(weights: Sequence[float]) -> np.ndarray:
    """Scale weights so that ``sum |w_m| = 1``."""
    w = np.asarray(weights, dtype=float)
    total = np.sum(np.abs(w))
    if total == 0:
        raise SpecError("weights", "all weights are zero")
    return w / total


@dataclass(frozen=True, eq=False)
class SensorNetworkSpec:
    """Sensing task: node count, estimator weights, per-node losses and photon budget.

    Weights may be signed; they must satisfy ``sum |w_m| = 1``
    (see :func:`normalize_weights`).
    """

    num_nodes: int
    weights: np.ndarray
    transmissivities: np.ndarray
    photon_budget: float
    kind: Kind = Kind.ENTANGLED
    task: Task = Task.DISPLACEMENT

    def __post_init__(self):
        if int(self.num_nodes) != self.num_nodes or self.num_nodes < 1:
            raise SpecError("M", f"must be a positive integer, got {self.num_nodes!r}")
        m = int(self.num_nodes)
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        eta = np.asarray(self.transmissivities, dtype=float)
        if eta.ndim == 0:
            eta = np.full(m, float(eta))
        if w.shape != (m,) or not np.all(np.isfinite(w)):
            raise SpecError("weights", f"need {m} finite entries")
        if abs(np.sum(np.abs(w)) - 1.0) > 1e-12:
            raise SpecError("weights", "must satisfy sum |w_m| = 1")
        if eta.shape != (m,) or np.any(~np.isfinite(eta)) or np.any(eta <= 0) or np.any(eta > 1):
            raise SpecError("transmissivities", f"need {m} entries in (0, 1]")
        n = float(self.photon_budget)
        if not np.isfinite(n) or n < 0:
            raise SpecError("photon_budget", f"must be finite and >= 0, got {self.photon_budget!r}")
        try:
            kind = Kind(self.kind)
        except ValueError:
            raise SpecError("kind", f"unknown kind {self.kind!r}") from None
        try:
            task = Task(self.task)
        except ValueError:
            raise SpecError("task", f"unknown task {self.task!r}") from None
        w.setflags(write=False)
        eta = eta.copy()
        eta.setflags(write=False)
        object.__setattr__(self, "num_nodes", m)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "transmissivities", eta)
        object.__setattr__(self, "photon_budget", n)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "task", task)

    @classmethod
    def homogeneous(cls, num_nodes: int, photon_budget: float, eta: float = 1.0,
                    kind=Kind.ENTANGLED, task=Task.DISPLACEMENT) -> "SensorNetworkSpec":
        """Equal weights ``1/M`` and identical transmissivities."""
        return cls(num_nodes, np.full(num_nodes, 1.0 / num_nodes),
                   np.full(num_nodes, float(eta)), photon_budget, kind, task)

    def replace(self, **changes) -> "SensorNetworkSpec":
        fields = dict(num_nodes=self.num_nodes, weights=self.weights,
                      transmissivities=self.transmissivities,
                      photon_budget=self.photon_budget, kind=self.kind, task=self.task)
        fields.update(changes)
        return SensorNetworkSpec(**fields)

    def target(self, alphas: Sequence[float]) -> float:
        """The weighted average ``sum w_m alpha_m`` being estimated."""
        return float(self.weights @ np.asarray(alphas, dtype=float))

    def to_dict(self) -> dict:
        return {
            "M": self.num_nodes,
            "weights": self.weights.tolist(),
            "transmissivities": self.transmissivities.tolist(),
            "photon_budget": self.photon_budget,
            "kind": self.kind.value,
            "task": self.task.value,
        }


@dataclass(frozen=True, eq=False)
class ProbePlan:
    """A probe state ready to send through the network, with its predicted precision."""

    spec: SensorNetworkSpec
    probe: GaussianState
    distribution: SymplecticTransform
    estimator_weights: np.ndarray
    analytic_precision: float
    allocation: np.ndarray | None = None


@dataclass(frozen=True, eq=False)
class AllocationResult:
    allocation: np.ndarray
    objective: float
    converged: bool = True

    @property
    def precision(self) -> float:
        return float(np.sqrt(self.objective))


# --- entangled protocol -----------------------------------------------------

def entangled_coefficients(weights, transmissivities) -> np.ndarray:
    """Beam-splitter amplitudes ``v_m`` proportional to ``w_m sqrt(eta_m)``, unit norm."""
    v = np.asarray(weights, dtype=float) * np.sqrt(np.asarray(transmissivities, dtype=float))
    norm = np.linalg.norm(v)
    if norm == 0:
        raise SpecError("weights", "no node carries weight")
    return v / norm


def analytic_precision_entangled(spec: SensorNetworkSpec) -> float:
    """RMS error of the weighted homodyne estimator on the optimal entangled probe.

    ``(|w| / 2) sqrt(eta_eff / s(N_S) + 1 - eta_eff)`` with
    ``eta_eff = sum w^2 eta / sum w^2`` and ``|w| = sqrt(sum w^2)``.
    """
    w2 = spec.weights ** 2
    wnorm2 = float(np.sum(w2))
    eta_eff = float(np.sum(w2 * spec.transmissivities) / wnorm2)
    s = squeezing_factor(spec.photon_budget)
    return 0.5 * np.sqrt(wnorm2) * np.sqrt(eta_eff / s + 1.0 - eta_eff)


def build_entangled(spec: SensorNetworkSpec) -> ProbePlan:
    """Squeezed vacuum on mode 1, vacuum elsewhere, spread by the optimal beam-splitter array."""
    if spec.kind is not Kind.ENTANGLED:
        raise SpecError("kind", "build_entangled needs kind='entangled'")
    if spec.task is not Task.DISPLACEMENT:
        raise SpecError("task", "probe construction covers displacement sensing")
    v = entangled_coefficients(spec.weights, spec.transmissivities)
    source = squeezed_vacuum(spec.photon_budget)
    if spec.num_nodes > 1:
        source = tensor_product(source, vacuum(spec.num_nodes - 1))
    array = distribution_array(v)
    probe = apply_symplectic(source, array)
    return ProbePlan(spec, probe, array, spec.weights.copy(), analytic_precision_entangled(spec))


# --- separable protocol -----------------------------------------------------

def separable_objective(allocation, weights, transmissivities) -> float:
    """Estimator variance ``sum w^2 (eta / s(N_m) + 1 - eta) / 4`` of a product of squeezed vacua."""
    n = np.asarray(allocation, dtype=float)
    w2 = np.asarray(weights, dtype=float) ** 2
    eta = np.asarray(transmissivities, dtype=float)
    return float(np.sum(w2 * (eta / squeezing_factor(n) + 1.0 - eta)) / 4.0)


def _marginal_gain(n: float) -> float:
    """``-d/dN [1/s(N)]``, decreasing from infinity at ``N = 0``."""
    t4 = (np.sqrt(n + 1.0) - np.sqrt(n)) ** 4
    return 4.0 * t4 / (1.0 - t4)


def _marginal_gain_inverse(y: np.ndarray) -> np.ndarray:
    """Photon number N at which ``-d/dN [1/s(N)] = y``.

    With ``t = sqrt(N+1) - sqrt(N)`` the derivative is ``4 t^4 / (1 - t^4)``, so
    ``t^4 = y / (4 + y)`` and ``sqrt(N) = (1 - t^2) / (2 t)``.
    """
    u = y / (4.0 + y)
    t2 = np.sqrt(u)
    one_minus_t2 = (4.0 / (4.0 + y)) / (1.0 + t2)
    return (one_minus_t2 / (2.0 * np.sqrt(t2))) ** 2


def optimize_allocation(weights, transmissivities, photon_budget: float) -> AllocationResult:
    """Photon allocation minimising :func:`separable_objective` under ``sum N_m = N_S``.

    The objective is convex and its marginal gain diverges at ``N_m = 0``, so
    every node with ``w_m^2 eta_m > 0`` receives photons and the optimum solves
    ``w_m^2 eta_m g(N_m) = lambda``. The multiplier is found by root bracketing
    on ``log lambda``; zero-weight nodes get nothing.
    """
    w = np.asarray(weights, dtype=float)
    eta = np.asarray(transmissivities, dtype=float)
    budget = float(photon_budget)
    c = w**2 * eta
    active = c > 0
    alloc = np.zeros(w.size)
    if budget == 0 or not np.any(active):
        if budget > 0:
            alloc[:] = budget / w.size
        return AllocationResult(alloc, separable_objective(alloc, w, eta))

    ca = c[active]
    k = ca.size

    def excess(log_lam):
        return np.sum(_marginal_gain_inverse(np.exp(log_lam) / ca)) - budget

    lo = np.log(np.min(ca) * _marginal_gain(budget)) - 1.0
    hi = np.log(np.max(ca) * _marginal_gain(budget / k)) + 1.0
    converged = True
    try:
        log_lam = brentq(excess, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=500)
        alloc[active] = _marginal_gain_inverse(np.exp(log_lam) / ca)
        alloc *= budget / np.sum(alloc)
    except (ValueError, RuntimeError):
        converged = False
        alloc[active] = budget / k
    return AllocationResult(alloc, separable_objective(alloc, w, eta), converged)


def build_separable(spec: SensorNetworkSpec) -> ProbePlan:
    """Product of squeezed vacua with the variance-minimising photon allocation."""
    if spec.kind is not Kind.SEPARABLE:
        raise SpecError("kind", "build_separable needs kind='separable'")
    if spec.task is not Task.DISPLACEMENT:
        raise SpecError("task", "probe construction covers displacement sensing")
    res = optimize_allocation(spec.weights, spec.transmissivities, spec.photon_budget)
    if not res.converged:
        raise NumericalError(
            f"allocation optimizer did not converge; best objective {res.objective:.6g}"
        )
    probe = tensor_product(*(squeezed_vacuum(n) for n in res.allocation))
    ident = SymplecticTransform(np.eye(2 * spec.num_nodes))
    return ProbePlan(spec, probe, ident, spec.weights.copy(), res.precision, res.allocation)


def build_plan(spec: SensorNetworkSpec) -> ProbePlan:
    return build_entangled(spec) if spec.kind is Kind.ENTANGLED else build_separable(spec)


def analytic_precision(spec: SensorNetworkSpec) -> float:
    if spec.kind is Kind.ENTANGLED:
        return analytic_precision_entangled(spec)
    return optimize_allocation(spec.weights, spec.transmissivities, spec.photon_budget).precision


# --- estimator --------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class WeightedEstimate:
    estimates: np.ndarray
    mean: float
    std: float

    @property
    def stderr(self) -> float:
        return self.std / np.sqrt(self.estimates.size)


def weighted_estimate(record: HomodyneRecord, estimator_weights) -> WeightedEstimate:
    """Per-trial ``sum_m w_m x_m`` with its sample mean and standard deviation."""
    w = np.asarray(estimator_weights, dtype=float)
    if record.samples.shape[1] != w.size:
        raise ValueError("estimator weights do not match record width")
    est = record.samples @ w
    std = float(np.std(est, ddof=1)) if est.size > 1 else 0.0
    return WeightedEstimate(est, float(np.mean(est)), std)


# --- reduction relation -----------------------------------------------------

@dataclass(frozen=True)
class ReductionWitness:
    holds: bool
    max_deviation: float
    mode1_shift: float


def reduction_check(num_modes: int, alpha: float, tolerance: float = 1e-10,
                    seed: int = 0) -> ReductionWitness:
    """Check ``B^dag U(alpha)^{xM} B = U(sqrt(M) alpha) x 1`` on a random Gaussian state.

    ``B`` is the balanced beam-splitter array. Both sides act on the same
    random mixed state and the largest mean/covariance discrepancy is reported.
    """
    m = int(num_modes)
    if m < 1:
        raise ValueError("num_modes must be >= 1")
    rng = np.random.default_rng(seed)
    state = random_gaussian_state(m, rng)
    b = distribution_array(np.full(m, 1.0 / np.sqrt(m)))
    lhs = apply_symplectic(state, b)
    lhs = displace_all_x(lhs, np.full(m, alpha))
    lhs = apply_symplectic(lhs, b.inverse())
    rhs = displace_x(state, 0, np.sqrt(m) * alpha)
    dev = max(np.max(np.abs(lhs.mean - rhs.mean)), np.max(np.abs(lhs.cov - rhs.cov)))
    return ReductionWitness(bool(dev < tolerance), float(dev), float(lhs.mean[0] - state.mean[0]))


# --- phase sensing closed forms ---------------------------------------------

def phase_precisions(num_modes: int, photons_per_mode: float):
    """Homodyne phase precisions ``(entangled, separable)`` for equal weights.

    Entangled: ``1/sqrt(8 M n (M n + 1))``; separable: ``1/sqrt(8 M n (n + 1))``.
    """
    m = int(num_modes)
    n = float(photons_per_mode)
    if m < 1:
        raise ValueError("num_modes must be >= 1")
    if not n > 0:
        raise ValueError("photons per mode must be > 0")
    return (1.0 / np.sqrt(8 * m * n * (m * n + 1)), 1.0 / np.sqrt(8 * m * n * (n + 1)))


def ge_lower_bound(w_star, n_star) -> float:
    """Lower bound ``M |w*|^2 / (2 |n*|)`` for beam-splitter phase sensing with product inputs."""
    w = np.atleast_1d(np.asarray(w_star, dtype=float))
    n = np.atleast_1d(np.asarray(n_star, dtype=float))
    if w.shape != n.shape:
        raise ValueError("w_star and n_star must have the same length")
    nn = np.linalg.norm(n)
    if nn == 0:
        raise ValueError("photon-number fluctuation vector is zero")
    return float(w.size * np.sum(w**2) / (2 * nn))


def squeezed_number_fluctuation(n_photons: float) -> float:
    """``sqrt(<n^2>) = sqrt(N (3N + 2))`` for a squeezed vacuum."""
    n = float(n_photons)
    return float(np.sqrt(n * (3 * n + 2)))


def twin_fock_precision(n_photons: float) -> float:
    """Phase precision ``2 / sqrt(2 N (N + 2))`` of the generalized twin-Fock protocol."""
    n = float(n_photons)
    if not n > 0:
        raise ValueError("photon number must be > 0")
    return float(2.0 / np.sqrt(2 * n * (n + 2)))


__all__ = [
    "AllocationResult",
    "Kind",
    "ProbePlan",
    "ReductionWitness",
    "SensorNetworkSpec",
    "SpecError",
    "Task",
    "WeightedEstimate",
    "analytic_precision",
    "analytic_precision_entangled",
    "build_entangled",
    "build_plan",
    "build_separable",
    "entangled_coefficients",
    "ge_lower_bound",
    "normalize_weights",
    "optimize_allocation",
    "phase_precisions",
    "reduction_check",
    "separable_objective",
    "squeezed_number_fluctuation",
    "twin_fock_precision",
    "weighted_estimate",
]
