"""Fisher information for displacement sensing: closed forms, bounds and numerics.

Every closed form here uses the quadrature convention of :mod:`dqsense.gaussian`
(vacuum variance 1/4), in which a coherent probe carries Fisher information 4
per unit displacement and a squeezed vacuum with N photons carries
``4 (sqrt(N+1) + sqrt(N))**2``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Sequence

import numpy as np

from .gaussian import (
    GaussianState,
    NumericalError,
    displace_x,
    log_fidelity,
    pure_loss,
    squeezed_vacuum,
    squeezing_factor,
)


class Method(str, Enum):
    CLOSED_FORM = "closed_form"
    FIDELITY_FD = "fidelity_fd"
    VARIANCE_FORM = "variance_form"
    UPPER_BOUND = "upper_bound"


@dataclass(frozen=True)
class FisherReport:
    """A Fisher-information value together with how it was obtained."""

    value: float
    method: Method
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if not np.isfinite(self.value) or self.value < 0:
            raise NumericalError(f"invalid Fisher information {self.value!r}")
        object.__setattr__(self, "value", float(self.value))
        object.__setattr__(self, "method", Method(self.method))

    @property
    def precision(self) -> float:
        """Single-shot Cramer-Rao precision ``1/sqrt(I)``."""
        return float(np.inf) if self.value == 0 else 1.0 / np.sqrt(self.value)

    def to_dict(self) -> dict:
        return {"value": self.value, "method": self.method.value, "params": dict(self.params)}


@dataclass(frozen=True, eq=False)
class FisherMatrix:
    matrix: np.ndarray
    labels: tuple = ()

    def __post_init__(self):
        h = np.asarray(self.matrix, dtype=float)
        if h.ndim != 2 or h.shape[0] != h.shape[1]:
            raise ValueError("Fisher matrix must be square")
        if np.max(np.abs(h - h.T), initial=0.0) > 1e-10 * max(1.0, np.max(np.abs(h))):
            raise ValueError("Fisher matrix is not symmetric")
        h = 0.5 * (h + h.T)
        if h.size and np.min(np.linalg.eigvalsh(h)) < -1e-10 * max(1.0, np.max(np.abs(h))):
            raise ValueError("Fisher matrix is not positive semidefinite")
        labels = tuple(self.labels) or tuple(f"alpha_{k}" for k in range(h.shape[0]))
        if len(labels) != h.shape[0]:
            raise ValueError("one label per parameter required")
        h.setflags(write=False)
        object.__setattr__(self, "matrix", h)
        object.__setattr__(self, "labels", labels)


def _check_eta(eta: float, allow_zero: bool = True) -> float:
    eta = float(eta)
    lo_ok = eta >= 0 if allow_zero else eta > 0
    if not (lo_ok and eta <= 1):
        interval = "[0, 1]" if allow_zero else "(0, 1]"
        raise ValueError(f"transmissivity eta={eta} outside {interval}")
    return eta


def _check_photons(n: float) -> float:
    n = float(n)
    if not np.isfinite(n) or n < 0:
        raise ValueError(f"photon number {n} must be finite and >= 0")
    return n


def _check_modes(m: int) -> int:
    if int(m) != m or m < 1:
        raise ValueError(f"mode count {m} must be a positive integer")
    return int(m)


def _gauss_max(n_photons: float, eta: float) -> float:
    return 4.0 / (eta / squeezing_factor(n_photons) + 1.0 - eta)


# --- numerical route --------------------------------------------------------

def _fd_estimate(family, alpha0: float, eps: float) -> float:
    a = family(alpha0 - eps / 2)
    b = family(alpha0 + eps / 2)
    half_log_f = 0.5 * log_fidelity(a, b)
    one_minus_sqrt_f = -np.expm1(half_log_f)
    if one_minus_sqrt_f >= 0.1:
        raise ValueError(f"step eps={eps} too large: 1 - sqrt(F) = {one_minus_sqrt_f:.3g}")
    return 8.0 * one_minus_sqrt_f / eps**2


def fisher_fd(family: Callable[[float], GaussianState], alpha0: float,
              eps: float = 1e-4, richardson: bool = True) -> FisherReport:
    """Fisher information from the fidelity between neighbouring family members.

    Evaluates ``8 (1 - sqrt(F(rho(a - e/2), rho(a + e/2)))) / e**2`` and, by
    default, one Richardson step with ``e/2`` to cancel the ``O(e**2)`` term.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    coarse = _fd_estimate(family, alpha0, eps)
    value = (4.0 * _fd_estimate(family, alpha0, eps / 2) - coarse) / 3.0 if richardson else coarse
    return FisherReport(max(value, 0.0), Method.FIDELITY_FD,
                        {"alpha0": float(alpha0), "eps": float(eps)})


def displacement_family(state: GaussianState, eta=1.0, mode: int = 0):
    """``alpha -> displace_x(pure_loss(state, eta), mode, alpha)``."""
    lossy = pure_loss(state, eta)
    return lambda alpha: displace_x(lossy, mode, alpha)


# --- closed forms -----------------------------------------------------------

def displacement_qfi_gaussian(n_photons: float, eta: float) -> FisherReport:
    """Best single-mode Gaussian displacement Fisher information ``4 / (eta/s + 1 - eta)``.

    Attained by a squeezed vacuum with ``n_photons`` photons sent through a
    pure-loss channel of transmissivity ``eta``.
    """
    n = _check_photons(n_photons)
    eta = _check_eta(eta, allow_zero=False)
    return FisherReport(_gauss_max(n, eta), Method.CLOSED_FORM, {"N_S": n, "eta": eta})


def single_mode_gaussian_fisher(r: float, n_thermal: float, theta: float, eta: float) -> float:
    """Displacement Fisher information of an arbitrary single-mode Gaussian probe after loss.

    The probe covariance is ``R(theta) diag((2n+1) e^-r, (2n+1) e^r) R(theta)^T / 4``.
    Note ``r`` here is twice the usual squeezing parameter: ``e^r`` equals the
    squeezing factor, and the pure-state photon number is ``(cosh r - 1)/2``.
    """
    eta = _check_eta(eta)
    k = 2 * n_thermal + 1
    er = np.exp(r)
    c2, s2 = np.cos(theta) ** 2, np.sin(theta) ** 2
    num = 4.0 * (er * (1 - eta) + k * eta * (np.exp(2 * r) * c2 + s2))
    den = (er * (1 - eta) + k * eta) * (k * eta * er + 1 - eta)
    return float(num / den)


def entangled_max_fisher(num_modes: int, n_photons: float, eta: float) -> FisherReport:
    """``M`` times the single-mode optimum at the full photon budget."""
    m = _check_modes(num_modes)
    n = _check_photons(n_photons)
    eta = _check_eta(eta)
    return FisherReport(m * _gauss_max(n, eta), Method.CLOSED_FORM,
                        {"M": m, "N_S": n, "eta": eta, "kind": "entangled"})


def separable_max_fisher(num_modes: int, n_photons: float, eta: float) -> FisherReport:
    """``M`` times the single-mode optimum at ``N_S / M`` photons per mode."""
    m = _check_modes(num_modes)
    n = _check_photons(n_photons)
    eta = _check_eta(eta)
    return FisherReport(m * _gauss_max(n / m, eta), Method.CLOSED_FORM,
                        {"M": m, "N_S": n, "eta": eta, "kind": "separable"})


def ub_entangled(num_modes: int, n_photons: float, eta: float) -> FisherReport:
    """Loss upper bound ``eta 4 M s(N_S) + 4 (1 - eta) M`` over all entangled probes."""
    m = _check_modes(num_modes)
    n = _check_photons(n_photons)
    eta = _check_eta(eta)
    value = eta * 4 * m * squeezing_factor(n) + 4 * (1 - eta) * m
    return FisherReport(value, Method.UPPER_BOUND,
                        {"M": m, "N_S": n, "eta": eta, "kind": "entangled"})


def ub_separable(num_modes: int, n_photons: float, eta: float) -> FisherReport:
    """Loss upper bound ``eta 4 M s(N_S/M) + 4 (1 - eta) M`` over separable probes."""
    m = _check_modes(num_modes)
    n = _check_photons(n_photons)
    eta = _check_eta(eta)
    value = eta * 4 * m * squeezing_factor(n / m) + 4 * (1 - eta) * m
    return FisherReport(value, Method.UPPER_BOUND,
                        {"M": m, "N_S": n, "eta": eta, "kind": "separable"})


def dv_bounds(num_modes: int, lambda_min: float, lambda_max: float):
    """Separable and entangled Fisher limits for a bounded generator.

    Returns:
        (separable, entangled) reports with values ``M d**2`` and ``M**2 d**2``,
        ``d = lambda_max - lambda_min``.
    """
    m = _check_modes(num_modes)
    if lambda_max < lambda_min:
        raise ValueError("lambda_max must be >= lambda_min")
    gap2 = float(lambda_max - lambda_min) ** 2
    params = {"M": m, "lambda_min": float(lambda_min), "lambda_max": float(lambda_max)}
    return (
        FisherReport(m * gap2, Method.UPPER_BOUND, {**params, "kind": "separable"}),
        FisherReport(m * m * gap2, Method.UPPER_BOUND, {**params, "kind": "entangled"}),
    )


# Displacing x by alpha is generated by 2p (since [x, p] = i/2), so
# I = 4 var(2 c.p) = 16 c^T Vpp c.  Calibrated against fisher_fd: vacuum -> 4.
_VARIANCE_FORM_SCALE = 16.0


def variance_form_fisher(state: GaussianState, weights: Sequence[float]) -> FisherReport:
    """Pure-state Fisher information ``4 var(generator)`` for the displacement ``x_m += c_m alpha``.

    Args:
        state: pure Gaussian probe.
        weights: per-mode displacement multipliers ``c_m``.

    Raises:
        ValueError: if the state is mixed; the variance form is invalid there.
    """
    c = np.asarray(weights, dtype=float)
    if c.shape != (state.num_modes,):
        raise ValueError("need one weight per mode")
    if not state.is_pure():
        raise ValueError("variance form holds only for pure states")
    value = _VARIANCE_FORM_SCALE * float(c @ state.p_cov @ c)
    return FisherReport(value, Method.VARIANCE_FORM, {"weights": c.tolist()})


def fisher_matrix_displacement(state: GaussianState, jacobian,
                               labels: Sequence[str] = ()) -> FisherMatrix:
    """Fisher matrix ``J^T V^-1 J`` for parameters that only move the mean.

    ``jacobian`` has shape ``(2M, K)``; column ``k`` is ``d mean / d alpha_k``.
    Valid for mixed states as well.
    """
    j = np.asarray(jacobian, dtype=float)
    if j.ndim == 1:
        j = j[:, None]
    if j.shape[0] != state.mean.size:
        raise ValueError("jacobian rows must match the 2M quadratures")
    cond = np.linalg.cond(state.cov)
    if not np.isfinite(cond) or cond > 1e14:
        raise NumericalError("covariance matrix is singular")
    h = j.T @ np.linalg.solve(state.cov, j)
    return FisherMatrix(0.5 * (h + h.T), tuple(labels))


def x_jacobian(num_modes: int, multipliers=None) -> np.ndarray:
    """Jacobian for parameters ``alpha_k`` displacing the x quadrature of mode ``k``.

    With ``multipliers`` (length M) a single column for the common parameter
    ``x_m += c_m alpha`` is returned instead.
    """
    j = np.zeros((2 * num_modes, num_modes))
    j[0::2, :] = np.eye(num_modes)
    if multipliers is None:
        return j
    return j @ np.asarray(multipliers, dtype=float)[:, None]


def weighted_cr_bound(h, weights: Sequence[float]) -> float:
    """Variance bound ``w^T H^-1 w`` for the linear combination ``w . alpha``."""
    mat = h.matrix if isinstance(h, FisherMatrix) else np.asarray(h, dtype=float)
    w = np.atleast_1d(np.asarray(weights, dtype=float))
    if mat.shape != (w.size, w.size):
        raise ValueError("weight vector does not match Fisher matrix")
    eig = np.linalg.eigvalsh(mat)
    if eig[0] <= 1e-12 * max(1.0, eig[-1]):
        raise NumericalError("Fisher matrix is singular")
    return float(w @ np.linalg.solve(mat, w))


def squeezed_displacement_family(n_photons: float, eta: float = 1.0):
    """Family of the optimal single-mode probe: squeezed vacuum, loss, x-displacement."""
    return displacement_family(squeezed_vacuum(n_photons), eta)


__all__ = [
    "FisherMatrix",
    "FisherReport",
    "Method",
    "displacement_family",
    "displacement_qfi_gaussian",
    "dv_bounds",
    "entangled_max_fisher",
    "fisher_fd",
    "fisher_matrix_displacement",
    "separable_max_fisher",
    "single_mode_gaussian_fisher",
    "squeezed_displacement_family",
    "ub_entangled",
    "ub_separable",
    "variance_form_fisher",
    "weighted_cr_bound",
    "x_jacobian",
]
