"""Gaussian states of bosonic modes and the operations that act on them.

Quadratures are ``x = Re(a)`` and ``p = Im(a)``, so the vacuum covariance is
``I/4`` per mode and a real displacement ``alpha`` shifts the x-mean by exactly
``alpha``. Mean vectors and covariance matrices are interleaved,
``(x1, p1, x2, p2, ...)``.

All objects are immutable; every operation returns a new state.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

VACUUM_VARIANCE = 0.25
SYMPLECTIC_ATOL = 1e-10
SYMMETRY_RTOL = 1e-12

# trials per independently seeded sampling block
SAMPLE_BLOCK = 8192


class NumericalError(ArithmeticError):
    """A computation hit a numerically invalid regime (e.g. indefinite covariance)."""


def _frozen(a) -> np.ndarray:
    out = np.array(a, dtype=float)
    out.setflags(write=False)
    return out


def symplectic_form(num_modes: int) -> np.ndarray:
    """Block-diagonal symplectic form with ``[[0, 1], [-1, 0]]`` per mode."""
    return np.kron(np.eye(num_modes), np.array([[0.0, 1.0], [-1.0, 0.0]]))


def symplectic_eigenvalues(cov: np.ndarray) -> np.ndarray:
    """Symplectic eigenvalues of a covariance matrix, ascending, one per mode."""
    cov = np.asarray(cov, dtype=float)
    m = cov.shape[0] // 2
    ev = np.abs(np.linalg.eigvals(symplectic_form(m) @ cov))
    return np.sort(ev)[::2]


def squeezing_factor(n_photons):
    """Squeezing factor ``(sqrt(N+1) + sqrt(N))**2`` of a squeezed vacuum with N photons.

    The squeezed quadrature variance is ``1/(4 s)`` and the anti-squeezed one ``s/4``.
    Works elementwise on arrays.
    """
    n = np.asarray(n_photons, dtype=float)
    out = (np.sqrt(n + 1.0) + np.sqrt(n)) ** 2
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class GaussianState:
    """Mean vector and covariance matrix of an M-mode Gaussian state.

    The constructor checks symmetry and the uncertainty relation
    (every symplectic eigenvalue >= 1/4 up to ``SYMPLECTIC_ATOL``).
    """

    mean: np.ndarray
    cov: np.ndarray
    validate: bool = field(default=True, repr=False)

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float)
        cov = np.asarray(self.cov, dtype=float)
        if mean.ndim != 1 or mean.size == 0 or mean.size % 2:
            raise ValueError("mean must be a non-empty vector of even length 2M")
        if cov.shape != (mean.size, mean.size):
            raise ValueError(
                f"cov shape {cov.shape} does not match mean length {mean.size}"
            )
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
            raise ValueError("state contains non-finite entries")
        scale = max(float(np.max(np.abs(cov))), VACUUM_VARIANCE)
        if np.max(np.abs(cov - cov.T)) > SYMMETRY_RTOL * scale:
            raise ValueError("cov is not symmetric")
        cov = 0.5 * (cov + cov.T)
        if self.validate:
            nu = symplectic_eigenvalues(cov)
            if nu[0] < VACUUM_VARIANCE - SYMPLECTIC_ATOL:
                raise ValueError(
                    f"cov violates the uncertainty relation "
                    f"(smallest symplectic eigenvalue {nu[0]:.3e} < 1/4)"
                )
        object.__setattr__(self, "mean", _frozen(mean))
        object.__setattr__(self, "cov", _frozen(cov))

    @property
    def num_modes(self) -> int:
        return self.mean.size // 2

    @property
    def x_mean(self) -> np.ndarray:
        return self.mean[0::2]

    @property
    def x_cov(self) -> np.ndarray:
        return self.cov[0::2, 0::2]

    @property
    def p_cov(self) -> np.ndarray:
        return self.cov[1::2, 1::2]

    def mode(self, m: int) -> "GaussianState":
        """Reduced single-mode state of mode ``m``."""
        _check_mode(self, m)
        sl = slice(2 * m, 2 * m + 2)
        return GaussianState(self.mean[sl], self.cov[sl, sl])

    def allclose(self, other: "GaussianState", atol: float = 1e-10) -> bool:
        return (
            self.num_modes == other.num_modes
            and np.allclose(self.mean, other.mean, rtol=0, atol=atol)
            and np.allclose(self.cov, other.cov, rtol=0, atol=atol)
        )

    def is_pure(self, atol: float = 1e-8) -> bool:
        return bool(np.all(np.abs(symplectic_eigenvalues(self.cov) - VACUUM_VARIANCE) <= atol))


@dataclass(frozen=True, eq=False)
class SymplecticTransform:
    """Affine symplectic map ``mean -> S mean + shift``, ``cov -> S cov S^T``."""

    matrix: np.ndarray
    shift: np.ndarray | None = None

    def __post_init__(self):
        s = np.asarray(self.matrix, dtype=float)
        if s.ndim != 2 or s.shape[0] != s.shape[1] or s.shape[0] % 2:
            raise ValueError("symplectic matrix must be square with even dimension")
        omega = symplectic_form(s.shape[0] // 2)
        if np.max(np.abs(s @ omega @ s.T - omega)) > SYMPLECTIC_ATOL:
            raise ValueError("matrix is not symplectic (S Omega S^T != Omega)")
        d = np.zeros(s.shape[0]) if self.shift is None else np.asarray(self.shift, dtype=float)
        if d.shape != (s.shape[0],):
            raise ValueError("shift length does not match matrix dimension")
        object.__setattr__(self, "matrix", _frozen(s))
        object.__setattr__(self, "shift", _frozen(d))

    @property
    def num_modes(self) -> int:
        return self.matrix.shape[0] // 2

    def __matmul__(self, other: "SymplecticTransform") -> "SymplecticTransform":
        """``self @ other`` applies ``other`` first, then ``self``."""
        return SymplecticTransform(
            self.matrix @ other.matrix, self.matrix @ other.shift + self.shift
        )

    def inverse(self) -> "SymplecticTransform":
        omega = symplectic_form(self.num_modes)
        inv = -omega @ self.matrix.T @ omega
        return SymplecticTransform(inv, -inv @ self.shift)


@dataclass(frozen=True, eq=False)
class LossMap:
    """Per-mode pure-loss transmissivities.

    ``0`` is accepted (complete loss, output is vacuum); network specs restrict
    to ``(0, 1]`` themselves.
    """

    transmissivities: np.ndarray

    def __post_init__(self):
        eta = np.atleast_1d(np.asarray(self.transmissivities, dtype=float))
        if eta.ndim != 1 or eta.size == 0:
            raise ValueError("transmissivities must be a non-empty vector")
        if np.any(~np.isfinite(eta)) or np.any(eta < 0) or np.any(eta > 1):
            raise ValueError("transmissivities must lie in [0, 1]")
        object.__setattr__(self, "transmissivities", _frozen(eta))

    @classmethod
    def uniform(cls, num_modes: int, eta: float) -> "LossMap":
        return cls(np.full(num_modes, float(eta)))


@dataclass(frozen=True, eq=False)
class HomodyneRecord:
    """x-quadrature outcomes, one row per trial and one column per mode."""

    samples: np.ndarray
    seed: int

    @property
    def trials(self) -> int:
        return self.samples.shape[0]


def _check_mode(state: GaussianState, m: int):
    if not 0 <= m < state.num_modes:
        raise IndexError(f"mode {m} out of range for {state.num_modes}-mode state")


def _check_seed(seed) -> int:
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise ValueError("seed must be an unsigned 64-bit integer")
    return seed


# --- states -----------------------------------------------------------------

def vacuum(num_modes: int) -> GaussianState:
    if int(num_modes) < 1:
        raise ValueError("number of modes must be >= 1")
    n = 2 * int(num_modes)
    return GaussianState(np.zeros(n), VACUUM_VARIANCE * np.eye(n))


def thermal_state(mean_photons: Sequence[float]) -> GaussianState:
    """Product of thermal states with the given mean photon numbers."""
    n = np.atleast_1d(np.asarray(mean_photons, dtype=float))
    if np.any(n < 0):
        raise ValueError("thermal photon numbers must be >= 0")
    diag = np.repeat((2 * n + 1) * VACUUM_VARIANCE, 2)
    return GaussianState(np.zeros(diag.size), np.diag(diag))


def squeezed_vacuum(n_photons: float) -> GaussianState:
    """Single-mode x-squeezed vacuum carrying ``n_photons`` mean photons."""
    if not np.isfinite(n_photons) or n_photons < 0:
        raise ValueError("photon number must be a finite non-negative number")
    s = squeezing_factor(n_photons)
    return GaussianState(np.zeros(2), np.diag([VACUUM_VARIANCE / s, VACUUM_VARIANCE * s]))


def tensor_product(*states: GaussianState) -> GaussianState:
    """Direct sum of independent states, modes ordered as given."""
    if not states:
        raise ValueError("need at least one state")
    mean = np.concatenate([s.mean for s in states])
    cov = np.zeros((mean.size, mean.size))
    i = 0
    for s in states:
        n = s.mean.size
        cov[i:i + n, i:i + n] = s.cov
        i += n
    return GaussianState(mean, cov)


def random_gaussian_state(num_modes: int, rng: np.random.Generator,
                          max_squeezing: float = 1.0, max_thermal: float = 1.0,
                          max_displacement: float = 1.0) -> GaussianState:
    """Random mixed Gaussian state: thermal noise, squeezing, passive mixing, displacement."""
    state = thermal_state(rng.uniform(0, max_thermal, num_modes))
    r = rng.uniform(0, max_squeezing, num_modes)
    sq = np.diag(np.ravel(np.column_stack([np.exp(-r), np.exp(r)])))
    z = rng.normal(size=(num_modes, num_modes)) + 1j * rng.normal(size=(num_modes, num_modes))
    q, rr = np.linalg.qr(z)
    u = q * (np.diag(rr) / np.abs(np.diag(rr)))
    t = passive_transform(u) @ SymplecticTransform(sq)
    state = apply_symplectic(state, t)
    return displace(state, rng.uniform(-max_displacement, max_displacement, 2 * num_modes))


# --- observables ------------------------------------------------------------

def mean_photon_number(state: GaussianState, per_mode: bool = False):
    """Total (or per-mode) ``<a^dagger a> = Vxx + Vpp + mx^2 + mp^2 - 1/2``."""
    d = np.diag(state.cov)
    mu2 = state.mean ** 2
    n = d[0::2] + d[1::2] + mu2[0::2] + mu2[1::2] - 2 * VACUUM_VARIANCE
    return n if per_mode else float(np.sum(n))


# --- transforms -------------------------------------------------------------

def apply_symplectic(state: GaussianState, t: SymplecticTransform) -> GaussianState:
    if t.num_modes != state.num_modes:
        raise ValueError(
            f"transform acts on {t.num_modes} modes, state has {state.num_modes}"
        )
    s = t.matrix
    return GaussianState(s @ state.mean + t.shift, s @ state.cov @ s.T)


def passive_transform(u: np.ndarray) -> SymplecticTransform:
    """Symplectic matrix of the passive network ``a_out = U a_in`` (U unitary)."""
    u = np.asarray(u, dtype=complex)
    m = u.shape[0]
    if u.shape != (m, m) or not np.allclose(u @ u.conj().T, np.eye(m), atol=1e-10):
        raise ValueError("mode transform must be a square unitary matrix")
    s = np.empty((2 * m, 2 * m))
    s[0::2, 0::2] = u.real
    s[0::2, 1::2] = -u.imag
    s[1::2, 0::2] = u.imag
    s[1::2, 1::2] = u.real
    return SymplecticTransform(s)


def complete_orthogonal(v: np.ndarray) -> np.ndarray:
    """Orthogonal matrix whose first column is the unit vector ``v``.

    Remaining columns come from Gram-Schmidt over the standard basis, at each
    step taking the basis vector with the largest residual (ties go to the
    lower index), so the completion is deterministic.
    """
    v = np.asarray(v, dtype=float)
    m = v.size
    cols = [v]
    basis = np.eye(m)
    while len(cols) < m:
        q = np.array(cols).T
        resid = basis - q @ (q.T @ basis)
        norms = np.linalg.norm(resid, axis=0)
        k = int(np.argmax(norms))
        c = resid[:, k]
        c = c - q @ (q.T @ c)  # second pass for stability
        cols.append(c / np.linalg.norm(c))
    return np.array(cols).T


def distribution_array(coefficients: Sequence[float]) -> SymplecticTransform:
    """Beam-splitter array sending input mode 1 to the outputs with amplitudes ``coefficients``.

    Args:
        coefficients: real unit vector of length M. Negative entries are
            pi phase flips on the corresponding arm.

    Returns:
        SymplecticTransform acting identically on the x and p quadratures.
    """
    v = np.atleast_1d(np.asarray(coefficients, dtype=float))
    if v.ndim != 1 or not np.all(np.isfinite(v)):
        raise ValueError("coefficients must be a finite real vector")
    if abs(np.linalg.norm(v) - 1.0) > 1e-9:
        raise ValueError("distribution coefficients must have unit norm")
    return passive_transform(complete_orthogonal(v / np.linalg.norm(v)))


def pure_loss(state: GaussianState, loss) -> GaussianState:
    """Pure-loss channel: ``mu -> sqrt(eta) mu``, ``V -> sqrt(eta) V sqrt(eta) + (1 - eta)/4``.

    ``loss`` may be a :class:`LossMap`, a scalar applied to every mode, or a
    per-mode sequence.
    """
    if not isinstance(loss, LossMap):
        loss = LossMap(np.broadcast_to(np.asarray(loss, dtype=float), (state.num_modes,)))
    eta = loss.transmissivities
    if eta.size != state.num_modes:
        raise ValueError(
            f"loss map has {eta.size} modes, state has {state.num_modes}"
        )
    g = np.repeat(np.sqrt(eta), 2)
    noise = np.repeat((1 - eta) * VACUUM_VARIANCE, 2)
    return GaussianState(g * state.mean, g[:, None] * state.cov * g[None, :] + np.diag(noise))


def displace(state: GaussianState, shift: Sequence[float]) -> GaussianState:
    """Shift the full interleaved mean vector."""
    shift = np.asarray(shift, dtype=float)
    if shift.shape != state.mean.shape:
        raise ValueError("displacement vector does not match state dimension")
    return GaussianState(state.mean + shift, state.cov, validate=False)


def displace_x(state: GaussianState, mode: int, alpha: float) -> GaussianState:
    _check_mode(state, mode)
    shift = np.zeros_like(state.mean)
    shift[2 * mode] = alpha
    return displace(state, shift)


def displace_all_x(state: GaussianState, alphas: Sequence[float]) -> GaussianState:
    """Displace the x quadrature of every mode by the matching entry of ``alphas``."""
    alphas = np.asarray(alphas, dtype=float)
    if alphas.shape != (state.num_modes,):
        raise ValueError("need one displacement per mode")
    shift = np.zeros_like(state.mean)
    shift[0::2] = alphas
    return displace(state, shift)


def rotation_matrix(theta: float) -> np.ndarray:
    """Phase-space action of ``exp(-i theta a^dagger a)``: ``x' = x cos + p sin``."""
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, s], [-s, c]])


def phase_rotate(state: GaussianState, mode: int, theta: float) -> GaussianState:
    _check_mode(state, mode)
    s = np.eye(2 * state.num_modes)
    s[2 * mode:2 * mode + 2, 2 * mode:2 * mode + 2] = rotation_matrix(theta)
    return apply_symplectic(state, SymplecticTransform(s))


# --- measurement ------------------------------------------------------------

def _block_normals(seed: int, block: int, rows: int, cols: int) -> np.ndarray:
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(block,))
    return np.random.default_rng(ss).standard_normal((rows, cols))


def standard_normals(seed: int, trials: int, cols: int) -> np.ndarray:
    """Standard normals for trials ``0..trials-1``.

    Trial ``i`` lives in block ``i // SAMPLE_BLOCK`` whose generator is keyed on
    ``(seed, block)``, so blocks can be produced in any order or in parallel.
    """
    seed = _check_seed(seed)
    out = np.empty((trials, cols))
    for b, start in enumerate(range(0, trials, SAMPLE_BLOCK)):
        stop = min(start + SAMPLE_BLOCK, trials)
        out[start:stop] = _block_normals(seed, b, SAMPLE_BLOCK, cols)[: stop - start]
    return out


def _cholesky_jitter(a: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        pass
    eye = np.eye(a.shape[0])
    for jitter in (1e-15, 1e-14, 1e-13, 1e-12):
        try:
            return np.linalg.cholesky(a + jitter * eye)
        except np.linalg.LinAlgError:
            continue
    raise NumericalError("x-quadrature covariance is not positive definite")


def homodyne_x(state: GaussianState, trials: int, seed: int) -> HomodyneRecord:
    """Sample x-quadrature homodyne outcomes on every mode."""
    if int(trials) < 1:
        raise ValueError("trials must be >= 1")
    seed = _check_seed(seed)
    chol = _cholesky_jitter(state.x_cov)
    z = standard_normals(seed, int(trials), state.num_modes)
    return HomodyneRecord(state.x_mean + z @ chol.T, seed)


# --- fidelity ---------------------------------------------------------------

def _log_fidelity_single_mode(a: GaussianState, b: GaussianState) -> float:
    vsum = a.cov + b.cov
    d = a.mean - b.mean
    # sigma = 2V, vacuum sigma = I/2
    big_delta = 4.0 * np.linalg.det(vsum)
    small_delta = 4.0 * (4.0 * np.linalg.det(a.cov) - 0.25) * (4.0 * np.linalg.det(b.cov) - 0.25)
    small_delta = max(small_delta, 0.0)
    pref = np.sqrt(big_delta + small_delta) - np.sqrt(small_delta)
    return float(-np.log(pref) - 0.5 * d @ np.linalg.solve(vsum, d))


def _log_fidelity_pure(a: GaussianState, b: GaussianState) -> float:
    vsum = a.cov + b.cov
    d = a.mean - b.mean
    sign, logdet = np.linalg.slogdet(2.0 * vsum)
    if sign <= 0:
        raise NumericalError("covariance sum is not positive definite")
    return float(-0.5 * logdet - 0.5 * d @ np.linalg.solve(vsum, d))


def log_fidelity(a: GaussianState, b: GaussianState) -> float:
    """Natural log of the Uhlmann fidelity ``(Tr sqrt(sqrt(a) b sqrt(a)))**2``.

    Exact for any pair of single-mode states and for multimode pairs of
    pure states; other multimode pairs raise ``ValueError``.
    """
    if a.num_modes != b.num_modes:
        raise ValueError("states have different numbers of modes")
    if a.num_modes == 1:
        return _log_fidelity_single_mode(a, b)
    if a.is_pure() and b.is_pure():
        return _log_fidelity_pure(a, b)
    raise ValueError("multimode fidelity is only implemented for pure states")


def fidelity_single_mode(a: GaussianState, b: GaussianState) -> float:
    """Uhlmann fidelity between two single-mode Gaussian states (squared-trace form)."""
    if a.num_modes != 1 or b.num_modes != 1:
        raise ValueError("fidelity_single_mode needs single-mode states")
    return float(min(1.0, np.exp(_log_fidelity_single_mode(a, b))))


def fidelity(a: GaussianState, b: GaussianState) -> float:
    return float(min(1.0, np.exp(log_fidelity(a, b))))
