import numpy as np
import pytest
from scipy import integrate

from dqsense.fisher import (
    FisherMatrix,
    FisherReport,
    Method,
    displacement_family,
    displacement_qfi_gaussian,
    dv_bounds,
    entangled_max_fisher,
    fisher_fd,
    fisher_matrix_displacement,
    separable_max_fisher,
    single_mode_gaussian_fisher,
    squeezed_displacement_family,
    ub_entangled,
    ub_separable,
    variance_form_fisher,
    weighted_cr_bound,
    x_jacobian,
)
from dqsense.gaussian import (
    GaussianState,
    NumericalError,
    apply_symplectic,
    displace,
    distribution_array,
    pure_loss,
    rotation_matrix,
    squeezed_vacuum,
    squeezing_factor,
    tensor_product,
    thermal_state,
    vacuum,
)

S1 = (1 + np.sqrt(2)) ** 2
S10 = 21 + 2 * np.sqrt(110)


# --- finite differences -----------------------------------------------------

def test_coherent_family_gives_four():
    for alpha0 in (-1.3, 0.0, 0.7):
        rep = fisher_fd(displacement_family(vacuum(1)), alpha0)
        assert rep.value == pytest.approx(4.0, abs=1e-6)
        assert rep.method is Method.FIDELITY_FD


def test_squeezed_family_values():
    assert fisher_fd(squeezed_displacement_family(1.0), 0.0).value == pytest.approx(4 * S1, rel=1e-9)
    assert 4 * S1 == pytest.approx(23.3137, abs=1e-4)
    lossy = fisher_fd(squeezed_displacement_family(1.0, 0.5), 0.0).value
    assert lossy == pytest.approx(4 / (0.5 / S1 + 0.5), rel=1e-9)
    assert lossy == pytest.approx(6.8284, abs=1e-4)


@pytest.mark.parametrize("n", [0.0, 0.5, 1.0, 5.0, 10.0])
@pytest.mark.parametrize("eta", [0.25, 0.5, 0.9, 1.0])
def test_fd_matches_closed_form(n, eta):
    fd = fisher_fd(squeezed_displacement_family(n, eta), 0.0).value
    assert fd == pytest.approx(displacement_qfi_gaussian(n, eta).value, rel=1e-4)


def test_fd_rejects_bad_step():
    with pytest.raises(ValueError):
        fisher_fd(squeezed_displacement_family(1.0), 0.0, eps=0.0)
    with pytest.raises(ValueError):
        fisher_fd(squeezed_displacement_family(10.0), 0.0, eps=1.0)


def _general_probe(r, n_th, theta):
    k = 2 * n_th + 1
    rot = rotation_matrix(theta)
    cov = rot @ np.diag([k * np.exp(-r), k * np.exp(r)]) @ rot.T / 4
    return GaussianState([0.0, 0.0], cov)


@pytest.mark.parametrize("r,n_th,theta,eta", [
    (0.0, 0.0, 0.0, 1.0),
    (1.2, 0.0, 0.0, 0.8),
    (0.7, 0.3, 0.4, 0.6),
    (2.0, 1.0, 1.1, 0.95),
    (1.5, 0.2, np.pi / 2, 0.5),
])
def test_general_single_mode_formula_matches_fd(r, n_th, theta, eta):
    fam = displacement_family(_general_probe(r, n_th, theta), eta)
    fd = fisher_fd(fam, 0.0).value
    assert single_mode_gaussian_fisher(r, n_th, theta, eta) == pytest.approx(fd, rel=1e-6)


def test_general_formula_reduces_to_optimum():
    # pure probe squeezed along x: e^r equals the squeezing factor
    for n in (0.5, 3.0):
        r = np.log(squeezing_factor(n))
        assert single_mode_gaussian_fisher(r, 0.0, 0.0, 0.7) == pytest.approx(
            displacement_qfi_gaussian(n, 0.7).value, rel=1e-12)


# --- closed forms -----------------------------------------------------------

def test_single_mode_limits():
    assert displacement_qfi_gaussian(0, 1).value == 4.0
    assert displacement_qfi_gaussian(1, 1).value == pytest.approx(23.3137, abs=1e-4)
    for n in (0.1, 10.0, 1e4):
        assert displacement_qfi_gaussian(n, 1e-12).value == pytest.approx(4.0, rel=1e-6)
    with pytest.raises(ValueError):
        displacement_qfi_gaussian(1, 0.0)
    with pytest.raises(ValueError):
        displacement_qfi_gaussian(-1, 0.5)


def test_network_closed_forms():
    ent = entangled_max_fisher(10, 10, 1)
    sep = separable_max_fisher(10, 10, 1)
    assert ent.value == pytest.approx(40 * S10, rel=1e-12)
    assert ent.precision == pytest.approx(0.02441, abs=1e-5)
    assert sep.value == pytest.approx(40 * S1, rel=1e-12)
    assert sep.value == pytest.approx(233.14, abs=0.01)
    assert sep.precision == pytest.approx(0.0655, abs=1e-4)
    for eta in (0.3, 1.0):
        assert entangled_max_fisher(1, 3, eta).value == separable_max_fisher(1, 3, eta).value


def test_upper_bounds():
    assert ub_entangled(10, 10, 1).value == pytest.approx(entangled_max_fisher(10, 10, 1).value,
                                                          rel=1e-12)
    for m in (1, 3, 10):
        assert ub_entangled(m, 5, 0).value == pytest.approx(4 * m)
        assert ub_separable(m, 5, 0).value == pytest.approx(4 * m)
    assert ub_entangled(10, 10, 0.9).value > entangled_max_fisher(10, 10, 0.9).value


@pytest.mark.parametrize("m", [1, 2, 5, 10])
@pytest.mark.parametrize("n", [0.5, 2.0, 10.0])
@pytest.mark.parametrize("eta", [0.0, 0.3, 0.9, 1.0])
def test_ordering(m, n, eta):
    ub = ub_entangled(m, n, eta).value
    ent = entangled_max_fisher(m, n, eta).value
    sep = separable_max_fisher(m, n, eta).value
    assert ub >= ent * (1 - 1e-12)
    assert ent >= sep * (1 - 1e-12)
    if eta in (0.0, 1.0):
        assert ub == pytest.approx(ent, rel=1e-12)
    else:
        assert ub > ent
    if m == 1:
        assert ent == pytest.approx(sep, rel=1e-14)
    else:
        assert ent > sep or eta == 0.0


def test_monotonicity():
    ns = np.linspace(0, 20, 41)
    etas = np.linspace(0, 1, 41)
    for fn in (entangled_max_fisher, separable_max_fisher, ub_entangled, ub_separable):
        by_n = [fn(4, n, 0.8).value for n in ns]
        by_eta = [fn(4, 3.0, e).value for e in etas]
        assert np.all(np.diff(by_n) >= -1e-12)
        assert np.all(np.diff(by_eta) >= -1e-12)


def test_dv_bounds():
    sep, ent = dv_bounds(3, 0, 1)
    assert (sep.value, ent.value) == (3.0, 9.0)
    sep, ent = dv_bounds(4, 0.5, 0.5)
    assert (sep.value, ent.value) == (0.0, 0.0)
    sep, ent = dv_bounds(1, -1, 2)
    assert sep.value == ent.value == 9.0
    with pytest.raises(ValueError):
        dv_bounds(2, 1, 0)


def test_report_validation():
    with pytest.raises(NumericalError):
        FisherReport(float("nan"), Method.CLOSED_FORM)
    with pytest.raises(NumericalError):
        FisherReport(-1.0, "closed_form")
    assert FisherReport(0.0, "closed_form").precision == np.inf
    assert FisherReport(16.0, "closed_form").to_dict()["method"] == "closed_form"


# --- variance form and Fisher matrices --------------------------------------

def _balanced_entangled(m, n_total):
    probe = tensor_product(squeezed_vacuum(n_total), vacuum(m - 1)) if m > 1 else squeezed_vacuum(n_total)
    return apply_symplectic(probe, distribution_array(np.full(m, 1 / np.sqrt(m))))


def test_variance_form_calibration():
    assert variance_form_fisher(vacuum(1), [1.0]).value == pytest.approx(4.0)
    assert variance_form_fisher(squeezed_vacuum(1), [1.0]).value == pytest.approx(4 * S1)
    ns = 0.75
    state = _balanced_entangled(4, 4 * ns)
    value = variance_form_fisher(state, np.ones(4)).value
    assert value == pytest.approx(entangled_max_fisher(4, 4 * ns, 1).value, rel=1e-12)
    with pytest.raises(ValueError):
        variance_form_fisher(thermal_state([0.2]), [1.0])


def test_fisher_matrix_examples():
    h = fisher_matrix_displacement(vacuum(2), x_jacobian(2))
    np.testing.assert_allclose(h.matrix, 4 * np.eye(2))
    assert weighted_cr_bound(h, [0.5, 0.5]) == pytest.approx(1 / 8)
    assert np.sqrt(weighted_cr_bound(h, [0.5, 0.5])) == pytest.approx(0.35355, abs=1e-5)
    assert weighted_cr_bound(FisherMatrix([[16.0]]), [1.0]) == pytest.approx(1 / 16)


def test_single_parameter_matrix_matches_variance_form():
    state = _balanced_entangled(3, 2.0)
    c = np.array([0.2, 0.5, 0.3])
    h = fisher_matrix_displacement(state, x_jacobian(3, c))
    assert h.matrix[0, 0] == pytest.approx(variance_form_fisher(state, c).value, rel=1e-10)


def test_cr_bound_consistent_with_entangled_optimum():
    state = _balanced_entangled(10, 10.0)
    h = fisher_matrix_displacement(state, x_jacobian(10))
    bound = weighted_cr_bound(h, np.full(10, 0.1))
    assert bound == pytest.approx(1 / entangled_max_fisher(10, 10, 1).value, rel=1e-10)
    assert np.sqrt(bound) == pytest.approx(0.02441, abs=1e-5)


def test_entangled_matrix_off_diagonal_matches_fd_slices():
    state = _balanced_entangled(2, 1.0)
    h = fisher_matrix_displacement(state, x_jacobian(2)).matrix
    assert abs(h[0, 1]) > 1.0

    def slice_fisher(direction):
        shift = np.zeros(4)
        shift[0::2] = direction
        return fisher_fd(lambda a: displace(state, a * shift), 0.0).value

    i1, i2, i12 = slice_fisher([1, 0]), slice_fisher([0, 1]), slice_fisher([1, 1])
    assert h[0, 0] == pytest.approx(i1, rel=1e-6)
    assert h[1, 1] == pytest.approx(i2, rel=1e-6)
    assert h[0, 1] == pytest.approx((i12 - i1 - i2) / 2, rel=1e-6)


def test_fisher_matrix_validation():
    with pytest.raises(ValueError):
        FisherMatrix([[1.0, 2.0], [0.0, 1.0]])
    with pytest.raises(ValueError):
        FisherMatrix([[1.0, 0.0], [0.0, -1.0]])
    with pytest.raises(NumericalError):
        weighted_cr_bound(FisherMatrix([[1.0, 1.0], [1.0, 1.0]]), [1.0, 0.0])
    with pytest.raises(ValueError):
        fisher_matrix_displacement(vacuum(2), np.ones((3, 1)))


# --- convexity --------------------------------------------------------------

def _mixture_homodyne_fisher(p, v1, v2):
    """Classical Fisher information of p N(alpha, v1) + (1 - p) N(alpha, v2) in alpha."""

    def integrand(x):
        g1 = np.exp(-x * x / (2 * v1)) / np.sqrt(2 * np.pi * v1)
        g2 = np.exp(-x * x / (2 * v2)) / np.sqrt(2 * np.pi * v2)
        f = p * g1 + (1 - p) * g2
        df = p * g1 * x / v1 + (1 - p) * g2 * x / v2
        return df * df / f if f > 0 else 0.0

    width = 12 * np.sqrt(max(v1, v2))
    return integrate.quad(integrand, -width, width, limit=400, points=[0.0])[0]


@pytest.mark.parametrize("p,n1,n2,eta1,eta2", [
    (0.5, 1.0, 0.0, 1.0, 1.0),
    (0.3, 4.0, 0.5, 0.9, 0.6),
    (0.8, 10.0, 2.0, 0.7, 1.0),
])
def test_fisher_convex_under_mixing(p, n1, n2, eta1, eta2):
    fam1 = squeezed_displacement_family(n1, eta1)
    fam2 = squeezed_displacement_family(n2, eta2)
    v1, v2 = fam1(0.0).cov[0, 0], fam2(0.0).cov[0, 0]
    mixed = _mixture_homodyne_fisher(p, v1, v2)
    bound = p * fisher_fd(fam1, 0.0).value + (1 - p) * fisher_fd(fam2, 0.0).value
    assert mixed <= bound * (1 + 1e-9)
    # sanity: the integrator recovers 1/v for an unmixed Gaussian
    assert _mixture_homodyne_fisher(1.0, v1, v2) == pytest.approx(1 / v1, rel=1e-8)


def test_pure_loss_reduces_fisher():
    fam_clean = displacement_family(squeezed_vacuum(2.0), 1.0)
    fam_lossy = displacement_family(pure_loss(squeezed_vacuum(2.0), 0.5))
    assert fisher_fd(fam_lossy, 0.0).value < fisher_fd(fam_clean, 0.0).value
