import numpy as np
import pytest

from dqsense.experiments import (
    RfField,
    RfTask,
    SweepTable,
    bound_comparison,
    entangled_variance,
    entanglement_sweep,
    loglog_fit,
    phase_mc,
    point_seed,
    rf_task,
    run_estimation,
    scaling_sweep,
    task_weights,
    tunable_coefficients,
)
from dqsense.protocols import (
    Kind,
    SensorNetworkSpec,
    analytic_precision_entangled,
    entangled_coefficients,
)


def test_run_estimation_is_deterministic():
    spec = SensorNetworkSpec.homogeneous(4, 1.0, 0.9)
    a = run_estimation(spec, np.zeros(4), 20_000, seed=3)
    b = run_estimation(spec, np.zeros(4), 20_000, seed=3)
    assert a == b
    assert run_estimation(spec, np.zeros(4), 20_000, seed=4) != a


def test_run_estimation_single_node_matches_squeezed_sensor():
    spec = SensorNetworkSpec.homogeneous(1, 2.0, 0.8)
    ent = run_estimation(spec, [0.05], 50_000, seed=1)
    sep = run_estimation(spec.replace(kind=Kind.SEPARABLE), [0.05], 50_000, seed=1)
    assert ent.analytic == pytest.approx(sep.analytic, rel=1e-9)
    assert ent.mean == pytest.approx(sep.mean, rel=1e-6)


def test_run_estimation_achieves_analytic_precision():
    spec = SensorNetworkSpec.homogeneous(4, 1.0, 0.9)
    n = 100_000
    res = run_estimation(spec, np.zeros(4), n, seed=17)
    assert abs(res.mean) < 3 * res.std / np.sqrt(n)
    assert abs(res.std - res.analytic) < 3 * res.std_err


def test_run_estimation_rejects_wrong_shape():
    with pytest.raises(ValueError):
        run_estimation(SensorNetworkSpec.homogeneous(3, 1.0), [0.0, 0.0], 10, 0)


def test_point_seed_is_stable_and_distinct():
    assert point_seed(5, 0) == point_seed(5, 0)
    seeds = {point_seed(5, i) for i in range(100)}
    assert len(seeds) == 100
    assert point_seed(6, 0) != point_seed(5, 0)


# --- tables -----------------------------------------------------------------

def test_sweep_table_helpers():
    t = SweepTable({"a": [1, 2, 3], "b": ["x", "y", "x"]}, {"k": 1})
    assert len(t) == 3 and t.names == ["a", "b"]
    assert list(t.where(b="x").column("a")) == [1, 3]
    other = SweepTable({"a": [1, 2, 3], "b": ["x", "y", "x"]}, {"k": 1}, timestamp="earlier")
    assert t.same_content(other)
    with pytest.raises(ValueError):
        SweepTable({"a": [1], "b": [1, 2]}, {})


def test_loglog_fit_recovers_power_law():
    x = np.array([1, 2, 4, 8])
    slope, intercept, r2 = loglog_fit(x, 3.0 * x**-0.75)
    assert slope == pytest.approx(-0.75)
    assert np.exp(intercept) == pytest.approx(3.0)
    assert r2 == pytest.approx(1.0)


def test_scaling_sweep_schema_and_thread_independence():
    a = scaling_sweep([1, 2, 4], 1.0, 1.0, 5_000, seed=9, n_jobs=1)
    b = scaling_sweep([1, 2, 4], 1.0, 1.0, 5_000, seed=9, n_jobs=3)
    assert a.names == ["M", "kind", "eta", "delta_analytic", "delta_mc", "mc_err"]
    assert a.same_content(b)
    assert len(a) == 6
    assert a.metadata["slope_analytic_separable"] == pytest.approx(-0.5)


def test_lossy_scaling_flattens_at_large_m():
    m = np.array([64, 128, 256, 512])
    deltas = [analytic_precision_entangled(SensorNetworkSpec.homogeneous(k, float(k), 0.95))
              for k in m]
    local = np.diff(np.log(deltas)) / np.diff(np.log(m))
    assert np.all(np.diff(local) > 0)
    assert local[-1] > -0.55
    lossless = [analytic_precision_entangled(SensorNetworkSpec.homogeneous(k, float(k), 1.0))
                for k in m]
    assert loglog_fit(m, lossless)[0] == pytest.approx(-1.0, abs=0.01)


def test_bound_comparison_curves():
    grid = [0.0, 0.5, 0.9, 0.95, 1.0]
    t = bound_comparison(10.0, 10, grid)
    assert t.names == ["eta", "delta_E", "delta_P", "delta_E_LB", "delta_C_LB"]
    first = next(t.rows())
    for name in ("delta_E", "delta_P", "delta_E_LB", "delta_C_LB"):
        assert first[name] == pytest.approx(1 / (2 * np.sqrt(10)))
    last = list(t.rows())[-1]
    assert last["delta_E"] == pytest.approx(last["delta_E_LB"], rel=1e-10)
    assert np.all(t.column("delta_E") >= t.column("delta_E_LB") * (1 - 1e-12))


def test_bound_comparison_monte_carlo_columns():
    t = bound_comparison(4.0, 4, [0.8, 1.0], trials=20_000, seed=2)
    for name in ("delta_E_mc", "delta_P_mc", "mc_err_E", "mc_err_P"):
        assert name in t.names
    np.testing.assert_allclose(t.column("delta_E_mc"), t.column("delta_E"), rtol=0.03)
    np.testing.assert_allclose(t.column("delta_P_mc"), t.column("delta_P"), rtol=0.03)
    with pytest.raises(ValueError):
        bound_comparison(4.0, 4, [0.0], trials=10)


# --- RF sensing -------------------------------------------------------------

def test_task_weights():
    np.testing.assert_allclose(task_weights("avg_amplitude", 3), [1 / 3] * 3)
    np.testing.assert_allclose(task_weights("phase_diff_center", 3), [-0.25, 0.5, -0.25])
    np.testing.assert_allclose(task_weights("phase_diff_edge", 4), [0.5, -0.5, 0, 0])
    with pytest.raises(ValueError):
        task_weights("phase_diff_edge", 1)


def test_rf_transduction_and_estimate():
    spec = SensorNetworkSpec.homogeneous(3, 1.0)
    rf = RfField([1, 1, 1], [0.1, 0.1, 0.1], coupling=1.0)
    np.testing.assert_allclose(rf.displacements(), [0.1, 0.1, 0.1])
    res = rf_task(rf, spec, RfTask.AVG_AMPLITUDE, 100_000, seed=6)
    assert res.target == pytest.approx(0.1)
    assert abs(res.mean - 0.1) < 3 * res.mean_err
    zero = rf_task(RfField([0, 0, 0], [0.3, 0.2, 0.1]), spec, "phase_diff_center", 100_000, 7)
    assert abs(zero.mean) < 3 * zero.mean_err
    assert zero.details["task"] == "phase_diff_center"


def test_rf_phase_difference_beats_classical_reference():
    spec = SensorNetworkSpec(3, task_weights("phase_diff_edge", 3), [1, 1, 1], 1.0)
    t = entanglement_sweep(spec, np.linspace(0, 1, 21), 0.0)
    ratio = t.metadata["best_variance"] / t.column("variance_sql")[0]
    assert ratio < 1


def test_entangled_variance_matches_analytic_precision():
    spec = SensorNetworkSpec(3, [0.5, -0.3, 0.2], [0.9, 0.6, 0.8], 2.0)
    v = entangled_coefficients(spec.weights, spec.transmissivities)
    var = entangled_variance(v, spec.weights, spec.transmissivities, spec.photon_budget)
    assert var == pytest.approx(analytic_precision_entangled(spec) ** 2, rel=1e-12)


def test_tunable_coefficients_are_unit_and_hit_optimum():
    v_opt = entangled_coefficients([0.25, 0.5, 0.25], [1, 1, 1])
    predicted = v_opt[1] ** 2 / (1 - v_opt[0] ** 2)
    np.testing.assert_allclose(tunable_coefficients(v_opt, predicted, 0.0), v_opt, atol=1e-12)
    for r in (0.0, 0.3, 1.0):
        for flip in (0.0, np.pi):
            assert np.linalg.norm(tunable_coefficients(v_opt, r, flip)) == pytest.approx(1.0)


def test_entanglement_sweep_average_is_balanced():
    spec = SensorNetworkSpec.homogeneous(3, 1.0)
    grid = np.linspace(0, 1, 21)
    t = entanglement_sweep(spec, grid, 0.0, trials=40_000, seed=1)
    assert t.metadata["best_ratio"] == pytest.approx(0.5)
    assert abs(t.metadata["best_ratio"] - t.metadata["predicted_ratio"]) <= 0.05 + 1e-12
    np.testing.assert_allclose(t.column("variance_mc"), t.column("variance"), rtol=0.04)


@pytest.mark.parametrize("task", ["phase_diff_center", "phase_diff_edge"])
def test_entanglement_sweep_is_asymmetric_under_flip(task):
    spec = SensorNetworkSpec(3, task_weights(task, 3), [1, 1, 1], 1.0)
    grid = np.linspace(0, 1, 21)
    t0 = entanglement_sweep(spec, grid, 0.0)
    tpi = entanglement_sweep(spec, grid, np.pi)
    assert t0.metadata["best_ratio"] != tpi.metadata["best_ratio"]
    assert abs(t0.metadata["best_ratio"] - t0.metadata["predicted_ratio"]) <= 0.05 + 1e-12
    assert t0.metadata["best_variance"] == pytest.approx(t0.metadata["optimal_variance"])


def test_entanglement_sweep_validation():
    spec = SensorNetworkSpec.homogeneous(3, 1.0)
    with pytest.raises(ValueError):
        entanglement_sweep(spec, [1.5], 0.0)
    with pytest.raises(ValueError):
        entanglement_sweep(spec, [0.5], 1.0)
    with pytest.raises(ValueError):
        entanglement_sweep(SensorNetworkSpec.homogeneous(1, 1.0), [0.5], 0.0)


# --- phase sensing ----------------------------------------------------------

def test_phase_mc_single_mode():
    res = phase_mc(1, 1.0, 0.005, trials=40_000, seed=3)
    assert res.analytic == pytest.approx(0.25)
    assert res.std <= 0.275
    assert abs(res.mean - 0.005) < 3 * res.mean_err


def test_phase_mc_unbiased_at_zero():
    res = phase_mc(1, 1.0, 0.0, trials=40_000, seed=4)
    assert abs(res.mean) < 3 * res.mean_err


def test_phase_mc_entangled_beats_separable():
    ent = phase_mc(4, 1.0, 0.005, trials=20_000, seed=5)
    sep = phase_mc(4, 1.0, 0.005, trials=20_000, seed=5, kind=Kind.SEPARABLE)
    assert ent.std < sep.std
    assert ent.std <= 1.1 * ent.analytic
    assert sep.std <= 1.1 * sep.analytic


def test_phase_mc_rejects_large_angles():
    with pytest.raises(ValueError):
        phase_mc(1, 1.0, 0.1)
