import numpy as np
import pytest

from collapselab.channels import eigenmode_difference
from collapselab.ensemble import (
    EnsembleConfig,
    ModelSetup,
    energy_trajectory,
    mc_mean_drift,
    mean_series,
    run_ensemble,
    scenario_collapse,
    split_branches,
    variance_diagnostics,
    worker_count,
)
from collapselab.errors import (
    ConfigError,
    PictureNotRecorded,
    ScenarioViolation,
)
from collapselab.grids import TimeGrid, Window
from collapselab.lattice import EigenSystem
from collapselab.master import compute_A

from conftest import ELL, two_channels


@pytest.fixture
def ground(lat4, h0_4):
    esys = EigenSystem.of(h0_4, lat4.spacing)
    e0, psi0 = esys.ground_state("positive")
    return esys, e0, psi0


def make_model(lat4, h0_4, grid, amplitude):
    return ModelSetup(grid=grid, h0=h0_4, spacing=lat4.spacing,
                      channels=two_channels(lat4, amplitude))


def test_worker_count_env(monkeypatch):
    monkeypatch.delenv("COLLAPSELAB_WORKERS", raising=False)
    assert worker_count() == 1
    monkeypatch.setenv("COLLAPSELAB_WORKERS", "3")
    assert worker_count() == 3
    monkeypatch.setenv("COLLAPSELAB_WORKERS", "two")
    with pytest.raises(ConfigError):
        worker_count()
    monkeypatch.setenv("COLLAPSELAB_WORKERS", "0")
    with pytest.raises(ConfigError):
        worker_count()


def test_ensemble_config_validation():
    with pytest.raises(ConfigError):
        EnsembleConfig(realizations=1, seed=0)
    with pytest.raises(ConfigError):
        EnsembleConfig(realizations=4, seed=0, picture="sideways")
    cfg = EnsembleConfig(realizations=4, seed=0)
    assert cfg.window(TimeGrid(0.0, 2.0, 0.5))(np.array([0.0, 2.0])).min() == 1.0


def test_zero_coupling_ensemble_is_deterministic(lat4, h0_4, grid16, ground):
    esys, e0, psi0 = ground
    obs = eigenmode_difference(lat4, 0, 1)
    cfg = EnsembleConfig(realizations=8, seed=7, picture="transformed",
                         observables=(("pointer", obs),))
    stats = run_ensemble(psi0, cfg, make_model(lat4, h0_4, grid16, 0.0))
    assert np.abs(stats.energy["transformed"] - e0).max() < 1e-10
    mean, stderr = mean_series(stats.energy["transformed"])
    assert stderr.max() < 1e-12
    assert stats.realizations == 8


def test_transformed_route_conserves_norm_and_trace(lat4, h0_4, grid16, ground):
    _, _, psi0 = ground
    obs = eigenmode_difference(lat4, 0, 1)
    cfg = EnsembleConfig(realizations=64, seed=7, picture="transformed",
                         observables=(("pointer", obs),))
    stats = run_ensemble(psi0, cfg, make_model(lat4, h0_4, grid16, 0.1))
    assert np.abs(stats.norm["transformed"] - 1.0).max() < 1e-10
    for c in range(stats.checkpoint_nodes.size):
        sig = stats.sigma_mean[c]
        assert np.abs(sig - sig.conj().T).max() < 1e-14
        assert abs(np.trace(sig) - 1.0) < 1e-10
    assert np.all(stats.sigma_stderr >= 0.0)


def test_stderr_shrinks_with_ensemble_size(lat4, h0_4, grid16, ground):
    _, _, psi0 = ground

    def final_stderr(realizations):
        cfg = EnsembleConfig(realizations=realizations, seed=7,
                             picture="transformed")
        stats = run_ensemble(psi0, cfg, make_model(lat4, h0_4, grid16, 0.1))
        _, stderr = mean_series(stats.energy["transformed"])
        return stderr[-1]

    ratio = final_stderr(400) / final_stderr(800)
    assert 1.2 < ratio < 1.7


def test_block_combination_is_worker_independent(lat4, h0_4, grid16, ground,
                                                 monkeypatch):
    _, _, psi0 = ground
    obs = eigenmode_difference(lat4, 0, 1)
    cfg = EnsembleConfig(realizations=600, seed=7, picture="transformed",
                         observables=(("pointer", obs),))
    model = make_model(lat4, h0_4, grid16, 0.1)
    monkeypatch.setenv("COLLAPSELAB_WORKERS", "1")
    serial = run_ensemble(psi0, cfg, model)
    monkeypatch.setenv("COLLAPSELAB_WORKERS", "3")
    threaded = run_ensemble(psi0, cfg, model)
    assert serial.digest() == threaded.digest()
    assert threaded.meta["workers"] == 3


def test_energy_trajectory_pictures(lat4, h0_4, grid16, ground):
    _, e0, psi0 = ground
    cfg = EnsembleConfig(realizations=4, seed=2, picture="transformed")
    stats = run_ensemble(psi0, cfg, make_model(lat4, h0_4, grid16, 0.0))
    out = energy_trajectory(stats, "transformed")
    assert np.abs(out["transformed"][0] - e0).max() < 1e-10
    with pytest.raises(PictureNotRecorded):
        energy_trajectory(stats, "untransformed")
    with pytest.raises(PictureNotRecorded):
        energy_trajectory(stats, "both")


def test_both_pictures_agree_on_energy(lat4, h0_4, grid16, ground):
    _, _, psi0 = ground
    obs = eigenmode_difference(lat4, 0, 1)
    cfg = EnsembleConfig(realizations=2, seed=2, picture="both",
                         observables=(("pointer", obs),),
                         t_on=0.7, t_off=1.3, ramp=0.2)
    stats = run_ensemble(psi0, cfg, make_model(lat4, h0_4, grid16, 0.04))
    out = energy_trajectory(stats, "both")
    # the pictures differ at third order in the coupling
    assert np.abs(out["difference"][0]).max() < 1e-4
    assert np.abs(stats.norm["untransformed"] - 1.0).max() < 1e-4
    assert "c22" in stats.observables["pointer"]


def test_variance_diagnostics_identity_observable(lat4, h0_4, grid16, ground):
    _, _, psi0 = ground
    eye = np.eye(h0_4.dim, dtype=complex)
    cfg = EnsembleConfig(realizations=16, seed=5, picture="transformed",
                         observables=(("unit", eye),))
    stats = run_ensemble(psi0, cfg, make_model(lat4, h0_4, grid16, 0.1))
    report = variance_diagnostics(stats, "unit")
    assert abs(report["adjusted_difference"][0]) < 1e-12
    c12, _ = report["c12_series"]
    assert np.abs(c12).max() < 1e-20


def test_variance_diagnostics_sign_and_guards(lat4, h0_4, grid16, ground):
    _, _, psi0 = ground
    obs = eigenmode_difference(lat4, 0, 1)
    cfg = EnsembleConfig(realizations=16, seed=5, picture="transformed",
                         observables=(("pointer", obs),))
    stats = run_ensemble(psi0, cfg, make_model(lat4, h0_4, grid16, 0.1))
    report = variance_diagnostics(stats, "pointer")
    c12, _ = report["c12_series"]
    assert np.all(c12 <= 0.0)
    with pytest.raises(PictureNotRecorded):
        variance_diagnostics(stats, "missing")
    with pytest.raises(ScenarioViolation):
        variance_diagnostics(stats, "pointer", window=Window.flat(),
                             grid=grid16, ell_min=ELL)


def test_split_branches(lat4, h0_4, ground):
    esys, _, _ = ground
    obs = eigenmode_difference(lat4, 0, 1)
    v0, v1 = esys.state(4), esys.state(5)  # bottom two positive modes
    sup = v0 + v1
    sup = sup / np.sqrt(lat4.spacing * np.vdot(sup, sup).real)
    phi1, phi2 = split_branches(obs, sup, lat4.spacing)
    for phi in (phi1, phi2):
        assert abs(lat4.spacing * np.vdot(phi, phi).real - 1.0) < 1e-12
    with pytest.raises(ScenarioViolation):
        split_branches(obs, v0, lat4.spacing)
    three = v0 + v1 + esys.state(6)
    with pytest.raises(ScenarioViolation):
        split_branches(obs, three, lat4.spacing)


def test_collapse_scenario_guards(lat4, h0_4, grid16, ground):
    esys, _, psi0 = ground
    obs = eigenmode_difference(lat4, 0, 1)
    model = make_model(lat4, h0_4, grid16, 0.1)
    with pytest.raises(ConfigError):
        scenario_collapse(psi0, EnsembleConfig(
            realizations=4, seed=1, observables=()), model)
    with pytest.raises(ScenarioViolation):
        scenario_collapse(psi0, EnsembleConfig(
            realizations=4, seed=1, observables=(("pointer", obs),)), model)
    with pytest.raises(ScenarioViolation):
        scenario_collapse(psi0, EnsembleConfig(
            realizations=4, seed=1, observables=(("pointer", obs),),
            t_on=0.7, t_off=1.3, ramp=0.2), model)


def test_collapse_scenario_zero_coupling_is_a_martingale_nullcase(
        lat4, h0_4, ground):
    esys, _, _ = ground
    grid = TimeGrid(0.0, 4.0, ELL / 16.0)
    model = make_model(lat4, h0_4, grid, 0.0)
    obs = eigenmode_difference(lat4, 0, 1)
    sup = esys.state(4) + esys.state(5)
    sup = sup / np.sqrt(lat4.spacing * np.vdot(sup, sup).real)
    cfg = EnsembleConfig(realizations=16, seed=3, picture="transformed",
                         observables=(("pointer", obs),),
                         t_on=1.0, t_off=3.2, ramp=1.0)
    report = scenario_collapse(sup, cfg, model)
    mean_w, _ = report["branch_mean"]
    assert np.abs(mean_w - 0.5).max() < 1e-12
    var_series, _ = report["branch_variance"]
    assert var_series.max() < 1e-24
    hist, edges = report["final_histogram"]
    assert hist.sum() == 16


def test_mc_mean_drift_matches_quadrature(lat4, h0_4, grid16):
    model = make_model(lat4, h0_4, grid16, 0.1)
    a = compute_A(model.opset)
    mean, stderr = mc_mean_drift(model, 2000, seed=11,
                                 node=grid16.node_index(1.5))
    z = np.abs(mean - a) / (stderr + 1e-12)
    assert z.max() < 4.0
    with pytest.raises(ConfigError):
        mc_mean_drift(model, 100, seed=11, node=0)
    with pytest.raises(ConfigError):
        mc_mean_drift(model, 100, seed=11, node=grid16.n_nodes)
