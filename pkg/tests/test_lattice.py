import math

import numpy as np
import pytest

from collapselab.errors import NotEigenstate, NotPositive
from collapselab.lattice import (
    EigenSystem,
    LatticeConfig,
    build_dirac_h0,
    dirac_spectrum,
    l2_inner,
    l2_norm,
    matrix_function,
    momenta,
    normalized,
    require_eigenstate,
    translation_operator,
)

from conftest import random_state


def _mat(op):
    return op.matrix


def test_massless_two_site_spectrum():
    cfg = LatticeConfig(sites=2, spacing=1.0, mass=0.0)
    vals = np.sort(np.linalg.eigvalsh(build_dirac_h0(cfg).matrix))
    expected = np.sort([0.0, 0.0, math.pi, -math.pi])
    assert np.allclose(vals, expected, atol=1e-12)


def test_mass_gap_is_m():
    for sites in (2, 6, 8):
        cfg = LatticeConfig(sites=sites, spacing=1.0, mass=1.0)
        vals = np.linalg.eigvalsh(build_dirac_h0(cfg).matrix)
        assert abs(np.min(np.abs(vals)) - 1.0) < 1e-12


def test_spectrum_matches_per_momentum_eigensolve():
    cfg = LatticeConfig(sites=8, spacing=1.0, mass=1.0)
    vals = np.sort(np.linalg.eigvalsh(build_dirac_h0(cfg).matrix))
    sigma1 = np.array([[0.0, 1.0], [1.0, 0.0]])
    sigma3 = np.array([[1.0, 0.0], [0.0, -1.0]])
    direct = np.sort(np.concatenate([
        np.linalg.eigvalsh(k * sigma1 + cfg.mass * sigma3) for k in momenta(cfg)
    ]))
    assert np.max(np.abs(vals - direct)) < 1e-12
    assert np.allclose(np.sort(dirac_spectrum(cfg)), direct, atol=1e-12)


def test_h0_hermitian_and_translation_invariant(lat4, h0_4):
    h = h0_4.matrix
    assert np.linalg.norm(h - h.conj().T, np.inf) < 1e-12
    t = translation_operator(lat4).matrix
    assert np.linalg.norm(h @ t - t @ h, np.inf) < 1e-10


def test_matrix_function_trivia(h0_4):
    d = h0_4.dim
    eye = np.eye(d)
    assert np.allclose(_mat(matrix_function(eye, "sqrt")), eye, atol=1e-14)
    assert np.allclose(
        _mat(matrix_function(h0_4, "exp_scaled", theta=0.0)), eye,
        atol=1e-14)


def test_sqrt_squares_back():
    rng = np.random.default_rng(3)
    m = rng.standard_normal((16, 16)) + 1j * rng.standard_normal((16, 16))
    m = m @ m.conj().T + 0.5 * np.eye(16)
    r = _mat(matrix_function(m, "sqrt"))
    assert np.linalg.norm(r @ r - m, 2) < 1e-10 * np.linalg.norm(m, 2)


def test_exp_scaled_group_law(h0_4):
    a = _mat(matrix_function(h0_4, "exp_scaled", theta=0.3))
    b = _mat(matrix_function(h0_4, "exp_scaled", theta=0.5))
    c = _mat(matrix_function(h0_4, "exp_scaled", theta=0.8))
    assert np.linalg.norm(a @ b - c, 2) < 1e-10


def test_sqrt_rejects_non_positive():
    with pytest.raises(NotPositive):
        matrix_function(np.diag([1.0, 1e-9]), "sqrt")
    with pytest.raises(NotPositive):
        matrix_function(np.diag([1.0, -0.2]), "inv_sqrt")


def test_l2_inner_basics():
    spacing = 0.7
    psi = random_state(8, spacing, 1)
    phi = random_state(8, spacing, 2)
    assert abs(l2_inner(psi, psi, spacing) - 1.0) < 1e-12
    assert abs(l2_inner(phi, psi, spacing)
               - np.conj(l2_inner(psi, phi, spacing))) < 1e-14
    e0 = np.zeros(8, dtype=complex)
    e0[0] = 1.0 / math.sqrt(spacing)
    e1 = np.zeros(8, dtype=complex)
    e1[1] = 1.0 / math.sqrt(spacing)
    assert abs(l2_inner(e0, e0, spacing) - 1.0) < 1e-14
    assert abs(l2_inner(e0, e1, spacing)) < 1e-14


def test_l2_norm_and_normalized():
    v = np.array([3.0, 4.0], dtype=complex)
    assert abs(l2_norm(normalized(v, 2.0), 2.0) - 1.0) < 1e-14


def test_ground_state_conventions(h0_4):
    sys = EigenSystem.of(h0_4, 1.0)
    e_glob, psi_glob = sys.ground_state("global")
    assert abs(e_glob - sys.values.min()) < 1e-14
    e_pos, psi_pos = sys.ground_state("positive")
    assert e_pos > 0.0
    assert abs(e_pos - sys.values[sys.values > 0].min()) < 1e-14
    assert abs(l2_norm(psi_pos, 1.0) - 1.0) < 1e-12
    with pytest.raises(ValueError):
        sys.ground_state("lowest")


def test_positive_projector(h0_4):
    sys = EigenSystem.of(h0_4, 1.0)
    p = sys.positive_projector()
    assert np.linalg.norm(p - p.conj().T, 2) < 1e-12
    assert np.linalg.norm(p @ p - p, 2) < 1e-12
    _, psi = sys.ground_state("positive")
    assert np.linalg.norm(p @ psi - psi) < 1e-10
    _, bottom = sys.ground_state("global")
    assert np.linalg.norm(p @ bottom) < 1e-10


def test_require_eigenstate(h0_4):
    sys = EigenSystem.of(h0_4, 1.0)
    e, psi = sys.ground_state("positive")
    assert abs(require_eigenstate(h0_4, psi, 1.0) - e) < 1e-10
    with pytest.raises(NotEigenstate):
        require_eigenstate(h0_4, random_state(8, 1.0, 5), 1.0)


def test_lattice_config_rejects_bad_values():
    with pytest.raises(ValueError):
        LatticeConfig(sites=0, spacing=1.0, mass=1.0)
    with pytest.raises(ValueError):
        LatticeConfig(sites=3, spacing=1.0, mass=1.0)
    with pytest.raises(ValueError):
        LatticeConfig(sites=4, spacing=-1.0, mass=1.0)
