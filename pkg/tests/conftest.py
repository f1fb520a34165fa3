"""Shared builders for the test suite.

Everything here is desk scale: D <= 16, grids of a few hundred nodes, so
each module's tests stay in the second range.
"""

from __future__ import annotations

import numpy as np
import pytest

from collapselab.channels import KernelProfile, make_channel, site_projector
from collapselab.grids import TimeGrid, Window
from collapselab.lattice import LatticeConfig, build_dirac_h0, normalized


ELL = 0.5


@pytest.fixture
def lat4() -> LatticeConfig:
    return LatticeConfig(sites=4, spacing=1.0, mass=1.0)


@pytest.fixture
def h0_4(lat4):
    return build_dirac_h0(lat4)


@pytest.fixture
def grid16() -> TimeGrid:
    return TimeGrid(0.0, 2.0, ELL / 16.0)


@pytest.fixture
def window_mid() -> Window:
    return Window(t_on=0.4, t_off=1.6, ramp=0.3)


def two_channels(lat: LatticeConfig, amplitude: float):
    """A localized projector and a dense random operator, the generic
    non-commuting pair. The dense operator is pre-normalized so that
    ``amplitude`` is the coupling for both channels."""
    prof = KernelProfile(ell_min=ELL)
    rng = np.random.default_rng(11)
    d = 2 * lat.sites
    m = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    m = m + m.conj().T
    m = m / np.linalg.norm(m, 2)
    return [
        make_channel("site", site_projector(lat, 1), prof, amplitude),
        make_channel("dense", m, prof, amplitude),
    ]


def random_state(dim: int, spacing: float, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    return normalized(v, spacing)
