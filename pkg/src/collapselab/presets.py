"""Packaged experiments with explicit pass/fail checks and file outputs.

Every preset bundles a default configuration, a fixed numerical procedure,
and the inequalities it asserts. A run writes CSV tables plus a
``summary.json`` holding the full config echo, every check with its observed
value and bound, and the fitted quantities. Results are a deterministic
function of the config (including the seed) and do not depend on the worker
count, so a summary is enough to reproduce a run byte for byte.

The seven presets cover: conservation of the surface-layer product under
grid refinement, the cubic remainder of the second-order operator expansion,
the quadrature-versus-sampling identity for the mean drift operator, flat
ensemble energy for an initial eigenstate, the heating contrast against the
jump-operator model, agreement of the ensemble mean density with the
double-commutator master equation, and the two-branch collapse scenario.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Callable

import numpy as np

from .channels import _positive_modes, sample_fourier_probe, sample_smooth_probe
from .config import ExperimentConfig, merged
from .ensemble import (
    EnsembleConfig,
    ModelSetup,
    mc_mean_drift,
    mean_series,
    run_ensemble,
    scenario_collapse,
)
from .errors import ConfigError
from .evolution import (
    conserved_inner,
    conserved_inner_layer_sum,
    solve_nonlocal,
    transformed_interaction,
)
from .grids import TimeGrid, Window
from .lattice import EigenSystem, normalized
from .master import (
    LindbladSpec,
    compute_A,
    compute_B,
    csl_jump_operators,
    gksl_rhs,
    heating_rate_cfs,
    heating_rate_standard,
    integrate,
    pure_density,
)
from .reporting import operator_csv, write_csv, write_summary


@dataclass(frozen=True)
class Check:
    """One asserted inequality: observed value against its bound."""

    name: str
    passed: bool
    observed: float
    bound: float
    detail: str = ""


@dataclass
class PresetResult:
    name: str
    out_dir: Path
    checks: list[Check]
    summary: dict

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


def _leq(name: str, observed: float, bound: float, detail: str = "") -> Check:
    return Check(name, bool(observed <= bound), float(observed), float(bound),
                 detail)


def _geq(name: str, observed: float, bound: float, detail: str = "") -> Check:
    return Check(name, bool(observed >= bound), float(observed), float(bound),
                 detail)


def _in_range(name: str, observed: float, lo: float, hi: float,
              detail: str = "") -> Check:
    note = f"expected within [{lo}, {hi}]"
    if detail:
        note = f"{note}; {detail}"
    return Check(name, bool(lo <= observed <= hi), float(observed), float(hi),
                 detail=note)


def _fit_slope(x, y) -> float:
    """Least-squares slope of log y against log x."""
    return float(np.polyfit(np.log(np.asarray(x)), np.log(np.asarray(y)), 1)[0])


def _coupling(channels) -> float:
    """Dimensionless coupling: largest amplitude times kernel range."""
    return max(ch.amplitude * ch.profile.ell_min for ch in channels)


def _scaled_channels(channels, factor: float) -> list:
    return [replace(ch, amplitude=ch.amplitude * factor) for ch in channels]


def _random_state(rng: np.random.Generator, dim: int, spacing: float) -> np.ndarray:
    return normalized(rng.normal(size=dim) + 1j * rng.normal(size=dim), spacing)


def _ensemble_config(cfg: ExperimentConfig, **overrides) -> EnsembleConfig:
    wp = cfg.window_params() or {}
    kwargs = dict(
        realizations=cfg.realizations(),
        seed=cfg.seed(),
        picture=cfg.picture(),
        observables=cfg.observables(),
        t_on=wp.get("t_on"),
        t_off=wp.get("t_off"),
        ramp=wp.get("ramp", 0.0),
    )
    kwargs.update(overrides)
    return EnsembleConfig(**kwargs)


def _energy_csv(path: Path, stats, picture: str = "transformed") -> None:
    mean, stderr = mean_series(stats.energy[picture])
    trace, _ = mean_series(stats.norm[picture])
    write_csv(path, ["t", "E_mean", "E_stderr", "trace_mean"],
              [stats.times, mean, stderr, trace])


def _paired_drift(energies: np.ndarray) -> tuple[float, float]:
    """Mean and standard error of the per-realization endpoint energy change."""
    delta = energies[:, -1] - energies[:, 0]
    return float(delta.mean()), float(delta.std(ddof=1) / np.sqrt(delta.size))


def _cubic_budget(points: list[tuple[float, float, float]], g_target: float
                  ) -> tuple[float, float, float]:
    """Extrapolated cubic systematic bound from weaker-coupling runs.

    ``points`` holds (coupling, mean drift, stderr) rows; the fit
    c = sum(g^3 d) / sum(g^6) is the least-squares coefficient of a pure
    cubic through them. Returns (c, stderr of c, budget at g_target) where
    the budget adds three propagated standard errors so that a noisy fit
    widens rather than tightens the bound.
    """
    g = np.array([p[0] for p in points])
    d = np.array([p[1] for p in points])
    se = np.array([p[2] for p in points])
    den = float(np.sum(g**6))
    c = float(np.sum(g**3 * d) / den)
    c_se = float(np.sqrt(np.sum(g**6 * se**2)) / den)
    budget = (max(c, 0.0) + 3.0 * c_se) * g_target**3
    return c, c_se, budget


# ---------------------------------------------------------------------------
# conservation

_CONSERVATION_DEFAULTS = {
    "lattice": {"sites": 4, "spacing": 1.0, "mass": 1.0},
    "kernel": {
        "ell_min": 0.5,
        "profile": "raised_cosine",
        "channels": [
            {"label": "site", "amplitude": 0.04,
             "operator": {"type": "site_projector", "site": 1}},
            {"label": "bump", "amplitude": 0.04,
             "operator": {"type": "position_gaussian", "center": 2.0,
                          "width": 1.2}},
        ],
    },
    "time": {"t0": 0.0, "t1": 2.0, "dt": 0.03125},
    "noise": {"seed": 1105,
              "window": {"t_on": 0.5, "t_off": 1.5, "ramp": 0.25}},
    "run": {
        "preset": "conservation",
        "tolerances": {"drift": 1.0e-6, "ratio_low": 3.0, "ratio_high": 5.3,
                       "dual": 1.0e-8, "zero_noise": 1.0e-12},
    },
}


def _run_conservation(cfg: ExperimentConfig, out: Path) -> tuple[list[Check], dict]:
    """Norm drift under the conserved product, on the base and halved grid.

    Uses the band-limited probe field so the drift is a smooth function of
    the step and the refinement ratio is meaningful; white noise has no
    per-realization convergence order to measure.
    """
    lattice = cfg.lattice()
    grid = cfg.grid()
    channels = cfg.channels(lattice)
    h0 = cfg.build_h0(lattice)
    spacing = lattice.spacing
    window = Window(**(cfg.window_params() or
                       {"t_on": grid.t0, "t_off": grid.t1, "ramp": 0.0}))
    rng = np.random.default_rng(cfg.seed())
    psi0 = _random_state(rng, h0.shape[0], spacing)

    def norm_series(record, g):
        lo, hi = record.reach, g.n_nodes - record.reach
        norms = np.array([
            conserved_inner(record, i, record.state(i), record.state(i)).real
            for i in range(lo, hi)
        ])
        return g.times[lo:hi], norms, np.abs(norms - norms[0])

    drifts = {}
    rec = None
    for tag, g in (("dt", grid), ("dt_half", grid.refined(2))):
        probe = sample_smooth_probe(channels, g, cfg.seed(), window=window)
        record = solve_nonlocal(psi0, g, channels, probe, h0, spacing,
                                tol=1e-12, propagators=True)
        times, norms, drift = norm_series(record, g)
        drifts[tag] = float(drift.max())
        write_csv(out / f"conservation_{tag}.csv",
                  ["t", "conserved_norm", "drift"],
                  [times, norms, drift])
        if tag == "dt":
            rec = record

    probe0 = sample_smooth_probe(channels, grid, cfg.seed(), window=window,
                                 amplitude=0.0)
    record0 = solve_nonlocal(psi0, grid, channels, probe0, h0, spacing,
                             tol=1e-12, propagators=True)
    times0, norms0, drift0 = norm_series(record0, grid)
    write_csv(out / "conservation_zero_noise.csv",
              ["t", "conserved_norm", "drift"],
              [times0, norms0, drift0])

    # dual formulas on the base-grid propagator record, fresh state pairs
    i_mid = grid.n_nodes // 2
    diffs = np.empty(100)
    for p in range(diffs.size):
        phi_traj = rec.trajectory(_random_state(rng, h0.shape[0], spacing))
        psi_traj = rec.trajectory(_random_state(rng, h0.shape[0], spacing))
        equal_time = conserved_inner(rec, i_mid, phi_traj[i_mid],
                                     psi_traj[i_mid])
        layer_sum = conserved_inner_layer_sum(rec, i_mid, phi_traj, psi_traj)
        diffs[p] = abs(equal_time - layer_sum)
    write_csv(out / "conservation_dual.csv", ["pair", "difference"],
              [np.arange(diffs.size), diffs])

    ratio = drifts["dt"] / max(drifts["dt_half"], 1e-300)
    checks = [
        _leq("drift_at_dt", drifts["dt"], cfg.tolerance("drift", 1e-6)),
        _in_range("refinement_ratio", ratio,
                  cfg.tolerance("ratio_low", 3.0),
                  cfg.tolerance("ratio_high", 5.3)),
        _leq("zero_noise_drift", float(drift0.max()),
             cfg.tolerance("zero_noise", 1e-12)),
        _leq("dual_formula", float(diffs.max()), cfg.tolerance("dual", 1e-8),
             detail="equal-time vs layer-sum product, 100 state pairs"),
    ]
    extras = {"drift": drifts, "refinement_ratio": ratio,
              "files": ["conservation_dt.csv", "conservation_dt_half.csv",
                        "conservation_zero_noise.csv",
                        "conservation_dual.csv"]}
    return checks, extras


# ---------------------------------------------------------------------------
# expansion

_EXPANSION_DEFAULTS = {
    "lattice": {"sites": 4, "spacing": 1.0, "mass": 1.0},
    "kernel": {
        "ell_min": 0.5,
        "profile": "raised_cosine",
        "channels": [
            {"label": "site", "amplitude": 0.08,
             "operator": {"type": "site_projector", "site": 1}},
            {"label": "bump", "amplitude": 0.08,
             "operator": {"type": "position_gaussian", "center": 2.0,
                          "width": 1.2}},
        ],
    },
    "time": {"t0": 0.0, "t1": 3.5, "dt": 0.015625},
    "noise": {"seed": 1509,
              "window": {"t_on": 0.5, "t_off": 3.0, "ramp": 0.5}},
    "run": {
        "preset": "expansion",
        "tolerances": {"slope_low": 2.5, "slope_high": 3.5,
                       "probe_amplitude": 8.0, "probe_modes": 4},
    },
}

_EXPANSION_COUPLINGS = (0.04, 0.02, 0.01)


def _run_expansion(cfg: ExperimentConfig, out: Path) -> tuple[list[Check], dict]:
    """Coupling scaling of the expansion remainder and of the asymmetry.

    Solves each coupling on three nested grids and extrapolates the
    operator difference in the step size twice. The raw single-grid
    difference is dominated by a quadrature mismatch that grows linearly
    with the coupling; two halvings remove the leading and subleading
    step-size bias, leaving the genuine remainder, which should scale
    cubically. The probe must be analytic between window joins for the
    extrapolation to hold, hence the sinusoid field and the requirement
    that the strips around the sampled nodes stay inside the window
    plateau. The anti-Hermitian part is extrapolated the same way; the
    conserved norm makes the exact operator Hermitian in the continuum,
    so the measured values sit at the extrapolation floor rather than on
    a cubic trend, and this check records that outcome honestly.
    """
    lattice = cfg.lattice()
    grid = cfg.grid()
    base = cfg.channels(lattice)
    h0 = cfg.build_h0(lattice)
    spacing = lattice.spacing
    g0 = _coupling(base)
    ell = min(ch.profile.ell_min for ch in base)
    params = cfg.window_params()
    if params is None:
        raise ConfigError("the expansion preset needs noise.window so the "
                          "probe is smooth and off near the grid ends")
    window = Window(**params)
    amp = cfg.tolerance("probe_amplitude", 8.0)
    modes = int(cfg.tolerance("probe_modes", 4))

    mid = grid.times[grid.n_nodes // 2]
    spread = 12 * grid.dt
    t_eval = (mid - spread, mid, mid + spread)
    lo_need = window.t_on + window.ramp
    hi_need = window.t_off - window.ramp
    margin = ell + 2 * grid.dt
    if t_eval[0] - margin < lo_need or t_eval[-1] + margin > hi_need:
        raise ConfigError("window plateau too narrow for the sampled nodes; "
                          "widen [t_on, t_off] or shrink ramp")

    remainders, asymmetries = [], []
    for target in _EXPANSION_COUPLINGS:
        channels = _scaled_channels(base, target / g0)
        diffs, antis = [], []
        for g in (grid, grid.refined(2), grid.refined(4)):
            probe = sample_fourier_probe(channels, g, cfg.seed(),
                                         window=window, modes=modes,
                                         amplitude=amp)
            rec = solve_nonlocal(None, g, channels, probe, h0, spacing,
                                 tol=1e-12, propagators=True)
            row_d, row_a = [], []
            for t in t_eval:
                i = g.node_index(t)
                exact = transformed_interaction(rec, i, mode="exact",
                                                fd_order=4)
                series = transformed_interaction(rec, i, mode="expansion")
                row_d.append(exact - series)
                row_a.append(exact - exact.conj().T)
            diffs.append(row_d)
            antis.append(row_a)
        rem = asym = 0.0
        for k in range(len(t_eval)):
            d1, d2, d4 = diffs[0][k], diffs[1][k], diffs[2][k]
            a1, a2, a4 = antis[0][k], antis[1][k], antis[2][k]
            d = (16.0 * (4.0 * d4 - d2) / 3.0 - (4.0 * d2 - d1) / 3.0) / 15.0
            a = (16.0 * (4.0 * a4 - a2) / 3.0 - (4.0 * a2 - a1) / 3.0) / 15.0
            rem = max(rem, float(np.linalg.norm(d, 2)))
            asym = max(asym, float(np.linalg.norm(a, 2)))
        remainders.append(rem)
        asymmetries.append(asym)

    slope_rem = _fit_slope(_EXPANSION_COUPLINGS, remainders)
    slope_asym = _fit_slope(_EXPANSION_COUPLINGS, asymmetries)
    write_csv(out / "expansion.csv",
              ["coupling", "remainder_norm", "asymmetry_norm"],
              [np.array(_EXPANSION_COUPLINGS), np.array(remainders),
               np.array(asymmetries)])
    lo = cfg.tolerance("slope_low", 2.5)
    hi = cfg.tolerance("slope_high", 3.5)
    checks = [
        _in_range("remainder_slope", slope_rem, lo, hi),
        _in_range("asymmetry_slope", slope_asym, lo, hi,
                  detail="anti-Hermitian part sits at the extrapolation "
                         "floor (norms %.1e..%.1e); the exact operator is "
                         "Hermitian in the continuum, so no cubic exponent "
                         "is measurable"
                         % (max(asymmetries), min(asymmetries))),
    ]
    extras = {"remainder_slope": slope_rem, "asymmetry_slope": slope_asym,
              "remainder_norms": remainders, "asymmetry_norms": asymmetries,
              "files": ["expansion.csv"]}
    return checks, extras


# ---------------------------------------------------------------------------
# a-operator

_A_OPERATOR_DEFAULTS = {
    "lattice": {"sites": 4, "spacing": 1.0, "mass": 1.0},
    "kernel": {
        "ell_min": 0.5,
        "profile": "raised_cosine",
        "channels": [
            {"label": "site", "amplitude": 0.1,
             "operator": {"type": "site_projector", "site": 1}},
            {"label": "bump", "amplitude": 0.1,
             "operator": {"type": "position_gaussian", "center": 2.0,
                          "width": 1.2}},
        ],
    },
    "time": {"t0": 0.0, "t1": 2.0, "dt": 0.03125},
    "noise": {"seed": 2741},
    "ensemble": {"realizations": 10000},
    "run": {
        "preset": "a-operator",
        "tolerances": {"sigma": 3.0, "translation": 1.0e-10},
    },
}


def _run_a_operator(cfg: ExperimentConfig, out: Path) -> tuple[list[Check], dict]:
    lattice = cfg.lattice()
    grid = cfg.grid()
    channels = cfg.channels(lattice)
    h0 = cfg.build_h0(lattice)
    model = ModelSetup(grid, h0, lattice.spacing, channels)

    quad = compute_A(model.opset)
    # same channels on a grid shifted by five steps; the drift operator
    # must not see absolute time
    shift = 5 * grid.dt
    shifted = ModelSetup(TimeGrid(grid.t0 + shift, grid.t1 + shift, grid.dt),
                         h0, lattice.spacing, channels)
    translation = float(np.abs(quad - compute_A(shifted.opset)).max())

    # sampling estimate at a node whose pairing support lies inside the grid
    node = grid.node_index(grid.t0 + 2.5 * model.ell_min)
    mc, stderr = mc_mean_drift(model, cfg.realizations(), cfg.seed(), node)
    diff = mc - quad
    z_fro = float(np.linalg.norm(diff) / np.sqrt(np.sum(stderr**2)))
    z_max = float(np.max(np.abs(diff) / stderr))

    operator_csv(out / "a_operator.csv",
                 [("quadrature", quad), ("mc_mean", mc),
                  ("mc_stderr", stderr.astype(complex))])
    checks = [
        _leq("mc_agreement", z_fro, cfg.tolerance("sigma", 3.0),
             detail="Frobenius distance in combined stderr units"),
        _leq("translation_invariance", translation,
             cfg.tolerance("translation", 1e-10)),
    ]
    extras = {"z_frobenius": z_fro, "z_max_entry": z_max,
              "evaluation_node": int(node), "files": ["a_operator.csv"]}
    return checks, extras


# ---------------------------------------------------------------------------
# no-heating

_NO_HEATING_DEFAULTS = {
    "lattice": {"sites": 4, "spacing": 1.0, "mass": 1.0},
    "kernel": {
        "ell_min": 0.5,
        "profile": "raised_cosine",
        "channels": [
            {"label": "site", "amplitude": 0.1,
             "operator": {"type": "site_projector", "site": 1}},
            {"label": "bump", "amplitude": 0.1,
             "operator": {"type": "position_gaussian", "center": 2.0,
                          "width": 1.2}},
        ],
    },
    "time": {"t0": 0.0, "t1": 4.0, "dt": 0.03125},
    "noise": {"seed": 905,
              "window": {"t_on": 0.75, "t_off": 3.25, "ramp": 1.0}},
    "ensemble": {"realizations": 10000, "picture": "transformed"},
    "run": {
        "preset": "no-heating",
        "tolerances": {"b_ratio": 1.0e-8, "sweep_realizations": 2500},
    },
}


def _run_no_heating(cfg: ExperimentConfig, out: Path) -> tuple[list[Check], dict]:
    """Ensemble energy of an eigenstate stays flat within noise plus a
    cubic budget extrapolated from two weaker couplings."""
    lattice = cfg.lattice()
    grid = cfg.grid()
    channels = cfg.channels(lattice)
    h0 = cfg.build_h0(lattice)
    spacing = lattice.spacing
    model = ModelSetup(grid, h0, spacing, channels)
    e0, psi0 = EigenSystem.of(h0, spacing).ground_state("positive")

    ecfg = _ensemble_config(cfg, picture="transformed")
    stats = run_ensemble(psi0, ecfg, model)
    d_mean, d_se = _paired_drift(stats.energy["transformed"])
    _energy_csv(out / "energy.csv", stats)

    g0 = _coupling(channels)
    sweep_r = int(cfg.tolerance("sweep_realizations", 2500))
    points = []
    for factor in (0.5, 0.25):
        weak = ModelSetup(grid, h0, spacing,
                          _scaled_channels(channels, factor))
        weak_stats = run_ensemble(
            psi0, replace(ecfg, realizations=sweep_r), weak)
        dm, ds = _paired_drift(weak_stats.energy["transformed"])
        points.append((g0 * factor, dm, ds))
    c_fit, c_se, budget = _cubic_budget(points, g0)
    write_csv(out / "coupling_sweep.csv",
              ["coupling", "delta_E_mean", "delta_E_stderr"],
              [np.array([g0] + [p[0] for p in points]),
               np.array([d_mean] + [p[1] for p in points]),
               np.array([d_se] + [p[2] for p in points])])

    b_op = compute_B(model.opset)
    b_ratio = float(np.linalg.norm(b_op + b_op.conj().T, 2)
                    / max(np.linalg.norm(b_op, 2),
                          max(ch.amplitude for ch in channels) ** 2))

    checks = [
        _leq("energy_drift", abs(d_mean), 3.0 * d_se + budget,
             detail=f"paired endpoint change, budget {budget:.3e}"),
        _leq("b_antihermitian", b_ratio, cfg.tolerance("b_ratio", 1e-8)),
    ]
    extras = {"initial_energy": e0, "delta_e": (d_mean, d_se),
              "cubic_coefficient": (c_fit, c_se), "budget": budget,
              "files": ["energy.csv", "coupling_sweep.csv"]}
    return checks, extras


# ---------------------------------------------------------------------------
# csl-contrast

_CSL_DEFAULTS = {
    "lattice": {"sites": 4, "spacing": 1.0, "mass": 1.0},
    "kernel": {
        "ell_min": 0.5,
        "profile": "raised_cosine",
        "channels": [
            {"label": "site", "amplitude": 0.1,
             "operator": {"type": "site_projector", "site": 1}},
            {"label": "bump", "amplitude": 0.1,
             "operator": {"type": "position_gaussian", "center": 2.0,
                          "width": 1.2}},
        ],
    },
    "time": {"t0": 0.0, "t1": 3.0, "dt": 0.03125},
    "noise": {"seed": 417,
              "window": {"t_on": 0.5, "t_off": 2.5, "ramp": 0.5}},
    "ensemble": {"realizations": 2000, "picture": "transformed"},
    "run": {
        "preset": "csl-contrast",
        "tolerances": {"rate_floor": -1.0e-10, "identity": 1.0e-10},
    },
}


def _run_csl_contrast(cfg: ExperimentConfig, out: Path) -> tuple[list[Check], dict]:
    """Jump-operator model heats the positive-branch ground state; the
    double-commutator model run at matched coupling does not."""
    lattice = cfg.lattice()
    grid = cfg.grid()
    channels = cfg.channels(lattice)
    h0 = cfg.build_h0(lattice)
    spacing = lattice.spacing
    esys = EigenSystem.of(h0, spacing)
    e0, psi0 = esys.ground_state("positive")

    # positive-spectrum convention: e0 is the bottom of the subspace the
    # jumps act on, so the textbook rate is a sum of nonnegative terms
    jumps = csl_jump_operators(channels, projector=esys.positive_projector())
    gspec = LindbladSpec.gksl(h0, jumps)
    total_rate = heating_rate_standard(psi0, gspec, spacing)
    sea_rate = heating_rate_standard(
        psi0, LindbladSpec.gksl(h0, csl_jump_operators(channels)), spacing)

    labels, comm_norms, rates = [], [], []
    for ch, jump in zip(channels, jumps):
        labels.append(ch.label)
        comm_norms.append(float(np.linalg.norm(jump @ h0 - h0 @ jump, 2)))
        rates.append(heating_rate_standard(
            psi0, LindbladSpec.gksl(h0, [jump]), spacing))
    write_csv(out / "heating_rates.csv",
              ["channel", "commutator_norm", "heating_rate"],
              [np.array(labels), np.array(comm_norms), np.array(rates)])
    noncommuting = [r for r, c in zip(rates, comm_norms) if c > 1e-10]
    if not noncommuting:
        raise ConfigError("csl-contrast needs a channel that does not "
                          "commute with the free Hamiltonian")

    # independent route to the same number through the generator itself
    sigma = pure_density(psi0, spacing)
    direct = float(np.trace(h0 @ gksl_rhs(sigma.matrix, gspec)).real)
    identity_err = abs(total_rate - direct) / max(abs(total_rate), 1.0)

    # matched double-commutator run: eigenstate energy stays flat
    model = ModelSetup(grid, h0, spacing, channels)
    ecfg = _ensemble_config(cfg, picture="transformed")
    stats = run_ensemble(psi0, ecfg, model)
    d_mean, d_se = _paired_drift(stats.energy["transformed"])
    g0 = _coupling(channels)
    weak = ModelSetup(grid, h0, spacing, _scaled_channels(channels, 0.5))
    weak_stats = run_ensemble(psi0, ecfg, weak)
    dm, ds = _paired_drift(weak_stats.energy["transformed"])
    c_fit, c_se, budget = _cubic_budget([(0.5 * g0, dm, ds)], g0)
    _energy_csv(out / "cfs_energy.csv", stats)

    cfs_rate, cfs_rate_err = heating_rate_cfs(
        sigma.matrix, LindbladSpec.cfs(h0, model.opset))

    checks = [
        _geq("gksl_rate_floor", total_rate,
             cfg.tolerance("rate_floor", -1e-10)),
        Check("gksl_rate_positive", bool(max(noncommuting) > 0.0),
              float(max(noncommuting)), 0.0,
              detail="strict heating for a non-commuting jump operator"),
        _leq("gksl_rate_identity", identity_err,
             cfg.tolerance("identity", 1e-10),
             detail="state formula vs generator trace"),
        _leq("cfs_energy_flat", abs(d_mean), 3.0 * d_se + budget),
    ]
    extras = {"initial_energy": e0, "gksl_total_rate": total_rate,
              "unprojected_rate": sea_rate,
              "cfs_instantaneous_rate": (cfs_rate, cfs_rate_err),
              "delta_e": (d_mean, d_se), "budget": budget,
              "contrast": total_rate / max(abs(d_mean), d_se),
              "files": ["heating_rates.csv", "cfs_energy.csv"]}
    return checks, extras


# ---------------------------------------------------------------------------
# lindblad-vs-mc

_LINDBLAD_DEFAULTS = {
    "lattice": {"sites": 4, "spacing": 1.0, "mass": 1.0},
    "kernel": {
        "ell_min": 0.5,
        "profile": "raised_cosine",
        "channels": [
            {"label": "site", "amplitude": 0.2,
             "operator": {"type": "site_projector", "site": 1}},
            {"label": "bump", "amplitude": 0.2,
             "operator": {"type": "position_gaussian", "center": 2.0,
                          "width": 1.2}},
        ],
    },
    "time": {"t0": 0.0, "t1": 3.0, "dt": 0.03125},
    "noise": {"seed": 1913},
    "ensemble": {"realizations": 10000, "picture": "transformed"},
    "run": {
        "preset": "lindblad-vs-mc",
        # the measured excess stays below 0.2 up to three times this
        # coupling; 1.0 leaves margin yet keeps the bound under the
        # distance at which free evolution is rejected
        "tolerances": {"excess_coefficient": 1.0, "trace": 1.0e-8},
    },
}


def _run_lindblad_vs_mc(cfg: ExperimentConfig, out: Path) -> tuple[list[Check], dict]:
    """Ensemble mean density against the master-equation solution.

    The comparison starts at the first checkpoint past twice the kernel
    range, where the pairing has its full stationary support; the master
    equation is integrated from the sampled density there, so the check is
    initial-value against initial-value with no free constant.
    """
    lattice = cfg.lattice()
    grid = cfg.grid()
    channels = cfg.channels(lattice)
    h0 = cfg.build_h0(lattice)
    spacing = lattice.spacing
    model = ModelSetup(grid, h0, spacing, channels)

    sys = EigenSystem.of(h0, spacing)
    _, modes = _positive_modes(lattice)
    psi0 = normalized(sys.state(modes[0]) + sys.state(modes[1]), spacing)

    ecfg = _ensemble_config(cfg, picture="transformed")
    stats = run_ensemble(psi0, ecfg, model)
    cps = stats.checkpoint_nodes
    start = int(np.argmax(cps >= 2 * model.opset.half_width))
    if cps[start] < 2 * model.opset.half_width or start >= len(cps) - 1:
        raise ConfigError("grid too short: no checkpoint interval past "
                          "twice the kernel range")

    sub = TimeGrid(float(stats.times[cps[start]]), grid.t1, grid.dt)
    spec = LindbladSpec.cfs(h0, model.opset)
    traj = integrate(stats.sigma_mean[start], spec, sub)
    # free flow from the same start; its miss distance shows the noise
    # term is resolved above the statistical band
    free = integrate(stats.sigma_mean[start], LindbladSpec.gksl(h0, []), sub)

    g0 = _coupling(channels)
    se_start = float(np.abs(stats.sigma_stderr[start]).max())
    rows = []
    worst_excess = -np.inf
    free_ratio = 0.0
    agree = True
    c_bound = cfg.tolerance("excess_coefficient", 1.0)
    for i in range(start + 1, len(cps)):
        node = int(cps[i] - cps[start])
        diff = float(np.abs(stats.sigma_mean[i] - traj.sigmas[node]).max())
        miss = float(np.abs(stats.sigma_mean[i] - free.sigmas[node]).max())
        se = float(np.abs(stats.sigma_stderr[i]).max()) + se_start
        elapsed = float(stats.times[cps[i]] - sub.t0)
        bound = 3.0 * se + c_bound * g0**3 * elapsed
        agree &= diff <= bound
        worst_excess = max(worst_excess, (diff - 3.0 * se) / (g0**3 * elapsed))
        free_ratio = max(free_ratio, miss / bound)
        rows.append((float(stats.times[cps[i]]), diff, se, bound))
    arr = np.array(rows)
    write_csv(out / "sigma_distance.csv",
              ["t", "max_entry_distance", "stderr_sum", "bound"],
              [arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3]])
    operator_csv(out / "sigma_final.csv",
                 [("mc_mean", stats.sigma_mean[-1]),
                  ("mc_stderr", stats.sigma_stderr[-1].astype(complex)),
                  ("lindblad", traj.sigmas[int(cps[-1] - cps[start])])])

    checks = [
        Check("sigma_agreement", bool(agree), worst_excess, c_bound,
              detail="fitted excess coefficient against its frozen bound"),
        _leq("trace_preserved", traj.max_trace_drift,
             cfg.tolerance("trace", 1e-8)),
    ]
    extras = {"excess_coefficient": worst_excess,
              "free_flow_miss_over_bound": free_ratio,
              "start_time": sub.t0,
              "min_eigenvalue": float(np.min(traj.min_eigenvalue)),
              "files": ["sigma_distance.csv", "sigma_final.csv"]}
    return checks, extras


# ---------------------------------------------------------------------------
# collapse-scenario

_COLLAPSE_DEFAULTS = {
    "lattice": {"sites": 8, "spacing": 1.0, "mass": 1.0},
    "kernel": {
        "ell_min": 0.5,
        "profile": "raised_cosine",
        "channels": [
            {"label": "branch_hop", "amplitude": 0.2,
             "operator": {"type": "eigenmode_coupling", "first": 1,
                          "second": 2}},
        ],
    },
    "time": {"t0": 0.0, "t1": 6.0, "dt": 0.03125},
    "noise": {"seed": 627,
              "window": {"t_on": 0.5, "t_off": 5.5, "ramp": 1.0}},
    "ensemble": {
        "realizations": 4000,
        "picture": "transformed",
        "observables": [
            {"label": "branch", "operator": {"type": "eigenmode_difference",
                                             "first": 1, "second": 2}},
        ],
    },
    "run": {"preset": "collapse-scenario", "tolerances": {}},
}


def _run_collapse(cfg: ExperimentConfig, out: Path) -> tuple[list[Check], dict]:
    """Two-branch superposition under a switched field.

    The two branches are a degenerate pair of free modes and the channel
    hops between them, so the per-realization motion stays inside the pair
    and the branch weight is an exact martingale. Checks: the commutator
    estimator is nonpositive everywhere and strictly active mid-window, the
    mean of the observable stays put, the weight variance grows, and it
    grows monotonically through the checkpoints.
    """
    lattice = cfg.lattice()
    grid = cfg.grid()
    channels = cfg.channels(lattice)
    h0 = cfg.build_h0(lattice)
    spacing = lattice.spacing
    model = ModelSetup(grid, h0, spacing, channels)

    sys, modes = _positive_modes(lattice)
    label = cfg.observables(lattice)[0][0]
    # equal weights with a quarter-wave relative phase, so the hop channel
    # moves weight between the branches instead of only turning the phase
    psi0 = normalized(sys.state(modes[1]) + 1j * sys.state(modes[2]), spacing)

    ecfg = _ensemble_config(cfg, picture="transformed")
    report = scenario_collapse(psi0, ecfg, model)
    stats = report["stats"]
    cps = stats.checkpoint_nodes

    series = stats.observables[label]["transformed"]
    paired = series[:, cps] - series[:, [0]]
    pair_mean, pair_se = mean_series(paired)
    mean_steady = float(np.max(np.abs(pair_mean[1:]) - 3.0 * pair_se[1:]))

    c12_mean, c12_se = report["diagnostics"]["c12_series"]
    mid = grid.n_nodes // 2
    var_series, var_se = report["branch_variance"]
    v_cp, v_se_cp = var_series[cps], var_se[cps]
    increments = np.diff(v_cp)
    slack = 3.0 * (v_se_cp[1:] + v_se_cp[:-1])
    growth = float(v_cp[-1] - v_cp[0])
    growth_se = float(np.hypot(v_se_cp[0], v_se_cp[-1]))
    w_mean, w_se = report["branch_mean"]

    obs_mean, obs_se = report["observable_mean"]
    write_csv(out / "observable.csv",
              ["t", "O_mean", "O_stderr", "c12_mean", "c12_stderr"],
              [stats.times, obs_mean, obs_se, c12_mean, c12_se])
    write_csv(out / "branch_weight.csv",
              ["t", "weight_mean", "weight_stderr", "weight_variance",
               "variance_stderr"],
              [stats.times, w_mean, w_se, var_series, var_se])
    hist, edges = report["final_histogram"]
    write_csv(out / "weight_histogram.csv",
              ["bin_low", "bin_high", "count"],
              [edges[:-1], edges[1:], hist])

    checks = [
        _leq("c12_nonpositive", float(c12_mean.max()), 0.0),
        _leq("c12_active_midwindow", float(c12_mean[mid] + 3.0 * c12_se[mid]),
             0.0, detail="strictly negative at the window center"),
        _leq("observable_mean_steady", mean_steady, 0.0,
             detail="paired change within three stderr at every checkpoint"),
        _leq("branch_mean_martingale",
             float(abs(w_mean[-1] - 0.5)), 3.0 * float(w_se[-1])),
        _geq("variance_monotone", float((increments + slack).min()), 0.0,
             detail="checkpoint increments above minus three stderr"),
        _geq("variance_growth", growth, 3.0 * growth_se),
    ]
    extras = {
        "variance_endpoints": (float(v_cp[0]), float(v_cp[-1])),
        "adjusted_difference": report["diagnostics"]["adjusted_difference"],
        "raw_difference": report["diagnostics"]["raw_difference"],
        "files": ["observable.csv", "branch_weight.csv",
                  "weight_histogram.csv"],
    }
    return checks, extras


# ---------------------------------------------------------------------------
# registry and driver

@dataclass(frozen=True)
class Preset:
    name: str
    claim: str
    defaults: dict
    runner: Callable[[ExperimentConfig, Path], tuple[list[Check], dict]]


PRESETS: dict[str, Preset] = {
    p.name: p for p in (
        Preset("conservation",
               "surface-layer norm is conserved; drift falls as dt^2",
               _CONSERVATION_DEFAULTS, _run_conservation),
        Preset("expansion",
               "transformed interaction matches its expansion to cubic order",
               _EXPANSION_DEFAULTS, _run_expansion),
        Preset("a-operator",
               "drift-operator quadrature equals the sampling mean",
               _A_OPERATOR_DEFAULTS, _run_a_operator),
        Preset("no-heating",
               "eigenstate ensemble energy stays flat; B is anti-hermitian",
               _NO_HEATING_DEFAULTS, _run_no_heating),
        Preset("csl-contrast",
               "jump-operator model heats, double-commutator model does not",
               _CSL_DEFAULTS, _run_csl_contrast),
        Preset("lindblad-vs-mc",
               "ensemble mean density follows the master equation",
               _LINDBLAD_DEFAULTS, _run_lindblad_vs_mc),
        Preset("collapse-scenario",
               "two-branch weights spread as a martingale under the noise",
               _COLLAPSE_DEFAULTS, _run_collapse),
    )
}


def run_preset(name: str, config: dict | ExperimentConfig | None = None, *,
               out: str | Path | None = None, seed: int | None = None,
               realizations: int | None = None) -> PresetResult:
    """Run one preset and write its result files.

    ``config`` overrides the preset defaults (recursively, section by
    section); ``seed``, ``realizations``, and ``out`` override single keys
    on top of that. Raises ConfigError for an unknown name or bad config.
    """
    if name not in PRESETS:
        raise ConfigError(
            f"unknown preset {name!r}; valid names: {', '.join(PRESETS)}")
    preset = PRESETS[name]
    raw = preset.defaults
    if config is not None:
        user = config.data if isinstance(config, ExperimentConfig) else config
        raw = merged(raw, user)
    overrides: dict = {}
    if seed is not None:
        overrides.setdefault("noise", {})["seed"] = int(seed)
    if realizations is not None:
        overrides.setdefault("ensemble", {})["realizations"] = int(realizations)
    if out is not None:
        overrides.setdefault("run", {})["out"] = str(out)
    if overrides:
        raw = merged(raw, overrides)
    cfg = ExperimentConfig.from_dict(raw)
    out_dir = Path(cfg.out_dir() or Path("results") / name)
    checks, extras = preset.runner(cfg, out_dir)
    summary = {
        "preset": name,
        "passed": all(c.passed for c in checks),
        "checks": [asdict(c) for c in checks],
        "config": cfg.echo(),
        **extras,
    }
    write_summary(out_dir / "summary.json", summary)
    return PresetResult(name, out_dir, checks, summary)
