"""Nonlocal-in-time interaction channels and their stochastic fields.

A channel couples a Hermitian spatial operator A to a scalar field through a
compactly supported, even, normalized kernel L in the time difference:

    V(t, t') = sum_a  lambda_a * w_a((t+t')/2) * L_a(t-t') * A_a.

Evaluating the field at the midpoint and the kernel at the difference makes
V(t,t')^dag = V(t',t) hold exactly for real fields. The white-noise field is
sampled on a grid of half the evolution step, so midpoints of evolution
nodes are themselves noise nodes and no rounding enters the pairing
structure. A band-limited "smooth probe" field with the same interface is
provided for per-realization operator checks, where finite differences and
grid-refinement ratios need a path with bounded derivatives.

Channel operators condense a channel into a stack over the time difference,

    M_a(z) = (1/2) * lambda_a * L_a(z) * (A_a e^{i z h0} + e^{-i z h0} A_a),

which is Hermitian for every z but even in z only when [A_a, h0] = 0. The
set carries both the raw stack and the symmetrized stack
0.5*(M(z) + M(-z)) and records their discrepancy.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import ConfigError, DimensionMismatch, GridTooCoarse, NotPSD
from .grids import TimeGrid, Window
from .lattice import (
    SPINOR_DIM,
    EigenSystem,
    FreePropagator,
    LatticeConfig,
    _as_matrix,
    _plane_wave_matrix,
    build_dirac_h0,
    momenta,
)

log = logging.getLogger(__name__)

KERNEL_SHAPES = ("raised_cosine", "gaussian_truncated")


@dataclass(frozen=True)
class KernelProfile:
    """Even, compactly supported, unit-integral kernel in the time difference.

    'raised_cosine' is cos^2(pi z / (2 l)) / l on [-l, l]; its continuum
    integral is exactly one and it vanishes with its first derivative at the
    support edge. 'gaussian_truncated' is a Gaussian of width l/3 shifted to
    vanish continuously at the edge and renormalized in closed form.
    """

    ell_min: float
    shape: str = "raised_cosine"

    def __post_init__(self) -> None:
        if self.ell_min <= 0.0:
            raise ConfigError("kernel range ell_min must be positive")
        if self.shape not in KERNEL_SHAPES:
            raise ConfigError(f"unknown kernel shape {self.shape!r}")

    def value(self, zeta) -> np.ndarray:
        z = np.asarray(zeta, dtype=float)
        out = np.zeros_like(z)
        inside = np.abs(z) <= self.ell_min
        if self.shape == "raised_cosine":
            out[inside] = (
                np.cos(0.5 * np.pi * z[inside] / self.ell_min) ** 2 / self.ell_min
            )
        else:
            s = self.ell_min / 3.0
            edge = math.exp(-0.5 * (self.ell_min / s) ** 2)
            norm = s * math.sqrt(2.0 * math.pi) * math.erf(
                self.ell_min / (s * math.sqrt(2.0))
            ) - 2.0 * self.ell_min * edge
            out[inside] = (np.exp(-0.5 * (z[inside] / s) ** 2) - edge) / norm
        return out


def site_projector(cfg: LatticeConfig, site: int) -> np.ndarray:
    """Projector onto one lattice site (both spinor components)."""
    if not (0 <= site < cfg.sites):
        raise ConfigError(f"site {site} outside lattice of {cfg.sites}")
    d = np.zeros(cfg.sites)
    d[site] = 1.0
    return np.kron(np.diag(d), np.eye(SPINOR_DIM)).astype(complex)


def position_gaussian(cfg: LatticeConfig, center: float, width: float) -> np.ndarray:
    """Diagonal multiplication operator with a periodized Gaussian site profile."""
    if width <= 0.0:
        raise ConfigError("width must be positive")
    x = cfg.spacing * np.arange(cfg.sites)
    span = cfg.spacing * cfg.sites
    # periodic distance on the ring
    d = np.minimum(np.abs(x - center) % span, span - np.abs(x - center) % span)
    prof = np.exp(-0.5 * (d / width) ** 2)
    prof = prof / prof.max()
    return np.kron(np.diag(prof), np.eye(SPINOR_DIM)).astype(complex)


def momentum_function(cfg: LatticeConfig, values) -> np.ndarray:
    """Operator diagonal in the momentum basis, scalar on the spinor index.

    ``values`` is a callable of k, a flat list of one value per lattice
    momentum (in ``momenta`` order), or a table of (k, value) pairs that is
    linearly interpolated. Such operators commute with the free Hamiltonian.
    """
    k = momenta(cfg)
    if callable(values):
        v = np.asarray([float(values(kk)) for kk in k])
    else:
        pts = np.asarray(values, dtype=float)
        if pts.ndim == 1:
            if pts.shape[0] != cfg.sites:
                raise ConfigError(
                    f"momentum table needs {cfg.sites} values, got {pts.shape[0]}")
            v = pts
        else:
            v = np.interp(k, pts[:, 0], pts[:, 1])
    f = _plane_wave_matrix(cfg)
    a = np.einsum("jn,n,ln->jl", f, v.astype(complex), f.conj(), optimize=True)
    return np.kron(a, np.eye(SPINOR_DIM))


def _positive_modes(cfg: LatticeConfig) -> tuple[EigenSystem, np.ndarray]:
    sys = EigenSystem.of(build_dirac_h0(cfg), cfg.spacing)
    pos = np.where(sys.values > 0.0)[0]
    return sys, pos


def eigenmode_coupling(cfg: LatticeConfig, first: int, second: int) -> np.ndarray:
    """Hermitian hop between two positive-branch free modes.

    Modes are indexed by energy order within the positive part of the
    spectrum. The operator vanishes outside the two-mode subspace, so a
    state prepared there stays there under the free motion and under any
    channel built from this operator.
    """
    sys, pos = _positive_modes(cfg)
    if first == second:
        raise ConfigError("eigenmode coupling needs two distinct modes")
    for idx in (first, second):
        if not (0 <= idx < pos.size):
            raise ConfigError(
                f"eigenmode index {idx} outside the {pos.size} positive modes")
    v1, v2 = sys.state(pos[first]), sys.state(pos[second])
    return cfg.spacing * (np.outer(v1, v2.conj()) + np.outer(v2, v1.conj()))


def eigenmode_difference(cfg: LatticeConfig, first: int, second: int) -> np.ndarray:
    """Projector difference P_first - P_second of two positive-branch modes.

    Eigenvalues are +1 on the first mode, -1 on the second, 0 elsewhere,
    which makes it the natural two-branch pointer observable.
    """
    sys, pos = _positive_modes(cfg)
    if first == second:
        raise ConfigError("eigenmode difference needs two distinct modes")
    for idx in (first, second):
        if not (0 <= idx < pos.size):
            raise ConfigError(
                f"eigenmode index {idx} outside the {pos.size} positive modes")
    v1, v2 = sys.state(pos[first]), sys.state(pos[second])
    return cfg.spacing * (np.outer(v1, v1.conj()) - np.outer(v2, v2.conj()))


@dataclass(frozen=True)
class InteractionChannel:
    """One interaction channel: spatial operator, kernel, amplitude."""

    label: str
    spatial_op: np.ndarray
    profile: KernelProfile
    amplitude: float
    mixing: np.ndarray | None = None  # field-space weights after a covariance rotation

    def __post_init__(self) -> None:
        a = np.asarray(self.spatial_op, dtype=complex)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise DimensionMismatch(f"spatial operator has shape {a.shape}")
        dev = np.linalg.norm(a - a.conj().T, np.inf)
        if dev > 1e-12 * max(np.linalg.norm(a, np.inf), 1.0):
            raise ConfigError(f"channel {self.label!r}: spatial operator not hermitian")
        nrm = np.linalg.norm(a, 2)
        if abs(nrm - 1.0) > 1e-10:
            raise ConfigError(
                f"channel {self.label!r}: spatial operator norm {nrm:.6f} != 1; "
                "absorb the scale into the amplitude"
            )
        if self.amplitude < 0.0:
            raise ConfigError("channel amplitude must be nonnegative")
        a.setflags(write=False)
        object.__setattr__(self, "spatial_op", a)

    @property
    def dim(self) -> int:
        return self.spatial_op.shape[0]


def make_channel(label: str, spatial_op: np.ndarray, profile: KernelProfile,
                 amplitude: float) -> InteractionChannel:
    """Build a channel, absorbing the operator's spectral norm into the amplitude."""
    a = np.asarray(spatial_op, dtype=complex)
    a = 0.5 * (a + a.conj().T)
    nrm = np.linalg.norm(a, 2)
    if nrm == 0.0:
        raise ConfigError(f"channel {label!r}: zero spatial operator")
    return InteractionChannel(label, a / nrm, profile, amplitude * nrm)


@dataclass(frozen=True)
class Covariance:
    """Real symmetric positive semi-definite coupling between channel fields."""

    matrix: np.ndarray

    def __post_init__(self) -> None:
        c = np.asarray(self.matrix, dtype=float)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise DimensionMismatch(f"covariance has shape {c.shape}")
        if np.linalg.norm(c - c.T, np.inf) > 1e-12 * max(np.linalg.norm(c, np.inf), 1.0):
            raise ConfigError("covariance must be symmetric")
        c.setflags(write=False)
        object.__setattr__(self, "matrix", c)


def diagonalize_covariance(cov: Covariance, channels: list[InteractionChannel],
                           rank_tol: float = 1e-12) -> list[InteractionChannel]:
    """Rotate correlated channel fields to independent unit-variance fields.

    Eigenvectors of the covariance mix the spatial operators (all channels
    must share one kernel profile); sqrt-eigenvalues are absorbed into the
    amplitudes. Channels on eigenvalues below ``rank_tol`` (relative) are
    dropped. Raises NotPSD on a negative eigenvalue beyond tolerance.
    """
    c = cov.matrix
    n = len(channels)
    if c.shape[0] != n:
        raise DimensionMismatch(f"covariance rank {c.shape[0]} vs {n} channels")
    prof = channels[0].profile
    if any(ch.profile != prof for ch in channels):
        raise ConfigError("covariance coupling requires a shared kernel profile")
    vals, vecs = np.linalg.eigh(c)
    scale = max(abs(vals).max(), 1.0)
    if vals.min() < -1e-10 * scale:
        raise NotPSD(f"covariance eigenvalue {vals.min():.3e} below zero")
    # descending so the dominant field comes first
    order = np.argsort(vals)[::-1]
    if np.allclose(c, np.eye(n), atol=1e-14):
        order = np.arange(n)  # identity: keep the caller's channel order
    out: list[InteractionChannel] = []
    for k in order:
        mu = max(float(vals[k]), 0.0)
        if mu <= rank_tol * scale:
            continue
        weights = np.sqrt(mu) * vecs[:, k]
        raw = sum(
            w * ch.amplitude * ch.spatial_op for w, ch in zip(weights, channels)
        )
        nrm = np.linalg.norm(raw, 2)
        if nrm <= rank_tol:
            continue
        label = "+".join(ch.label for ch in channels) + f"#{len(out)}"
        out.append(
            InteractionChannel(
                label=label,
                spatial_op=raw / nrm,
                profile=prof,
                amplitude=nrm,
                mixing=weights,
            )
        )
    return out


@dataclass
class NoiseRealization:
    """One realization of the channel fields on its own time grid.

    White realizations store windowed samples of variance 1/h per node
    (h the noise-grid spacing, half the evolution step by default) and are
    looked up by nearest node, which is exact for all midpoints that arise.
    Smooth probes store a cubic spline per channel and an amplitude;
    both kinds return zero outside the simulated interval.
    """

    seed: int
    t0: float
    t1: float
    h: float
    kind: str  # 'white' | 'smooth'
    samples: np.ndarray | None = None  # (n_channels, n_nodes), windowed
    splines: list | None = None
    window: Window = field(default_factory=Window.flat)
    n_channels: int = 0

    @property
    def n_nodes(self) -> int:
        return int(round((self.t1 - self.t0) / self.h)) + 1

    def table(self, t0: float, h: float, n: int) -> np.ndarray:
        """Field values on an external uniform grid, zero outside [t0, t1].

        For white realizations the external grid must subsample the noise
        grid exactly; smooth probes evaluate the spline anywhere.
        """
        times = t0 + h * np.arange(n)
        out = np.zeros((self.n_channels, n))
        if self.kind == "white":
            q = (times - self.t0) / self.h
            qi = np.rint(q).astype(int)
            if np.abs(q - qi).max() > 1e-6:
                raise ConfigError("external grid is not aligned with the noise grid")
            ok = (qi >= 0) & (qi < self.samples.shape[1])
            out[:, ok] = self.samples[:, qi[ok]]
        else:
            ok = (times >= self.t0 - 1e-12) & (times <= self.t1 + 1e-12)
            w = np.asarray(self.window(times[ok]), dtype=float)
            for a, spl in enumerate(self.splines):
                out[a, ok] = spl(times[ok]) * w
        return out

    def value(self, channel: int, t) -> np.ndarray:
        """Field value(s) of one channel at arbitrary times."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.zeros_like(t)
        ok = (t >= self.t0 - 1e-12) & (t <= self.t1 + 1e-12)
        if self.kind == "white":
            qi = np.clip(np.rint((t[ok] - self.t0) / self.h).astype(int), 0,
                         self.samples.shape[1] - 1)
            out[ok] = self.samples[channel, qi]
        else:
            w = np.asarray(self.window(t[ok]), dtype=float)
            out[ok] = self.splines[channel](t[ok]) * w
        return out if out.shape != (1,) else out[0]


def sample_noise(channels: list[InteractionChannel], grid: TimeGrid, seed: int,
                 window: Window | None = None, refine: int = 2) -> NoiseRealization:
    """Draw one white-noise realization for every channel.

    Samples are i.i.d. normal with variance 1/h at spacing h = dt/refine
    (refine=2 puts all evolution-node midpoints on the noise grid), then
    multiplied by the window. The evolution step must resolve the shortest
    kernel: dt <= ell_min/8, else GridTooCoarse.
    """
    ell = min(ch.profile.ell_min for ch in channels)
    if grid.dt > ell / 8.0 + 1e-12:
        raise GridTooCoarse(f"dt={grid.dt} exceeds ell_min/8={ell / 8.0}")
    if window is None:
        window = Window.flat()
    h = grid.dt / refine
    n = grid.steps * refine + 1
    rng = np.random.default_rng(seed)
    samples = rng.standard_normal((len(channels), n)) / math.sqrt(h)
    times = grid.t0 + h * np.arange(n)
    samples = samples * np.asarray(window(times), dtype=float)[None, :]
    return NoiseRealization(
        seed=seed, t0=grid.t0, t1=grid.t1, h=h, kind="white",
        samples=samples, window=window, n_channels=len(channels),
    )


def sample_smooth_probe(channels: list[InteractionChannel], grid: TimeGrid,
                        seed: int, window: Window | None = None,
                        scale: float | None = None,
                        amplitude: float = 1.0) -> NoiseRealization:
    """Band-limited probe field: cubic spline through coarse i.i.d. samples.

    The path is a deterministic function of (seed, scale, channel count)
    alone, so refining the evolution grid leaves the field fixed; this is
    the field used by finite-difference and dt-refinement checks. Samples
    have standard deviation ``amplitude`` at spacing ``scale``
    (default: the shortest kernel range).
    """
    if window is None:
        window = Window.flat()
    if scale is None:
        scale = min(ch.profile.ell_min for ch in channels)
    rng = np.random.default_rng(seed)
    lo = grid.t0 - 2.0 * scale
    n = int(math.ceil((grid.t1 + 2.0 * scale - lo) / scale)) + 1
    knots = lo + scale * np.arange(n)
    vals = amplitude * rng.standard_normal((len(channels), n))
    splines = [CubicSpline(knots, vals[a], bc_type="natural")
               for a in range(len(channels))]
    return NoiseRealization(
        seed=seed, t0=grid.t0, t1=grid.t1, h=grid.dt / 2.0, kind="smooth",
        splines=splines, window=window, n_channels=len(channels),
    )


def sample_fourier_probe(channels: list[InteractionChannel], grid: TimeGrid,
                         seed: int, window: Window | None = None,
                         modes: int = 4, amplitude: float = 1.0) -> NoiseRealization:
    """Analytic probe field: a few random-phase sinusoids per channel.

    Wavelengths stay at or above twice the shortest kernel range, so the
    field varies on the physical scale while remaining infinitely smooth
    between window joins. Checks that extrapolate in the step size need
    this smoothness; the spline probe is only piecewise cubic. The path
    depends on (seed, modes, channel count) alone, never on the grid.
    """
    if window is None:
        window = Window.flat()
    ell = min(ch.profile.ell_min for ch in channels)
    rng = np.random.default_rng(seed)
    omegas = rng.uniform(0.25 * math.pi / ell, math.pi / ell,
                         (len(channels), modes))
    phases = rng.uniform(0.0, 2.0 * math.pi, (len(channels), modes))
    amp = amplitude * math.sqrt(2.0 / modes)

    def path(om, ph):
        return lambda t: amp * np.cos(np.multiply.outer(
            np.asarray(t, dtype=float), om) + ph).sum(axis=-1)

    return NoiseRealization(
        seed=seed, t0=grid.t0, t1=grid.t1, h=grid.dt / 2.0, kind="smooth",
        splines=[path(omegas[a], phases[a]) for a in range(len(channels))],
        window=window, n_channels=len(channels),
    )


def interaction_kernel(t: float, s: float, channels: list[InteractionChannel],
                       noise: NoiseRealization) -> np.ndarray:
    """The two-time interaction operator V(t, s) for one realization.

    Hermitian for every pair and symmetric under (t, s) exchange because the
    field enters at the midpoint and the kernel is even. Zero whenever
    |t - s| exceeds every channel's kernel range or the midpoint lies
    outside the simulated field interval.
    """
    d = channels[0].dim
    v = np.zeros((d, d), dtype=complex)
    mid = 0.5 * (t + s)
    for a, ch in enumerate(channels):
        lz = float(ch.profile.value(t - s))
        if lz == 0.0:
            continue
        w = float(noise.value(a, mid))
        if w == 0.0:
            continue
        v += ch.amplitude * w * lz * ch.spatial_op
    return v


@dataclass(frozen=True)
class ChannelOperatorSet:
    """Stacks M_a(z) on the difference grid, raw and symmetrized.

    ``asymmetry`` records max_z |M_a(z) - M_a(-z)| / 2 per channel, the
    operator-level cost of enforcing evenness when [A_a, h0] != 0.
    """

    zeta: np.ndarray
    dt: float
    raw: np.ndarray  # (n_channels, n_zeta, D, D)
    sym: np.ndarray
    asymmetry: np.ndarray
    channels: tuple[InteractionChannel, ...]

    @property
    def half_width(self) -> int:
        return (self.zeta.size - 1) // 2

    def stack(self, which: str = "sym") -> np.ndarray:
        if which == "sym":
            return self.sym
        if which == "raw":
            return self.raw
        raise ValueError(f"unknown channel-operator stack {which!r}")


def build_channel_operators(channels: list[InteractionChannel], h0,
                            dt: float) -> ChannelOperatorSet:
    """Evaluate the channel-operator stacks on the difference grid of step dt."""
    ell = max(ch.profile.ell_min for ch in channels)
    if dt > min(ch.profile.ell_min for ch in channels) / 8.0 + 1e-12:
        raise GridTooCoarse(f"dt={dt} exceeds ell_min/8")
    k = int(round(ell / dt))
    zeta = dt * np.arange(-k, k + 1)
    free = FreePropagator(_as_matrix(h0))
    d = channels[0].dim
    raw = np.zeros((len(channels), zeta.size, d, d), dtype=complex)
    for a, ch in enumerate(channels):
        lz = ch.profile.value(zeta)
        for i, z in enumerate(zeta):
            if lz[i] == 0.0:
                continue
            ep = free.matrix(-z)  # e^{+i z h0}
            raw[a, i] = 0.5 * ch.amplitude * lz[i] * (
                ch.spatial_op @ ep + ep.conj().T @ ch.spatial_op
            )
    sym = 0.5 * (raw + raw[:, ::-1])
    asym = np.max(
        np.abs(raw - sym).reshape(len(channels), -1), axis=1
    )
    for a, ch in enumerate(channels):
        if asym[a] > 1e-13:
            log.info("channel %s: evenness symmetrization changes M by %.3e",
                     ch.label, asym[a])
    return ChannelOperatorSet(
        zeta=zeta, dt=dt, raw=raw, sym=sym, asymmetry=asym,
        channels=tuple(channels),
    )


def linearized_interaction(opset: ChannelOperatorSet, noise: NoiseRealization,
                           t: float, which: str = "sym") -> np.ndarray:
    """The transformed interaction at leading order, directly from the stacks:

        sum_a integral dz M_a(z) w_a(t - z/2).

    Hermitian by construction. This is the operator the master-equation
    derivation linearizes in the field; the ensemble path evaluates the same
    contraction in batched form.
    """
    stack = opset.stack(which)
    mids = t - 0.5 * opset.zeta
    out = np.zeros(stack.shape[-2:], dtype=complex)
    for a in range(stack.shape[0]):
        w = np.asarray(noise.value(a, mids), dtype=float)
        out += opset.dt * np.tensordot(w, stack[a], axes=(0, 0))
    return out
