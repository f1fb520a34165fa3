"""Nonlocal-in-time Schrodinger dynamics in the equal-time formalism.

The dynamical equation couples the state to itself across a strip of width
ell_min in time,

    i d/dt psi(t) = h0 psi(t) + integral V(t, t') psi(t') dt',

which is solved as a fixed point of the Duhamel form: free propagation plus
the interaction integral, iterated until the update is below tolerance. The
state is extended by free evolution outside the grid, so kernels reaching
past the boundary see a consistent continuation; runs whose field does not
vanish near the boundary get a warning, since there the continuation is an
approximation rather than an identity.

The interval [t0, t1] maps to nodes 0..n-1. All propagator bookkeeping is
relative to the initial node: X_j sends psi(t0) to psi(t_j), and two-time
maps are X_q X_i^{-1}. The fixed-point sweep marches forward using already
updated nodes for the past (Gauss-Seidel), so only the genuinely noncausal
strip of width ell_min carries the previous iterate and the residual decays
geometrically at a rate set by the coupling, not by the interval length.

On top of the solved record this module builds the equal-time objects: the
one-time interaction operator, the surface correction that makes the
two-time inner product conserved, the related direct strip-sum form of that
product, and the similarity transformation to the picture in which the
dynamics is generated by a single (nearly Hermitian) operator.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .channels import InteractionChannel, NoiseRealization
from .errors import NoConvergence, OutOfGrid
from .grids import TimeGrid
from .lattice import FreePropagator, StateVector, _as_matrix, _as_vector, inv_sqrtmh, sqrtmh

log = logging.getLogger(__name__)

COUPLING_WARN = 0.2
COUPLING_ERROR = 0.5

# finite-difference stencils for d/dt at the center node, by accuracy order
_FD_STENCILS = {
    2: ((-1, 1), (-0.5, 0.5)),
    4: ((-2, -1, 1, 2), (1.0 / 12.0, -2.0 / 3.0, 2.0 / 3.0, -1.0 / 12.0)),
}


@dataclass
class EvolutionRecord:
    """Converged solve on one grid for one field realization.

    ``states`` holds psi(t_j) when an initial state was given; ``props``
    holds the maps X_j from t0 to t_j (with free-extension pads of width
    ``reach`` on both sides) when the solve tracked propagators. The
    interaction term g_j = W(t_j) psi(t_j) comes out of the solve for free.
    """

    grid: TimeGrid
    channels: tuple[InteractionChannel, ...]
    noise: NoiseRealization
    h0: np.ndarray
    spacing: float
    reach: int
    residuals: list[float]
    states: np.ndarray | None = None
    interaction_terms: np.ndarray | None = None
    props: np.ndarray | None = None  # padded: index j + reach
    _free: FreePropagator | None = field(default=None, repr=False)
    _coeffs: np.ndarray | None = field(default=None, repr=False)

    @property
    def free(self) -> FreePropagator:
        if self._free is None:
            self._free = FreePropagator(self.h0)
        return self._free

    def state(self, i: int) -> np.ndarray:
        if self.states is None:
            raise OutOfGrid("record has no state trajectory")
        return self.states[i]

    def propagator(self, j: int) -> np.ndarray:
        """X_j for j in [-reach, n-1+reach], free-extended past the ends."""
        if self.props is None:
            raise OutOfGrid("record was solved without propagators")
        return self.props[j + self.reach]

    def trajectory(self, psi0: np.ndarray) -> np.ndarray:
        """States X_j psi0 on the interior nodes for an arbitrary start."""
        if self.props is None:
            raise OutOfGrid("record was solved without propagators")
        interior = self.props[self.reach : self.reach + self.grid.n_nodes]
        return np.einsum("jab,b->ja", interior, _as_vector(psi0))

    def local_propagators(self, i: int) -> np.ndarray:
        """Relative maps Y_q = X_q X_i^{-1} for q = i-reach .. i+reach."""
        if self.props is None:
            raise OutOfGrid("record was solved without propagators")
        if not (0 <= i < self.grid.n_nodes):
            raise OutOfGrid(f"node {i} outside the grid")
        xi = self.props[i + self.reach]
        window = self.props[i : i + 2 * self.reach + 1]
        # Y_q = X_q X_i^{-1}  <=>  Y_q^T = solve(X_i^T, X_q^T)
        return np.linalg.solve(xi.T[None], window.transpose(0, 2, 1)).transpose(0, 2, 1)


def _coefficient_table(channels, noise: NoiseRealization, grid: TimeGrid,
                       reach: int) -> np.ndarray:
    """c[a, j, d] = amplitude_a * L_a(d dt) * field_a(midpoint(j, j+d)) * dt.

    Midpoints (t_j + t_{j+d})/2 sit on the half-step grid at index 2j + d;
    indices beyond the simulated interval contribute zero.
    """
    n = grid.n_nodes
    dt = grid.dt
    half = noise.table(grid.t0, 0.5 * dt, 2 * (n - 1) + 1)
    pad = np.zeros((half.shape[0], half.shape[1] + 2 * reach))
    pad[:, reach:-reach] = half
    d = np.arange(-reach, reach + 1)
    gather = 2 * np.arange(n)[:, None] + d[None, :] + reach
    coeffs = np.empty((len(channels), n, 2 * reach + 1))
    for a, ch in enumerate(channels):
        lz = ch.profile.value(d * dt)
        coeffs[a] = dt * ch.amplitude * lz[None, :] * pad[a][gather]
    return coeffs


def _check_regime(channels, noise: NoiseRealization, grid: TimeGrid) -> None:
    strength = max(ch.amplitude * ch.profile.ell_min for ch in channels)
    if strength > COUPLING_ERROR:
        raise NoConvergence(
            f"coupling strength lambda*ell = {strength:.3f} beyond the "
            f"fixed-point regime (> {COUPLING_ERROR})"
        )
    if strength > COUPLING_WARN:
        warnings.warn(
            f"coupling strength lambda*ell = {strength:.3f} above "
            f"{COUPLING_WARN}; convergence will be slow", stacklevel=3)
    ell = max(ch.profile.ell_min for ch in channels)
    strip = noise.table(grid.t0, grid.dt, grid.n_nodes)
    k = max(int(round(ell / grid.dt)), 1)
    edge = max(np.abs(strip[:, : k + 1]).max(), np.abs(strip[:, -k - 1 :]).max())
    if edge > 1e-12:
        warnings.warn(
            "field is active within one kernel range of the grid boundary; "
            "the free continuation beyond the grid is approximate there",
            stacklevel=3)


def solve_nonlocal(psi0, grid: TimeGrid, channels: list[InteractionChannel],
                   noise: NoiseRealization, h0, spacing: float,
                   tol: float = 1e-10, max_iter: int = 50,
                   propagators: bool = False) -> EvolutionRecord:
    """Fixed-point solve of the nonlocal equation on the grid.

    Returns a record with the state trajectory (and the propagator stack
    when ``propagators`` is set; pass ``psi0=None`` with propagators to
    solve for the maps alone). Raises NoConvergence if the update never
    drops below ``tol`` within ``max_iter`` sweeps.
    """
    channels = list(channels)
    h0m = _as_matrix(h0)
    dim = h0m.shape[0]
    _check_regime(channels, noise, grid)

    dt = grid.dt
    n = grid.n_nodes
    ell = max(ch.profile.ell_min for ch in channels)
    reach = int(round(ell / dt))
    coeffs = _coefficient_table(channels, noise, grid, reach)
    ops = np.stack([ch.spatial_op for ch in channels])

    free = FreePropagator(h0m)
    e_dt = free.matrix(dt)

    matrix_mode = propagators or psi0 is None
    if matrix_mode:
        x0 = np.eye(dim, dtype=complex)
        shape_tail = (dim, dim)
    else:
        x0 = np.asarray(_as_vector(psi0), dtype=complex)
        shape_tail = (dim,)

    total = n + 2 * reach
    x = np.empty((total,) + shape_tail, dtype=complex)
    # left pad: exact free evolution backwards from the initial node
    for m in range(1, reach + 1):
        x[reach - m] = free.matrix(-m * dt) @ x0 if matrix_mode else free.apply(-m * dt, x0)
    x[reach] = x0
    # first iterate: free evolution forward
    for j in range(1, n + reach):
        x[reach + j] = e_dt @ x[reach + j - 1]

    def interaction_at(j: int) -> np.ndarray:
        window = x[j : j + 2 * reach + 1]
        out = np.zeros(shape_tail, dtype=complex)
        for a in range(len(channels)):
            mix = np.tensordot(coeffs[a, j], window, axes=(0, 0))
            out += ops[a] @ mix
        return out

    residuals: list[float] = []
    for _ in range(max_iter):
        x_old = x.copy()
        g_here = interaction_at(0)
        for j in range(n - 1):
            g_next = interaction_at(j + 1)  # node j+1 still holds the old iterate
            x[reach + j + 1] = e_dt @ x[reach + j] - 0.5j * dt * (e_dt @ g_here + g_next)
            # refresh the diagonal term of g at j+1 with the updated node
            delta = x[reach + j + 1] - x_old[reach + j + 1]
            for a in range(len(channels)):
                g_next = g_next + coeffs[a, j + 1, reach] * (ops[a] @ delta)
            g_here = g_next
        for m in range(1, reach + 1):
            x[reach + n - 1 + m] = (
                free.matrix(m * dt) @ x[reach + n - 1]
                if matrix_mode else free.apply(m * dt, x[reach + n - 1])
            )
        resid = float(np.abs(x - x_old).max())
        residuals.append(resid)
        if resid <= tol:
            break
    else:
        raise NoConvergence(
            f"fixed point not reached: residual {residuals[-1]:.3e} "
            f"after {max_iter} sweeps (tol {tol:.0e})"
        )

    record = EvolutionRecord(
        grid=grid, channels=tuple(channels), noise=noise, h0=h0m,
        spacing=spacing, reach=reach, residuals=residuals,
        _free=free, _coeffs=coeffs,
    )
    interior = slice(reach, reach + n)
    if matrix_mode:
        record.props = x
        if psi0 is not None:
            v = np.asarray(_as_vector(psi0), dtype=complex)
            record.states = np.einsum("jab,b->ja", x[interior], v)
    else:
        record.states = x[interior]
    if record.states is not None:
        g = np.empty_like(record.states)
        # interaction term on the converged trajectory, per node
        for j in range(n):
            window = (
                np.einsum("qab,b->qa", x[j : j + 2 * reach + 1],
                          np.asarray(_as_vector(psi0), dtype=complex))
                if matrix_mode else x[j : j + 2 * reach + 1]
            )
            out = np.zeros(dim, dtype=complex)
            for a in range(len(channels)):
                out += ops[a] @ np.tensordot(coeffs[a, j], window, axes=(0, 0))
            g[j] = out
        record.interaction_terms = g
    return record


def equal_time_hamiltonian(record: EvolutionRecord, i: int) -> np.ndarray:
    """The one-time interaction operator at node i:

        W(t_i) = integral V(t_i, t') U^{t'}_{t_i} dt'.

    Generally non-Hermitian; its anti-Hermitian part is what the surface
    correction compensates.
    """
    y = record.local_propagators(i)
    coeffs = record._coeffs
    if coeffs is None:
        raise OutOfGrid("record is missing its coefficient table")
    out = np.zeros((record.h0.shape[0],) * 2, dtype=complex)
    for a, ch in enumerate(record.channels):
        mix = np.tensordot(coeffs[a, i], y, axes=(0, 0))
        out += ch.spatial_op @ mix
    return out


def equal_time_hamiltonian_first_order(record: EvolutionRecord, i: int) -> np.ndarray:
    """Same contraction with free two-time maps; differs at second order."""
    dt = record.grid.dt
    reach = record.reach
    free = record.free
    y = np.stack([free.matrix(d * dt) for d in range(-reach, reach + 1)])
    coeffs = record._coeffs
    out = np.zeros((record.h0.shape[0],) * 2, dtype=complex)
    for a, ch in enumerate(record.channels):
        mix = np.tensordot(coeffs[a, i], y, axes=(0, 0))
        out += ch.spatial_op @ mix
    return out


def _quadrant_coeffs(record: EvolutionRecord, i: int) -> np.ndarray:
    """c[a, p, q] over the past x future quadrant around node i.

    p runs over i-reach..i, q over i..i+reach (both inclusive); trapezoid
    weights give the shared corner p = q = i a quarter weight. The kernel
    vanishes on the outer edges so only the inner boundary needs halving.
    """
    reach = record.reach
    dt = record.grid.dt
    n = record.grid.n_nodes
    p = np.arange(i - reach, i + 1)
    q = np.arange(i, i + reach + 1)
    # half-grid field index for the midpoint of (t_p, t_q) is p + q
    half = record.noise.table(record.grid.t0, 0.5 * dt, 2 * (n - 1) + 1)
    nh = half.shape[1]
    sidx = p[:, None] + q[None, :]
    valid = (sidx >= 0) & (sidx < nh)
    wp = np.full(p.size, dt)
    wp[-1] = 0.5 * dt
    wq = np.full(q.size, dt)
    wq[0] = 0.5 * dt
    diff = (p[:, None] - q[None, :]) * dt
    out = np.empty((len(record.channels), p.size, q.size))
    for a, ch in enumerate(record.channels):
        w = np.where(valid, half[a][np.clip(sidx, 0, nh - 1)], 0.0)
        out[a] = ch.amplitude * ch.profile.value(diff) * w * wp[:, None] * wq[None, :]
    return out


def surface_correction(record: EvolutionRecord, i: int) -> np.ndarray:
    """The Hermitian operator S_t whose addition to the identity makes the
    two-time product conserved along the flow.

    Assembled as i(Q - Q^dag) with Q the past-future quadrant integral of
    (U^tau_t)^dag V(tau, tau') U^tau'_t; hermiticity is exact by
    construction. Vanishes when the field is off throughout the strip
    [t - ell, t + ell].
    """
    reach = record.reach
    y = record.local_propagators(i)
    past = y[: reach + 1]
    future = y[reach:]
    c = _quadrant_coeffs(record, i)
    q = np.zeros((record.h0.shape[0],) * 2, dtype=complex)
    for a, ch in enumerate(record.channels):
        q += np.einsum(
            "pq,pba,bc,qcd->ad",
            c[a], past.conj(), ch.spatial_op, future, optimize=True,
        )
    return 1j * (q - q.conj().T)


def conserved_inner(record: EvolutionRecord, i: int, phi, psi) -> complex:
    """The conserved product <phi|psi>_t = (phi, (1 + S_t) psi) at node i."""
    s = surface_correction(record, i)
    a = _as_vector(phi)
    b = _as_vector(psi)
    return complex(record.spacing * np.vdot(a, b + s @ b))


def conserved_inner_layer_sum(record: EvolutionRecord, i: int,
                              phi_traj: np.ndarray, psi_traj: np.ndarray) -> complex:
    """Same product assembled directly from the two trajectories:

    equal-time L2 term plus i times the past-future strip double sums of
    (phi(tau), V(tau, tau') psi(tau')). Trajectories must cover the interior
    nodes; the strip reach past the grid ends uses the free continuation.
    """
    reach = record.reach
    free = record.free
    dt = record.grid.dt
    n = record.grid.n_nodes

    def ext(traj: np.ndarray, j: int) -> np.ndarray:
        if 0 <= j < n:
            return traj[j]
        if j < 0:
            return free.apply(j * dt, traj[0])
        return free.apply((j - (n - 1)) * dt, traj[n - 1])

    c = _quadrant_coeffs(record, i)
    phis = np.stack([ext(phi_traj, j) for j in range(i - reach, i + 1)])
    psis = np.stack([ext(psi_traj, j) for j in range(i, i + reach + 1)])
    phis_f = np.stack([ext(phi_traj, j) for j in range(i, i + reach + 1)])
    psis_p = np.stack([ext(psi_traj, j) for j in range(i - reach, i + 1)])
    total = complex(np.vdot(ext(phi_traj, i), ext(psi_traj, i)))
    for a, ch in enumerate(record.channels):
        past_future = np.einsum(
            "pq,pa,ab,qb->", c[a], phis.conj(), ch.spatial_op, psis, optimize=True
        )
        future_past = np.einsum(
            "pq,qa,ab,pb->", c[a], phis_f.conj(), ch.spatial_op, psis_p, optimize=True
        )
        total += 1j * (past_future - future_past)
    return complex(record.spacing * total)


def transform_state(psi, surface: np.ndarray, picture: str = "psi_tilde"):
    """Map psi to the transformed picture: psi_tilde = sqrt(1 + S_t) psi."""
    root = sqrtmh(np.eye(surface.shape[0]) + surface)
    v = root @ _as_vector(psi)
    if isinstance(psi, StateVector):
        return StateVector(v, picture=picture)
    return v


def transformed_interaction(record: EvolutionRecord, i: int, mode: str = "exact",
                            fd_order: int = 2) -> np.ndarray:
    """The generator correction in the transformed picture at node i.

    'exact' conjugates h0 + W with sqrt(1 + S_t) and adds the derivative
    term of the root, with d/dt taken by a central difference of the chosen
    accuracy order (2 or 4). 'expansion' is the second-order form

        (W + W^dag)/2 - (1/8) [W - W^dag, S_t],

    Hermitian by construction; the difference from 'exact' is third order
    in the coupling once the finite-difference error is subdominant.
    """
    if mode == "expansion":
        w = equal_time_hamiltonian(record, i)
        s = surface_correction(record, i)
        anti = w - w.conj().T
        return 0.5 * (w + w.conj().T) - 0.125 * (anti @ s - s @ anti)
    if mode != "exact":
        raise ValueError(f"unknown transformed-interaction mode {mode!r}")
    offsets, weights = _FD_STENCILS[fd_order]
    n = record.grid.n_nodes
    if i + min(offsets) < 0 or i + max(offsets) > n - 1:
        raise OutOfGrid(f"node {i} too close to the ends for the {fd_order}-point stencil")
    dim = record.h0.shape[0]
    eye = np.eye(dim)
    s_here = surface_correction(record, i)
    root = sqrtmh(eye + s_here)
    inv_root = inv_sqrtmh(eye + s_here)
    d_inv_root = np.zeros_like(root)
    for off, wgt in zip(offsets, weights):
        s_off = surface_correction(record, i + off)
        d_inv_root = d_inv_root + (wgt / record.grid.dt) * inv_sqrtmh(eye + s_off)
    w = equal_time_hamiltonian(record, i)
    full = root @ (record.h0 + w) @ inv_root - 1j * (root @ d_inv_root)
    return full - record.h0


def step_transformed(psi_tilde: np.ndarray, h0, wtilde: np.ndarray,
                     dt: float) -> np.ndarray:
    """One midpoint-exponential step exp(-i dt (h0 + wtilde)) psi_tilde.

    Uses the Hermitian eigendecomposition when the generator is Hermitian
    to working precision, otherwise scipy's expm.
    """
    gen = _as_matrix(h0) + wtilde
    dev = np.linalg.norm(gen - gen.conj().T, np.inf)
    if dev <= 1e-12 * max(np.linalg.norm(gen, np.inf), 1.0):
        vals, vecs = np.linalg.eigh(0.5 * (gen + gen.conj().T))
        return vecs @ (np.exp(-1j * dt * vals) * (vecs.conj().T @ _as_vector(psi_tilde)))
    from scipy.linalg import expm

    return expm(-1j * dt * gen) @ _as_vector(psi_tilde)


def local_energy(record: EvolutionRecord, i: int) -> tuple[float, float]:
    """Energy <psi|(h0 + W)psi>_t at node i; returns (real part, imag part).

    The imaginary part measures the failure of h0 + W to be symmetric under
    the conserved product at fixed t (it is of the order of the time
    derivative of the surface correction).
    """
    psi = record.state(i)
    hpsi = record.h0 @ psi + record.interaction_terms[i]
    s = surface_correction(record, i)
    val = record.spacing * np.vdot(psi, hpsi + s @ hpsi)
    return float(val.real), float(val.imag)
