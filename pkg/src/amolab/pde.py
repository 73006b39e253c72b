"""Upwind / forward-Euler simulation of the layered temperature models.

The basin is the unit interval with N intervals; temperatures live on the
N+1 nodes x_k = k/N with the antisymmetric boundary coupling
T_i[N] = -T_i[0] (a signal leaving the western boundary re-enters at the
east with flipped sign).  Three variants share the stepper:

* ``two_layer``   -- advection plus linear damping alpha,
* ``extended``    -- two layers plus background-overturning linear terms,
* ``three_layer`` -- advective coupling into a diffusive third layer, with
  explicit diffusion kappa_s in all layers instead of the damping.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .params import ModelCoeffs, PhysicalParams, derive_wave_structure

VARIANTS = ("two_layer", "three_layer", "extended")


class StabilityError(RuntimeError):
    """Raised when the explicit scheme leaves its stability region."""


@dataclass(frozen=True)
class Grid:
    """Uniform space-time grid.  dx = 1/N basin widths, dt in years."""

    N: int
    dt: float

    def __post_init__(self):
        if self.N < 4:
            raise ValueError(f"need at least 4 intervals, got N={self.N}")
        if self.dt <= 0.0:
            raise ValueError(f"dt must be positive, got {self.dt}")

    @property
    def dx(self) -> float:
        return 1.0 / self.N

    def cfl_bound(self, coeffs: ModelCoeffs, variant: str = "two_layer") -> float:
        """Largest stable time step for the explicit upwind scheme."""
        ws = derive_wave_structure(coeffs)
        bound = self.dx / ws.l_plus
        if variant == "three_layer" and coeffs.kappa_s > 0.0:
            bound = min(bound, self.dx**2 / (2.0 * coeffs.kappa_s))
        return bound

    def check_cfl(self, coeffs: ModelCoeffs, variant: str = "two_layer") -> None:
        bound = self.cfl_bound(coeffs, variant)
        if self.dt > bound * (1.0 + 1e-12):
            raise StabilityError(
                f"dt={self.dt:g} violates the CFL bound dt <= {bound:g} "
                f"(dx={self.dx:g}, variant={variant})"
            )


@dataclass
class FieldState:
    """Nodal temperature profiles at one instant.

    Arrays have length N+1; the last node mirrors the first with a sign
    flip and is kept consistent by every operation.
    """

    t: float
    T1: np.ndarray
    T2: np.ndarray
    T3: np.ndarray | None = None

    @property
    def N(self) -> int:
        return len(self.T1) - 1

    def layers(self):
        if self.T3 is None:
            return (self.T1, self.T2)
        return (self.T1, self.T2, self.T3)

    def copy(self) -> "FieldState":
        return FieldState(self.t, self.T1.copy(), self.T2.copy(),
                          None if self.T3 is None else self.T3.copy())


def _close_boundary(arr: np.ndarray) -> None:
    arr[-1] = -arr[0]


def init_gaussian(grid: Grid, center: float = 0.5, width: float = 0.05,
                  amplitude: float = 1.0, layer: int = 1,
                  three_layer: bool = False) -> FieldState:
    """Gaussian temperature bump in one layer, zero elsewhere.

    ``layer`` is 1-based.  The boundary coupling is enforced after
    construction by overwriting node N with -node 0.
    """
    if not 0.0 < center < 1.0:
        raise ValueError(f"center must lie inside the basin, got {center}")
    if width <= 0.0:
        raise ValueError(f"width must be positive, got {width}")
    x = np.arange(grid.N + 1) / grid.N
    bump = amplitude * np.exp(-((x - center) ** 2) / (2.0 * width**2))
    nlayers = 3 if three_layer else 2
    if not 1 <= layer <= nlayers:
        raise ValueError(f"layer must be in 1..{nlayers}, got {layer}")
    arrays = [np.zeros(grid.N + 1) for _ in range(nlayers)]
    arrays[layer - 1] = bump
    for a in arrays:
        _close_boundary(a)
    if three_layer:
        return FieldState(0.0, arrays[0], arrays[1], arrays[2])
    return FieldState(0.0, arrays[0], arrays[1])


def _step_arrays(T, coeffs: ModelCoeffs, grid: Grid, variant: str):
    """One forward-Euler update on a tuple of nodal arrays (allocates)."""
    N, dt = grid.N, grid.dt
    rN = dt * N  # dt/dx
    out = []
    if variant in ("two_layer", "extended"):
        T1, T2 = T
        d1 = T1[1:] - T1[:-1]
        d2 = T2[1:] - T2[:-1]
        damp1 = coeffs.alpha * T1[:-1]
        damp2 = coeffs.alpha * T2[:-1]
        if variant == "extended":
            damp1 = damp1 + coeffs.beta1 * T1[:-1] + coeffs.beta2 * T2[:-1]
            damp2 = damp2 + coeffs.beta3 * T2[:-1]
        n1 = np.empty_like(T1)
        n2 = np.empty_like(T2)
        n1[:-1] = T1[:-1] + rN * (coeffs.a1 * d1 + coeffs.b1 * d2) - dt * damp1
        n2[:-1] = T2[:-1] + rN * (coeffs.a2 * d1 + coeffs.b2 * d2) - dt * damp2
        _close_boundary(n1)
        _close_boundary(n2)
        out = [n1, n2]
    elif variant == "three_layer":
        T1, T2, T3 = T
        d1 = T1[1:] - T1[:-1]
        d2 = T2[1:] - T2[:-1]
        d3 = T3[1:] - T3[:-1]
        # second difference with the antisymmetric wraparound on both sides
        nu = dt * coeffs.kappa_s * N * N
        lap = []
        for A in (T1, T2, T3):
            left = np.concatenate(([-A[N - 1]], A[: N - 1]))
            lap.append(A[1:] - 2.0 * A[:-1] + left)
        n1 = np.empty_like(T1)
        n2 = np.empty_like(T2)
        n3 = np.empty_like(T3)
        n1[:-1] = T1[:-1] + rN * (coeffs.a1 * d1 + coeffs.b1 * d2 + coeffs.c1 * d3) + nu * lap[0]
        n2[:-1] = T2[:-1] + rN * (coeffs.a2 * d1 + coeffs.b2 * d2 + coeffs.c2 * d3) + nu * lap[1]
        n3[:-1] = T3[:-1] + nu * lap[2]
        _close_boundary(n1)
        _close_boundary(n2)
        _close_boundary(n3)
        out = [n1, n2, n3]
    else:
        raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    return out


def step(state: FieldState, coeffs: ModelCoeffs, grid: Grid,
         variant: str = "two_layer") -> FieldState:
    """Advance one forward-Euler step.

    Raises
    ------
    StabilityError
        If the CFL bound is violated or the update produced non-finite
        values.
    """
    grid.check_cfl(coeffs, variant)
    if variant == "three_layer" and state.T3 is None:
        raise ValueError("three_layer stepping needs a state with a T3 layer")
    arrays = _step_arrays(state.layers(), coeffs, grid, variant)
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise StabilityError(
                f"non-finite values after step at t={state.t:g}; the scheme is "
                f"stable only for dt <= {grid.cfl_bound(coeffs, variant):g}"
            )
    if len(arrays) == 3:
        return FieldState(state.t + grid.dt, arrays[0], arrays[1], arrays[2])
    return FieldState(state.t + grid.dt, arrays[0], arrays[1])


@dataclass
class Trajectory:
    """Probe time series of a simulation (values at one node)."""

    t: np.ndarray
    T1: np.ndarray
    T2: np.ndarray
    T3: np.ndarray | None = None
    dT1dx: np.ndarray | None = None
    dT2dx: np.ndarray | None = None
    probe: int = 0
    fields: list = field(default_factory=list)

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0]) if len(self.t) > 1 else 0.0


def _probe_gradient(arr: np.ndarray, p: int, N: int) -> float:
    """Centered x-derivative at node p with the wraparound sign flips."""
    right = arr[p + 1] if p + 1 <= N else -arr[1]
    left = arr[p - 1] if p - 1 >= 0 else -arr[N - 1]
    return 0.5 * N * (right - left)


def simulate(state0: FieldState, coeffs: ModelCoeffs, grid: Grid,
             variant: str = "two_layer", t_end: float = 100.0,
             sample_every: int = 1, probe: int = 0,
             record_gradients: bool = False,
             field_every: int | None = None) -> Trajectory:
    """Run the model and record (T1, T2) at a probe node.

    Parameters
    ----------
    sample_every : int
        Keep every k-th step in the returned series (the initial state is
        always the first sample).
    probe : int
        Node index of the probe, default the western boundary.
    record_gradients : bool
        Also record centered x-derivatives of T1, T2 at the probe, for the
        overturning diagnostics.
    field_every : int, optional
        Additionally store full field snapshots every so many steps.
    """
    if t_end < 0.0:
        raise ValueError("t_end must be nonnegative")
    grid.check_cfl(coeffs, variant)
    if variant == "three_layer" and state0.T3 is None:
        raise ValueError("three_layer simulation needs a state with a T3 layer")
    if not 0 <= probe <= grid.N:
        raise ValueError(f"probe node {probe} outside 0..{grid.N}")

    nsteps = int(round(t_end / grid.dt))
    arrays = [a.copy() for a in state0.layers()]
    nsample = nsteps // sample_every + 1
    times = np.empty(nsample)
    series = [np.empty(nsample) for _ in arrays]
    grads = [np.empty(nsample), np.empty(nsample)] if record_gradients else None
    snapshots = []

    def _record(i, k):
        times[i] = state0.t + k * grid.dt
        for s, a in zip(series, arrays):
            s[i] = a[probe]
        if grads is not None:
            grads[0][i] = _probe_gradient(arrays[0], probe, grid.N)
            grads[1][i] = _probe_gradient(arrays[1], probe, grid.N)

    _record(0, 0)
    if field_every is not None:
        snapshots.append(FieldState(state0.t, *[a.copy() for a in arrays]))
    isample = 1
    for k in range(1, nsteps + 1):
        arrays = _step_arrays(arrays, coeffs, grid, variant)
        if k % sample_every == 0:
            if not all(math.isfinite(a[probe]) for a in arrays):
                raise StabilityError(
                    f"non-finite probe value at t={state0.t + k * grid.dt:g}; "
                    f"stable only for dt <= {grid.cfl_bound(coeffs, variant):g}"
                )
            _record(isample, k)
            isample += 1
        if field_every is not None and k % field_every == 0:
            snapshots.append(FieldState(state0.t + k * grid.dt,
                                        *[a.copy() for a in arrays]))

    traj = Trajectory(
        t=times[:isample], T1=series[0][:isample], T2=series[1][:isample],
        T3=series[2][:isample] if len(series) == 3 else None,
        dT1dx=grads[0][:isample] if grads else None,
        dT2dx=grads[1][:isample] if grads else None,
        probe=probe, fields=snapshots,
    )
    return traj


def build_system_matrix(coeffs: ModelCoeffs, N: int, variant: str = "two_layer",
                        projected_out=()) -> np.ndarray:
    """Dense generator M of the discretized model, d/dt T = M T.

    The state vector interleaves layers per node:
    (T1^0, T2^0, ..., T1^{N-1}, T2^{N-1}), with the third layer appended to
    each node triple for the three-layer variant.  ``projected_out`` lists
    flat state indices whose rows and columns are removed (the orthogonal
    dynamics generator of a projection).
    """
    if variant == "two_layer":
        A = coeffs.advection_matrix
        damp = coeffs.alpha * np.eye(2)
        ncomp = 2
    elif variant == "extended":
        A = coeffs.advection_matrix
        damp = np.array([[coeffs.alpha + coeffs.beta1, coeffs.beta2],
                         [0.0, coeffs.alpha + coeffs.beta3]])
        ncomp = 2
    elif variant == "three_layer":
        A = np.array([[coeffs.a1, coeffs.b1, coeffs.c1],
                      [coeffs.a2, coeffs.b2, coeffs.c2],
                      [0.0, 0.0, 0.0]])
        damp = np.zeros((3, 3))
        ncomp = 3
    else:
        raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")

    dim = ncomp * N
    M = np.zeros((dim, dim))
    up = N * A  # A/dx
    diag = -up - damp
    for n in range(N):
        sl = slice(ncomp * n, ncomp * (n + 1))
        M[sl, sl] += diag
        if n + 1 < N:
            M[sl, ncomp * (n + 1):ncomp * (n + 2)] += up
        else:
            M[sl, 0:ncomp] += -up  # wraparound with the sign flip

    if variant == "three_layer" and coeffs.kappa_s != 0.0:
        nu = coeffs.kappa_s * N * N
        I3 = np.eye(3)
        for n in range(N):
            sl = slice(3 * n, 3 * (n + 1))
            M[sl, sl] += -2.0 * nu * I3
            if n + 1 < N:
                M[sl, 3 * (n + 1):3 * (n + 2)] += nu * I3
            else:
                M[sl, 0:3] += -nu * I3
            if n - 1 >= 0:
                M[sl, 3 * (n - 1):3 * n] += nu * I3
            else:
                M[sl, 3 * (N - 1):3 * N] += -nu * I3

    idx = sorted(set(int(i) for i in projected_out))
    if idx:
        if idx[0] < 0 or idx[-1] >= dim:
            raise ValueError(f"projected_out indices out of range 0..{dim - 1}: {idx}")
        keep = np.setdiff1d(np.arange(dim), idx)
        M = M[np.ix_(keep, keep)]
    return M


def flatten_state(state: FieldState) -> np.ndarray:
    """Interleave the nodal values 0..N-1 to match build_system_matrix."""
    return np.column_stack([a[:-1] for a in state.layers()]).ravel()


@dataclass
class OverturningSeries:
    """Overturning-circulation proxies derived from a probe trajectory.

    dv_dz is the vertical shear of the meridional flow (1/s), proportional
    to the zonal temperature gradient through thermal wind balance with
    constant k_meridional = alpha_T*g/(f*W) per K.  dzu_x is its
    x-derivative companion -(beta/f)*dv_dz, and dz_u the zonal shear
    itself, -(beta*alpha_T*g/f^2)*T with constant k_zonal per K (the
    x-integral of dzu_x with zero mean).
    """

    t: np.ndarray
    dv_dz: np.ndarray
    dzu_x: np.ndarray
    dz_u: np.ndarray
    k_meridional: float
    k_zonal: float


def overturning_diagnostics(traj: Trajectory, p: PhysicalParams) -> OverturningSeries:
    """Meridional/zonal overturning proxies from a gradient-recording run."""
    if traj.dT1dx is None:
        raise ValueError("trajectory lacks probe gradients; rerun simulate "
                         "with record_gradients=True")
    k_meridional = p.alpha_T * p.g / (p.f * p.W)
    k_zonal = p.beta * p.alpha_T * p.g / p.f**2
    dv_dz = k_meridional * traj.dT1dx
    return OverturningSeries(
        t=traj.t,
        dv_dz=dv_dz,
        dzu_x=-(p.beta / p.f) * dv_dz,
        dz_u=-k_zonal * traj.T1,
        k_meridional=k_meridional,
        k_zonal=k_zonal,
    )


def exact_solution(coeffs: ModelCoeffs, ic_T1, ic_T2, alpha: float | None = None):
    """Analytic two-layer solution by integration along characteristics.

    ``ic_T1`` and ``ic_T2`` are callables on [0, 1] giving the initial
    profiles.  Returns ``sol(x, t) -> (T1, T2)`` accepting scalars or
    arrays (broadcast together).  Serves as an independent reference for
    the upwind scheme: both wave components translate with their own speed
    through the antiperiodic extension of the initial data and decay with
    the damping.
    """
    ws = derive_wave_structure(coeffs)
    a = coeffs.alpha if alpha is None else alpha
    tpinv = ws.T_P_inv
    tp = ws.T_P

    def _xi0(y, row):
        y = np.asarray(y, dtype=float)
        k = np.floor(y)
        frac = y - k
        sign = np.where(np.mod(k, 2) == 0, 1.0, -1.0)
        return sign * (tpinv[row, 0] * np.asarray(ic_T1(frac))
                       + tpinv[row, 1] * np.asarray(ic_T2(frac)))

    def sol(x, t):
        x = np.asarray(x, dtype=float)
        t = np.asarray(t, dtype=float)
        decay = np.exp(-a * t)
        xi_slow = _xi0(x + ws.l_minus * t, 0) * decay
        xi_fast = _xi0(x + ws.l_plus * t, 1) * decay
        T1 = tp[0, 0] * xi_slow + tp[0, 1] * xi_fast
        T2 = tp[1, 0] * xi_slow + tp[1, 1] * xi_fast
        return T1, T2

    return sol


def write_trajectory_csv(traj: Trajectory, path) -> None:
    """CSV export with header t,T1,T2 (years, K, K)."""
    cols = [traj.t, traj.T1, traj.T2]
    header = "t,T1,T2"
    if traj.T3 is not None:
        cols.append(traj.T3)
        header += ",T3"
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for row in zip(*cols):
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def write_field_csv(state: FieldState, path) -> None:
    """CSV export of one snapshot with header x,T1,T2[,T3]."""
    N = state.N
    x = np.arange(N + 1) / N
    cols = [x] + list(state.layers())
    header = "x,T1,T2" + (",T3" if state.T3 is not None else "")
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for row in zip(*cols):
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
