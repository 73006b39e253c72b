"""Delay-difference and regularized delay-differential models.

The reduced dynamics of the basin is a pair of delay relations coupling
(T1, T2) at a probe to their values one fast and one slow basin-crossing
ago.  The ``difference`` variant is pure lookback; the ``dde_moc`` variant
regularizes it with a small eps d/dt term; the ``dde_mz`` variant carries
the memory-reduction form of the same limit together with its first-order
error terms (delayed values, first and second derivatives).  Histories are
uniform-grid buffers with linear interpolation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from .params import ModelCoeffs, WaveStructure, derive_wave_structure
from .pde import FieldState, Grid, Trajectory, simulate
from .mz import LaplaceLimit, laplace_limit

DELAY_VARIANTS = ("difference", "dde_moc", "dde_mz")


class HistoryError(ValueError):
    """Raised when a lookback reaches outside the recorded history."""


class HistoryBuffer:
    """Uniformly sampled (t, T1, T2) record with linear interpolation.

    ``data`` has shape (n, 2); sample j sits at ``t0 + j*dt``.  Queries
    outside the covered span raise HistoryError.  Derivative queries use
    centered differences at the native spacing, interpolated linearly
    between nodes like the values themselves.
    """

    def __init__(self, t0: float, dt: float, data: np.ndarray):
        data = np.asarray(data, dtype=float)
        if data.ndim != 2 or data.shape[1] != 2:
            raise ValueError("history data must have shape (n, 2)")
        if data.shape[0] < 2:
            raise ValueError("need at least two history samples")
        if dt <= 0.0:
            raise ValueError("dt must be positive")
        self.t0 = float(t0)
        self.dt = float(dt)
        self.data = data

    @classmethod
    def from_series(cls, t: np.ndarray, T1: np.ndarray, T2: np.ndarray,
                    spacing: float | None = None, t_final: float | None = None):
        """Resample a (possibly differently spaced) series onto a uniform grid.

        The buffer ends exactly at ``t_final`` (default: the last input
        time) and reaches back as far as the input allows.
        """
        t = np.asarray(t, dtype=float)
        if t_final is None:
            t_final = float(t[-1])
        if spacing is None:
            spacing = float(t[1] - t[0])
        nback = int(math.floor((t_final - float(t[0])) / spacing + 1e-9))
        grid = t_final + spacing * np.arange(-nback, 1)
        data = np.column_stack([np.interp(grid, t, T1), np.interp(grid, t, T2)])
        return cls(grid[0], spacing, data)

    @classmethod
    def from_function(cls, fn, t_start: float, t_end: float, spacing: float):
        """Sample a callable t -> (T1, T2) on a uniform grid.

        Vectorizing callables (accepting an array of times) are evaluated
        in one shot; scalar-only callables are looped over.
        """
        n = int(round((t_end - t_start) / spacing))
        grid = t_start + spacing * np.arange(n + 1)
        try:
            out = fn(grid)
            vals = np.column_stack([np.broadcast_to(np.asarray(c, dtype=float), grid.shape)
                                    for c in out])
            if vals.shape != (n + 1, 2):
                raise ValueError
        except Exception:
            vals = np.array([fn(ti) for ti in grid], dtype=float)
        return cls(grid[0], spacing, vals)

    def __len__(self) -> int:
        return self.data.shape[0]

    @property
    def t_start(self) -> float:
        return self.t0

    @property
    def t_end(self) -> float:
        return self.t0 + (len(self) - 1) * self.dt

    def span(self) -> float:
        return (len(self) - 1) * self.dt

    def _locate(self, t, order: int = 0):
        t = np.asarray(t, dtype=float)
        lo = self.t0 + order * self.dt
        hi = self.t_end - order * self.dt
        eps = 1e-9 * self.dt
        if np.any(t < lo - eps) or np.any(t > hi + eps):
            raise HistoryError(
                f"lookback at t={np.min(t):g}..{np.max(t):g} outside the "
                f"recorded span [{lo:g}, {hi:g}]"
            )
        pos = np.clip((t - self.t0) / self.dt, order, len(self) - 1 - order)
        idx = np.minimum(pos.astype(int), len(self) - 2 - order)
        idx = np.maximum(idx, order)
        frac = pos - idx
        return idx, frac

    def value(self, t):
        """Linearly interpolated (T1, T2); shape (..., 2)."""
        idx, frac = self._locate(t)
        return (1.0 - frac)[..., None] * self.data[idx] + frac[..., None] * self.data[idx + 1]

    def derivative(self, t):
        idx, frac = self._locate(t, order=1)
        d = (self.data[2:] - self.data[:-2]) / (2.0 * self.dt)
        i = idx - 1
        return (1.0 - frac)[..., None] * d[i] + frac[..., None] * d[np.minimum(i + 1, len(d) - 1)]

    def second_derivative(self, t):
        idx, frac = self._locate(t, order=1)
        d2 = (self.data[2:] - 2.0 * self.data[1:-1] + self.data[:-2]) / self.dt**2
        i = idx - 1
        return (1.0 - frac)[..., None] * d2[i] + frac[..., None] * d2[np.minimum(i + 1, len(d2) - 1)]

    def append(self, rows: np.ndarray) -> None:
        rows = np.asarray(rows, dtype=float).reshape(-1, 2)
        self.data = np.vstack([self.data, rows])

    def require_span(self, tau: float) -> None:
        if self.span() < tau - 1e-9 * self.dt:
            raise HistoryError(
                f"history spans {self.span():g} years but {tau:g} are needed"
            )


@dataclass(frozen=True)
class DelaySystem:
    """A delay model: coefficients, damping, variant and regularization."""

    variant: str
    coeffs: ModelCoeffs
    ws: WaveStructure
    alpha: float
    eps: float = 0.0

    def __post_init__(self):
        if self.variant not in DELAY_VARIANTS:
            raise ValueError(f"variant must be one of {DELAY_VARIANTS}")
        if self.variant != "difference" and self.eps <= 0.0:
            raise ValueError("dde variants need eps > 0")

    @classmethod
    def build(cls, coeffs: ModelCoeffs, variant: str = "dde_moc",
              eps: float = 0.0, alpha: float | None = None) -> "DelaySystem":
        return cls(variant=variant, coeffs=coeffs,
                   ws=derive_wave_structure(coeffs),
                   alpha=coeffs.alpha if alpha is None else alpha, eps=eps)

    @property
    def limit(self) -> LaplaceLimit:
        return laplace_limit(self.coeffs)

    def max_history_spacing(self) -> float:
        """Sample-spacing bound for history buffers used with this system."""
        if self.variant == "difference":
            return self.ws.tau_plus / 10.0
        return min(self.ws.tau_plus, self.eps) / 10.0

    def delay_matrices(self):
        """(D1, D2) with the damping decay folded in."""
        D1 = math.exp(-self.alpha * self.ws.tau_plus) * self.ws.C1
        D2 = math.exp(-self.alpha * self.ws.tau_minus) * self.ws.C2
        return D1, D2

    def mz_matrices(self):
        """(inst, E1, E2, g_plus, g_minus) of the memory-limit form."""
        A = self.coeffs.advection_matrix
        lim = self.limit
        inst = -(A + self.eps * self.alpha * np.eye(2))
        return inst, lim.D_plus, lim.D_minus, lim.g_plus, lim.g_minus


def warmup_history(coeffs: ModelCoeffs, grid: Grid, ic: FieldState,
                   probe: int = 0, spacing: float | None = None,
                   duration: float | None = None,
                   variant: str = "two_layer") -> HistoryBuffer:
    """Fill a history buffer from a PDE run at the probe node.

    The simulation runs for at least one slow basin crossing (plus a small
    margin for derivative stencils); the final time becomes t = 0 of the
    buffer, so the delay run continues seamlessly from the PDE state.
    """
    ws = derive_wave_structure(coeffs)
    if spacing is None:
        spacing = grid.dt
    if duration is None:
        duration = ws.tau_minus + 8.0 * spacing
    if duration < ws.tau_minus:
        raise ValueError(f"warmup must cover tau_minus = {ws.tau_minus:g} years")
    nsteps = int(math.ceil(duration / grid.dt))
    traj = simulate(ic, coeffs, grid, variant=variant,
                    t_end=nsteps * grid.dt, probe=probe)
    buf = HistoryBuffer.from_series(traj.t - traj.t[-1], traj.T1, traj.T2,
                                    spacing=spacing, t_final=0.0)
    buf.require_span(ws.tau_minus)
    return buf


def step_difference(h: HistoryBuffer, sys: DelaySystem, t) -> np.ndarray:
    """Evaluate the delay-difference relation at time(s) t from the buffer."""
    D1, D2 = sys.delay_matrices()
    vp = h.value(np.asarray(t) - sys.ws.tau_plus)
    vm = h.value(np.asarray(t) - sys.ws.tau_minus)
    return vp @ D1.T + vm @ D2.T


def difference_trajectory(h0: HistoryBuffer, sys: DelaySystem,
                          t_end: float) -> Trajectory:
    """March the delay-difference system forward on the buffer grid.

    Advances in blocks of at most one fast delay: every point of a block
    depends only on values before the block, so blocks evaluate in one
    vectorized sweep with interpolated slow lookback.  Appends to ``h0``.
    """
    h0.require_span(sys.ws.tau_minus)
    dt = h0.dt
    if dt > sys.max_history_spacing() * (1.0 + 1e-9):
        raise ValueError(
            f"buffer spacing {dt:g} exceeds the resolution bound "
            f"{sys.max_history_spacing():g} for this system"
        )
    n_new = int(round(t_end / dt))
    start = h0.t_end
    block = max(1, int(math.floor(sys.ws.tau_plus / dt)) - 1)
    done = 0
    while done < n_new:
        k = min(block, n_new - done)
        t_blk = start + dt * np.arange(done + 1, done + k + 1)
        h0.append(step_difference(h0, sys, t_blk))
        done += k
    t = start + dt * np.arange(n_new + 1)
    data = h0.data[len(h0) - n_new - 1:]
    return Trajectory(t=t, T1=data[:, 0].copy(), T2=data[:, 1].copy())


def _lagged(data: np.ndarray, jq: int, count: int, k: int, frac: float):
    """Interpolated lookback for the block of steps jq .. jq+count-1.

    Row m is the value at grid position (jq + m) - (k + frac).
    """
    top = jq - k + np.arange(count)
    return (1.0 - frac) * data[top] + frac * data[top - 1]


def _box_smooth(x: np.ndarray, half: int, passes: int = 4) -> np.ndarray:
    """Repeated centered boxcar (width 2*half+1) with edge padding."""
    if half <= 0:
        return x
    w = 2 * half + 1
    y = x
    zero = np.zeros((1, x.shape[1]))
    for _ in range(passes):
        yp = np.pad(y, ((half, half), (0, 0)), mode="edge")
        cs = np.cumsum(yp, axis=0)
        y = (cs[w - 1:] - np.concatenate([zero, cs[:-w]])) / w
    return y


def _lagged_derivatives(data: np.ndarray, jq: int, count: int, k: int,
                        frac: float, h: float, half: int = 0):
    """Centered first/second differences at the lookback positions.

    Node-centered stencils at the two bracketing nodes are blended with
    the same linear weights as the values.  With ``half > 0`` the stencils
    act on a boxcar^4-smoothed copy of the relevant buffer segment; the
    segment is extended by the full smoothing margin so edge effects only
    appear where the buffer itself ends (replicated-edge padding there).
    """
    if half <= 0:
        top = jq - k + np.arange(count)
        seg = data
    else:
        margin = 4 * half
        lo = jq - k - 2 - margin
        hi = jq - k + count + 1 + margin
        lo_c = max(lo, 0)
        seg = data[lo_c:hi]
        if lo_c > lo:
            seg = np.pad(seg, ((lo_c - lo, 0), (0, 0)), mode="edge")
        seg = _box_smooth(seg, half)
        top = (2 + margin) + np.arange(count)
    d_hi = (seg[top + 1] - seg[top - 1]) / (2.0 * h)
    d_lo = (seg[top] - seg[top - 2]) / (2.0 * h)
    s_hi = (seg[top + 1] - 2.0 * seg[top] + seg[top - 1]) / h**2
    s_lo = (seg[top] - 2.0 * seg[top - 1] + seg[top - 2]) / h**2
    return ((1.0 - frac) * d_hi + frac * d_lo,
            (1.0 - frac) * s_hi + frac * s_lo)


def integrate_dde(h0: HistoryBuffer, sys: DelaySystem, t_end: float,
                  step: float | None = None,
                  derivative_smoothing: float | None = None) -> Trajectory:
    """Explicit-Euler integration of the regularized delay system.

    The integration step must equal the buffer spacing (warm the buffer up
    with the intended step) and satisfy the stiffness bound
    step <= eps/5.  The computed trajectory is appended to ``h0`` as it
    advances, extending the usable history.

    Delay lookbacks reduce to constant-offset interpolation on the uniform
    grid, and the one-step recurrence has constant coefficients, so blocks
    of up to one fast delay are advanced with a vectorized linear filter.

    For the memory-limit variant the first-order correction feeds delayed
    curvature estimates back into the evolution.  That term is asymptotic,
    valid on smooth solutions only: fed raw grid-scale differences it makes
    the model ill-posed (characteristic roots with real part growing like
    log(frequency) exist, and roundoff seeds them).  The derivative
    estimates are therefore taken from a low-passed copy of the buffer,
    smoothed over ``derivative_smoothing`` years (default: a quarter of
    the fast delay), which caps the feedback gain while leaving the
    resolved oscillation periods essentially untouched.  Set it to 0 to
    integrate the raw scheme on short horizons.
    """
    if sys.variant not in ("dde_moc", "dde_mz"):
        raise ValueError(f"integrate_dde handles dde variants, not {sys.variant!r}")
    if step is None:
        step = h0.dt
    if abs(step - h0.dt) > 1e-12 * h0.dt:
        raise ValueError(
            f"integration step {step:g} must match the buffer spacing {h0.dt:g}"
        )
    if step > sys.eps / 5.0 * (1.0 + 1e-9):
        raise ValueError(
            f"step {step:g} too large for eps={sys.eps:g}; explicit Euler "
            f"needs step <= eps/5"
        )
    if step > sys.max_history_spacing() * (1.0 + 1e-9):
        raise ValueError(
            f"buffer spacing {step:g} exceeds the resolution bound "
            f"{sys.max_history_spacing():g} for this system"
        )
    h0.require_span(sys.ws.tau_minus + 2.0 * step)

    ws = sys.ws
    h = step
    n_new = int(round(t_end / h))
    kp = int(math.floor(ws.tau_plus / h))
    fp = ws.tau_plus / h - kp
    km = int(math.floor(ws.tau_minus / h))
    fm = ws.tau_minus / h - km

    n0 = len(h0)
    data = np.empty((n0 + n_new, 2))
    data[:n0] = h0.data
    ratio = h / sys.eps

    if sys.variant == "dde_moc":
        D1, D2 = sys.delay_matrices()
        g = 1.0 - ratio
        gains = np.array([g, g])
        basis = None
        D1 = D1.T
        D2 = D2.T
    else:
        inst, E1, E2, gplus, gminus = sys.mz_matrices()
        # one-step matrix I + ratio*inst shares the advection eigenbasis
        basis = ws.T_P
        basis_inv = ws.T_P_inv
        lam = np.array([ws.l_minus, ws.l_plus])  # T_P column order
        gains = 1.0 - ratio * (lam + sys.eps * sys.alpha)
        E1 = E1.T
        E2 = E2.T

    if np.any(np.abs(gains) >= 1.0):
        raise ValueError("unstable one-step gain; reduce the step")
    if kp < 8:
        raise ValueError("step too coarse relative to the fast delay")

    half = 0
    if sys.variant == "dde_mz":
        if derivative_smoothing is None:
            derivative_smoothing = ws.tau_plus / 4.0
        if derivative_smoothing > 0.0:
            # boxcar^4 with total variance matching the requested width
            half = max(1, int(round(derivative_smoothing * math.sqrt(3.0) / (2.0 * h))))
    block_cap = min(kp - 4 * half - 4, 1 << 16)
    if block_cap < 1:
        raise ValueError("smoothing window too wide for the fast delay")
    done = 0
    zi = None
    while done < n_new:
        count = min(block_cap, n_new - done)
        jq = n0 + done      # absolute index of the first produced step
        jd = jq - 1         # the explicit scheme samples the RHS one step back
        lag_p = _lagged(data, jd, count, kp, fp)
        lag_m = _lagged(data, jd, count, km, fm)
        if sys.variant == "dde_moc":
            drive = lag_p @ D1 + lag_m @ D2
        else:
            d1p, d2p = _lagged_derivatives(data, jd, count, kp, fp, h, half)
            d1m, d2m = _lagged_derivatives(data, jd, count, km, fm, h, half)
            gp = gplus[0] * lag_p + gplus[1] * d1p + gplus[2] * d2p
            gm = gminus[0] * lag_m + gminus[1] * d1m + gminus[2] * d2m
            drive = (lag_p + sys.eps * gp) @ E1 + (lag_m + sys.eps * gm) @ E2
            drive = drive @ basis_inv.T  # to the eigenbasis

        if zi is None:
            y_prev = data[n0 - 1] if basis is None else basis_inv @ data[n0 - 1]
            zi = gains * y_prev
        out = np.empty_like(drive)
        for c in range(2):
            out[:, c], zf = lfilter([ratio], [1.0, -gains[c]], drive[:, c],
                                    zi=[zi[c]])
            zi[c] = zf[0]
        if basis is not None:
            out = out @ basis.T
        data[jq:jq + count] = out
        done += count
        if not np.all(np.isfinite(out[-1])):
            raise ValueError(
                f"delay integration diverged near t={h * done:g}; "
                "reduce the step or eps"
            )

    t = h0.t_end + h * np.arange(n_new + 1)
    h0.data = data
    traj_data = data[n0 - 1:]
    return Trajectory(t=t, T1=traj_data[:, 0].copy(), T2=traj_data[:, 1].copy())


def error_terms(h: HistoryBuffer, sys: DelaySystem, t, N: int | None = None,
                smoothing: float = 0.0):
    """First-order error contribution of the delay reduction at time(s) t.

    Evaluates eps*f_eps along the buffered trajectory, the part the
    regularized model adds on top of the pure delay relation: a damping
    carry-over plus delayed (value, slope, curvature) corrections per
    branch.  ``N`` overrides the discretization count (eps = 1/N),
    otherwise the system's eps is used.

    ``smoothing`` (years) optionally low-passes the buffer before the
    derivative stencils are formed; quantifying the error of the smooth
    reduced dynamics requires suppressing grid-scale curvature, which
    would otherwise dominate the second differences.
    """
    eps = (1.0 / N) if N is not None else sys.eps
    if eps <= 0.0:
        raise ValueError("need a positive eps or N")
    lim = sys.limit
    hd = h
    if smoothing > 0.0:
        half = max(1, int(round(smoothing * math.sqrt(3.0) / (2.0 * h.dt))))
        hd = HistoryBuffer(h.t0, h.dt, _box_smooth(h.data, half))
    tarr = np.atleast_1d(np.asarray(t, dtype=float))
    T_now = h.value(tarr)
    tp = tarr - sys.ws.tau_plus
    tm = tarr - sys.ws.tau_minus
    gp = (lim.g_plus[0] * h.value(tp) + lim.g_plus[1] * hd.derivative(tp)
          + lim.g_plus[2] * hd.second_derivative(tp))
    gm = (lim.g_minus[0] * h.value(tm) + lim.g_minus[1] * hd.derivative(tm)
          + lim.g_minus[2] * hd.second_derivative(tm))
    f = -sys.alpha * T_now + gp @ lim.D_plus.T + gm @ lim.D_minus.T
    out = eps * f
    if np.isscalar(t) or np.asarray(t).ndim == 0:
        return float(out[0, 0]), float(out[0, 1])
    return out[:, 0], out[:, 1]
