"""Frequency-domain and eigenvalue analysis.

Contains the power-spectral-density estimator with peak detection, the
closed-form spectrum of the upwind-discretized model, a dense
nonsymmetric eigensolver (Hessenberg reduction plus shifted QR), the
analytic eigenstructure of the continuous model, Newton root finding for
the transcendental characteristic equations of the delay models, the
asymptotic pseudo-continuous spectrum, and the boundary-condition error
metric used to compare reduced models against the exact eigenfunctions.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np

from .params import ModelCoeffs, WaveStructure, derive_wave_structure


# --------------------------------------------------------------------------
# power spectral density

@dataclass
class SpectrumResult:
    """One-sided PSD with a ranked list of detected peaks."""

    freqs: np.ndarray
    psd: np.ndarray
    peaks: list  # (frequency, power), sorted by descending power

    @property
    def df(self) -> float:
        return float(self.freqs[1] - self.freqs[0])

    def dominant(self) -> tuple[float, float]:
        if not self.peaks:
            raise ValueError("no peaks detected")
        return self.peaks[0]


def _next_pow2(n: int) -> int:
    return 1 << (n - 1).bit_length()


def _segment_psd(x: np.ndarray, dt: float, window: str | None) -> tuple[np.ndarray, np.ndarray]:
    n = len(x)
    x = x - x.mean()
    if window == "hann":
        x = x * np.hanning(n)
    elif window is not None:
        raise ValueError(f"unknown window {window!r}")
    m = _next_pow2(n)
    X = np.fft.rfft(x, n=m)
    fs = 1.0 / dt
    # normalized so that sum(psd)*df equals the mean square of the
    # windowed, demeaned segment (discrete Parseval identity)
    p = np.abs(X) ** 2 / (fs * n)
    p[1:] *= 2.0
    if m % 2 == 0:
        p[-1] /= 2.0
    freqs = np.fft.rfftfreq(m, d=dt)
    return freqs, p


def psd(series: np.ndarray, dt: float, window: str | None = "hann",
        segments: int = 1, t: np.ndarray | None = None,
        peak_threshold: float = 0.05, peak_separation: int = 2) -> SpectrumResult:
    """One-sided power spectral density of a uniformly sampled series.

    The series is demeaned, optionally Hann-windowed, zero-padded to the
    next power of two and transformed; with ``segments > 1`` the series is
    split into that many equal chunks and the chunk periodograms averaged
    (variance reduction for noise-like signals).  Peaks are local maxima
    exceeding ``peak_threshold`` of the global maximum, at least
    ``peak_separation`` bins apart.

    Parameters
    ----------
    series : array
        Sampled values (at least 64).
    dt : float
        Sample spacing (years).
    t : array, optional
        Sample times; if given, checked for uniform spacing.
    """
    series = np.asarray(series, dtype=float)
    if series.ndim != 1:
        raise ValueError("psd expects a one-dimensional series")
    if len(series) < 64:
        raise ValueError(f"need >= 64 samples, got {len(series)}")
    if t is not None:
        steps = np.diff(np.asarray(t, dtype=float))
        if steps.size and (steps.max() - steps.min()) > 1e-9 * abs(steps.mean()):
            raise ValueError("non-uniform sampling")
    if segments < 1:
        raise ValueError("segments must be >= 1")

    if segments == 1:
        freqs, p = _segment_psd(series, dt, window)
    else:
        seg_len = len(series) // segments
        if seg_len < 64:
            raise ValueError("segments too short; need >= 64 samples each")
        acc = None
        for k in range(segments):
            freqs, p = _segment_psd(series[k * seg_len:(k + 1) * seg_len], dt, window)
            acc = p if acc is None else acc + p
        p = acc / segments

    peaks = detect_peaks(freqs, p, threshold=peak_threshold, separation=peak_separation)
    return SpectrumResult(freqs=freqs, psd=p, peaks=peaks)


def detect_peaks(freqs: np.ndarray, power: np.ndarray,
                 threshold: float = 0.05, separation: int = 2) -> list:
    """Local maxima above a fraction of the global maximum, ranked by power."""
    if len(power) < 3:
        return []
    pmax = power.max()
    if pmax <= 0.0:
        return []
    idx = [i for i in range(1, len(power) - 1)
           if power[i] >= power[i - 1] and power[i] > power[i + 1]
           and power[i] >= threshold * pmax]
    idx.sort(key=lambda i: -power[i])
    kept: list[int] = []
    for i in idx:
        if all(abs(i - j) >= separation for j in kept):
            kept.append(i)
    return [(float(freqs[i]), float(power[i])) for i in kept]


def cross_phase_lag(a: np.ndarray, b: np.ndarray, dt: float, freq: float) -> float:
    """Time lag of ``b`` behind ``a`` at one frequency, from the cross spectrum.

    Positive result means ``b(t) ~ a(t - lag)``.  The lag is reported in
    (-P/2, P/2] for period P = 1/freq.
    """
    if len(a) != len(b):
        raise ValueError("series must have equal length")
    n = len(a)
    w = np.hanning(n)
    m = _next_pow2(n)
    A = np.fft.rfft((a - a.mean()) * w, n=m)
    B = np.fft.rfft((b - b.mean()) * w, n=m)
    k = int(round(freq * m * dt))
    k = min(max(k, 1), len(A) - 1)
    phase = np.angle(A[k] * np.conj(B[k]))
    return phase / (2.0 * np.pi * freq)


# --------------------------------------------------------------------------
# eigenvalue sets

@dataclass
class EigenSet:
    """Eigenvalues of one of the model operators (1/years)."""

    values: np.ndarray
    label: str
    residuals: np.ndarray | None = None
    converged: bool = True
    vectors: np.ndarray | None = None  # columns, when available


def discrete_eigen_closed_form(coeffs: ModelCoeffs, N: int, alpha: float | None = None,
                               with_vectors: bool = False) -> EigenSet:
    """Spectrum of the 2N-dimensional upwind discretization, in closed form.

    The sign-flip wraparound admits modes T^n = rho^n v with rho^N = -1,
    so rho_k = exp(i pi (2k+1)/N) and every advection eigenvalue l
    contributes lambda = -alpha + l N (rho_k - 1).  Eigenvectors follow the
    interleaved state layout of ``build_system_matrix``.
    """
    ws = derive_wave_structure(coeffs)
    a = coeffs.alpha if alpha is None else alpha
    k = np.arange(N)
    rho = np.exp(1j * np.pi * (2 * k + 1) / N)
    lam_plus = -a + ws.l_plus * N * (rho - 1.0)
    lam_minus = -a + ws.l_minus * N * (rho - 1.0)
    values = np.concatenate([lam_plus, lam_minus])
    vectors = None
    if with_vectors:
        vectors = np.empty((2 * N, 2 * N), dtype=complex)
        powers = rho[None, :] ** np.arange(N)[:, None]  # (node, k)
        for col, (wslope, offset) in enumerate(((ws.w_plus, 0), (ws.w_minus, N))):
            block = np.empty((2 * N, N), dtype=complex)
            block[0::2, :] = wslope * powers
            block[1::2, :] = powers
            vectors[:, offset:offset + N] = block
    return EigenSet(values=values, label="full_disc", vectors=vectors)


def discrete_mode(coeffs: ModelCoeffs, N: int, k: int, branch: str,
                  alpha: float | None = None):
    """One discrete eigenmode as nodal arrays of length N+1.

    Returns ``(lam, T1, T2)`` with complex node values; the real part is a
    valid initial condition whose probe evolution is exp(lam t) up to the
    conjugate-mode beat.
    """
    ws = derive_wave_structure(coeffs)
    a = coeffs.alpha if alpha is None else alpha
    rho = np.exp(1j * np.pi * (2 * k + 1) / N)
    l, wslope = ((ws.l_plus, ws.w_plus) if branch == "plus"
                 else (ws.l_minus, ws.w_minus))
    lam = -a + l * N * (rho - 1.0)
    nodes = rho ** np.arange(N + 1)
    return lam, wslope * nodes, nodes


# --------------------------------------------------------------------------
# dense nonsymmetric eigensolver

def hessenberg(a: np.ndarray) -> np.ndarray:
    """Householder reduction to upper Hessenberg form (similarity)."""
    H = np.array(a, dtype=complex)
    n = H.shape[0]
    for k in range(n - 2):
        x = H[k + 1:, k]
        normx = np.linalg.norm(x)
        if normx <= 1e-300:
            continue
        v = x.copy()
        phase = x[0] / abs(x[0]) if x[0] != 0 else 1.0
        v[0] += phase * normx
        v /= np.linalg.norm(v)
        H[k + 1:, k:] -= 2.0 * np.outer(v, v.conj() @ H[k + 1:, k:])
        H[:, k + 1:] -= 2.0 * np.outer(H[:, k + 1:] @ v, v.conj())
        H[k + 2:, k] = 0.0
    return H


def _eig2(a, b, c, d):
    tr2 = 0.5 * (a + d)
    disc = cmath.sqrt(0.25 * (a - d) ** 2 + b * c)
    return tr2 + disc, tr2 - disc


def _wilkinson_shift(a, b, c, d):
    e1, e2 = _eig2(a, b, c, d)
    return e1 if abs(e1 - d) <= abs(e2 - d) else e2


def dense_eigensolver(M: np.ndarray, max_iter_per_eig: int = 60) -> EigenSet:
    """Complete spectrum via Hessenberg reduction and shifted QR iteration.

    Works on real or complex square matrices up to dimension 1024.  Each
    returned eigenvalue carries the (normalized) subdiagonal magnitude at
    the moment of deflation as its residual.  If the iteration cap is hit
    the offending eigenvalue is still reported and the result is flagged
    ``converged=False``.
    """
    M = np.asarray(M)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("dense_eigensolver expects a square matrix")
    n = M.shape[0]
    if n > 1024:
        raise ValueError(f"dimension {n} exceeds the supported cap of 1024")
    if n == 0:
        return EigenSet(values=np.array([], dtype=complex), label="dense",
                        residuals=np.array([]))
    anorm = np.linalg.norm(M, "fro")
    if anorm == 0.0:
        return EigenSet(values=np.zeros(n, dtype=complex), label="dense",
                        residuals=np.zeros(n))
    H = hessenberg(M)
    tol = 1e-15

    values: list[complex] = []
    residuals: list[float] = []
    converged = True
    hi = n
    iters = 0

    def _negligible(i):
        return abs(H[i, i - 1]) <= tol * (abs(H[i, i]) + abs(H[i - 1, i - 1]) + anorm * 1e-2)

    while hi > 0:
        if hi == 1:
            values.append(H[0, 0])
            residuals.append(0.0)
            hi = 0
            continue
        if _negligible(hi - 1):
            values.append(H[hi - 1, hi - 1])
            residuals.append(abs(H[hi - 1, hi - 2]) / anorm)
            hi -= 1
            iters = 0
            continue
        if hi == 2 or _negligible(hi - 2):
            # trailing 2x2 block solved directly
            e1, e2 = _eig2(H[hi - 2, hi - 2], H[hi - 2, hi - 1],
                           H[hi - 1, hi - 2], H[hi - 1, hi - 1])
            r = (abs(H[hi - 2, hi - 3]) / anorm) if hi > 2 else 0.0
            values.extend([e1, e2])
            residuals.extend([r, r])
            hi -= 2
            iters = 0
            continue

        # active block H[lo:hi, lo:hi]
        lo = hi - 1
        while lo > 0 and not _negligible(lo):
            lo -= 1
        iters += 1
        if iters > max_iter_per_eig:
            # give up on this eigenvalue but keep going
            converged = False
            values.append(H[hi - 1, hi - 1])
            residuals.append(abs(H[hi - 1, hi - 2]) / anorm)
            H[hi - 1, hi - 2] = 0.0
            hi -= 1
            iters = 0
            continue
        if iters % 12 == 0:
            mu = H[hi - 1, hi - 1] + 0.75 * abs(H[hi - 1, hi - 2])  # exceptional
        else:
            mu = _wilkinson_shift(H[hi - 2, hi - 2], H[hi - 2, hi - 1],
                                  H[hi - 1, hi - 2], H[hi - 1, hi - 1])

        # explicit shifted QR step on the active block via Givens rotations
        m = hi - lo
        Hb = H[lo:hi, lo:hi]
        Hb[np.diag_indices(m)] -= mu
        cs = np.empty(m - 1, dtype=complex)
        sn = np.empty(m - 1, dtype=complex)
        for i in range(m - 1):
            aa, bb = Hb[i, i], Hb[i + 1, i]
            r = math.hypot(abs(aa), abs(bb))
            if r == 0.0:
                c, s = 1.0 + 0j, 0.0 + 0j
            else:
                c, s = aa / r, bb / r
            cs[i], sn[i] = c, s
            row_i = Hb[i, i:].copy()
            row_j = Hb[i + 1, i:]
            Hb[i, i:] = np.conj(c) * row_i + np.conj(s) * row_j
            Hb[i + 1, i:] = -s * row_i + c * row_j
        for i in range(m - 1):
            c, s = cs[i], sn[i]
            col_i = Hb[: i + 2, i].copy()
            col_j = Hb[: i + 2, i + 1]
            Hb[: i + 2, i] = c * col_i + s * col_j
            Hb[: i + 2, i + 1] = -np.conj(s) * col_i + np.conj(c) * col_j
        Hb[np.diag_indices(m)] += mu

    return EigenSet(values=np.array(values), label="dense",
                    residuals=np.array(residuals), converged=converged)


# --------------------------------------------------------------------------
# exact eigenstructure of the continuous model

@dataclass
class EigenfunctionRecord:
    """Eigenvalue and sampled two-component eigenfunction V(x)."""

    lam: complex
    branch: str
    source: str
    _V0: np.ndarray = field(repr=False)
    _ws: WaveStructure = field(repr=False)
    _alpha: float = field(repr=False)

    def sample(self, x) -> np.ndarray:
        """Evaluate V at points x in [0, 1]; shape (2, len(x))."""
        return _propagate_eigenfunction(self._V0, self.lam, self._ws, self._alpha, x)


def _propagate_eigenfunction(V0, lam, ws: WaveStructure, alpha, x):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    xi0 = ws.T_P_inv @ V0
    mu = lam + alpha
    xi = np.empty((2, len(x)), dtype=complex)
    xi[0] = xi0[0] * np.exp(mu * ws.tau_minus * x)  # first column: slow wave
    xi[1] = xi0[1] * np.exp(mu * ws.tau_plus * x)
    return ws.T_P @ xi


def exact_pde_eigen(ws: WaveStructure, alpha: float = 0.0, k_max: int = 4):
    """Analytic eigenvalues and eigenfunctions of the continuous model.

    Each branch contributes lambda_k = -alpha + i pi (2k+1) l for
    k = 0..k_max with eigenfunction V(x) = v exp(i pi (2k+1) x), where v is
    the branch eigenvector; V is normalized to V1(0) = 1.  The boundary
    condition V(0) = -V(1) holds exactly.
    """
    if k_max < 0:
        raise ValueError("k_max must be >= 0")
    values = []
    records = []
    for branch, l, wslope in (("plus", ws.l_plus, ws.w_plus),
                              ("minus", ws.l_minus, ws.w_minus)):
        v = np.array([1.0, 1.0 / wslope], dtype=complex)  # V1(0) = 1
        for k in range(k_max + 1):
            lam = -alpha + 1j * np.pi * (2 * k + 1) * l
            values.append(lam)
            records.append(EigenfunctionRecord(lam=lam, branch=branch,
                                               source="exact", _V0=v,
                                               _ws=ws, _alpha=alpha))
    eig = EigenSet(values=np.array(values), label="exact_pde")
    return eig, records


# --------------------------------------------------------------------------
# characteristic roots of the delay models

def _char_matrix_terms(sys) -> tuple:
    """Split a DelaySystem into the pieces of its characteristic matrix."""
    ws, alpha, eps = sys.ws, sys.alpha, sys.eps
    D1 = math.exp(-alpha * ws.tau_plus) * ws.C1
    D2 = math.exp(-alpha * ws.tau_minus) * ws.C2
    if sys.variant == "dde_moc":
        inst = -np.eye(2)
        return inst, D1, D2, None, None
    if sys.variant == "dde_mz":
        A = np.array([[sys.coeffs.a1, sys.coeffs.b1],
                      [sys.coeffs.a2, sys.coeffs.b2]])
        E1 = math.exp(-alpha * ws.tau_plus) * (A @ ws.C1)
        E2 = math.exp(-alpha * ws.tau_minus) * (A @ ws.C2)
        inst = -A - eps * alpha * np.eye(2)
        gp = _g_coeffs(ws.l_plus, alpha)
        gm = _g_coeffs(ws.l_minus, alpha)
        return inst, E1, E2, gp, gm
    raise ValueError(f"characteristic equation defined for dde variants, "
                     f"not {sys.variant!r}")


def _g_coeffs(l: float, alpha: float) -> tuple[float, float, float]:
    """Coefficients (of T, T', T'') in the first-order delayed correction."""
    tau = 1.0 / l
    half_tau2 = 0.5 * tau * tau
    return (half_tau2 * ((l + alpha) ** 2 - 7.0 / 6.0 * l * l),
            half_tau2 * 2.0 * (l + alpha),
            half_tau2)


def char_matrix(sys, lam: complex) -> np.ndarray:
    """Characteristic matrix of the regularized delay system at lambda."""
    inst, B1, B2, gp, gm = _char_matrix_terms(sys)
    ws, eps = sys.ws, sys.eps
    ep = np.exp(-lam * ws.tau_plus)
    em = np.exp(-lam * ws.tau_minus)
    out = -eps * lam * np.eye(2) + inst.astype(complex)
    if gp is None:
        out += B1 * ep + B2 * em
    else:
        polp = 1.0 + eps * (gp[0] + gp[1] * lam + gp[2] * lam * lam)
        polm = 1.0 + eps * (gm[0] + gm[1] * lam + gm[2] * lam * lam)
        out += B1 * (ep * polp) + B2 * (em * polm)
    return out


def _char_matrix_derivative(sys, lam: complex) -> np.ndarray:
    inst, B1, B2, gp, gm = _char_matrix_terms(sys)
    ws, eps = sys.ws, sys.eps
    ep = np.exp(-lam * ws.tau_plus)
    em = np.exp(-lam * ws.tau_minus)
    out = -eps * np.eye(2, dtype=complex)
    if gp is None:
        out += -ws.tau_plus * B1 * ep - ws.tau_minus * B2 * em
    else:
        polp = 1.0 + eps * (gp[0] + gp[1] * lam + gp[2] * lam * lam)
        polm = 1.0 + eps * (gm[0] + gm[1] * lam + gm[2] * lam * lam)
        dpolp = eps * (gp[1] + 2.0 * gp[2] * lam)
        dpolm = eps * (gm[1] + 2.0 * gm[2] * lam)
        out += B1 * ep * (dpolp - ws.tau_plus * polp)
        out += B2 * em * (dpolm - ws.tau_minus * polm)
    return out


@dataclass
class CharRoots:
    """Converged, deduplicated characteristic roots with residuals."""

    roots: np.ndarray
    residuals: np.ndarray
    failed: list  # guesses that did not converge


def char_roots(sys, guesses, tol: float = 1e-12, max_iter: int = 80,
               dedup: float = 1e-8) -> CharRoots:
    """Newton iteration on det(char_matrix) from a list of initial guesses.

    The determinant derivative uses the adjugate identity
    d det/d lambda = tr(adj(D) D'), exact for the 2x2 blocks here.
    Non-converging guesses are reported in ``failed`` rather than raising.
    """
    roots: list[complex] = []
    residuals: list[float] = []
    failed: list[complex] = []
    for guess in np.atleast_1d(np.asarray(guesses, dtype=complex)):
        lam = complex(guess)
        ok = False
        for _ in range(max_iter):
            D = char_matrix(sys, lam)
            det = D[0, 0] * D[1, 1] - D[0, 1] * D[1, 0]
            Dp = _char_matrix_derivative(sys, lam)
            # tr(adj(D) @ Dp)
            ddet = (D[1, 1] * Dp[0, 0] - D[0, 1] * Dp[1, 0]
                    - D[1, 0] * Dp[0, 1] + D[0, 0] * Dp[1, 1])
            if ddet == 0:
                break
            delta = det / ddet
            lam -= delta
            if abs(delta) < tol * (1.0 + abs(lam)):
                ok = True
                break
        if not ok:
            failed.append(complex(guess))
            continue
        D = char_matrix(sys, lam)
        res = abs(D[0, 0] * D[1, 1] - D[0, 1] * D[1, 0])
        if any(abs(lam - r) < dedup for r in roots):
            continue
        roots.append(lam)
        residuals.append(res)
    return CharRoots(roots=np.array(roots), residuals=np.array(residuals),
                     failed=failed)


def default_root_guesses(ws: WaveStructure, alpha: float, k_max: int = 3) -> np.ndarray:
    """Continuous-model eigenvalues, the natural Newton starting points."""
    out = []
    for l in (ws.l_plus, ws.l_minus):
        for k in range(k_max + 1):
            out.append(-alpha + 1j * np.pi * (2 * k + 1) * l)
    return np.array(out)


# --------------------------------------------------------------------------
# asymptotic pseudo-continuous spectrum

@dataclass
class AsymptoticSpectrum:
    """Eigenvalue curves of the hierarchically-delayed system.

    For each (omega, phi_plus) the 2x2 determinant condition is a
    polynomial in the slow-delay multiplier z; because C2 is a rank-one
    projector its quadratic coefficient det(C2) vanishes and a single
    finite root survives per grid point.  ``re_lambda`` is reconstructed
    from |z| = |exp(-(alpha + lambda) tau_minus)|, i.e.
    Re lambda = -alpha - log|z| / tau_minus.
    """

    omega: np.ndarray
    phi: np.ndarray
    z: np.ndarray          # (len(phi), len(omega)), NaN where degenerate
    re_lambda: np.ndarray  # same shape
    gamma: np.ndarray      # log z - alpha*tau_minus
    degenerate: np.ndarray  # bool mask


def asymptotic_spectrum(ws: WaveStructure, alpha: float, epsilon: float,
                        omega_grid, phi_grid) -> AsymptoticSpectrum:
    """Solve det[-i w I - I + C1 e^{i phi} + C2 z] = 0 over a (w, phi) grid.

    ``epsilon`` fixes how the fast phase maps back to Im lambda
    (Im lambda = omega/epsilon); the curves themselves are
    epsilon-independent.
    """
    if epsilon <= 0.0:
        raise ValueError("epsilon must be positive")
    omega = np.atleast_1d(np.asarray(omega_grid, dtype=float))
    phi = np.atleast_1d(np.asarray(phi_grid, dtype=float))
    if omega.size == 0 or phi.size == 0:
        raise ValueError("omega and phi grids must be non-empty")
    C1, C2 = ws.C1, ws.C2
    z = np.full((len(phi), len(omega)), np.nan, dtype=complex)
    deg = np.zeros((len(phi), len(omega)), dtype=bool)
    c2 = C2[0, 0] * C2[1, 1] - C2[0, 1] * C2[1, 0]  # det C2, zero by rank-1
    for i, ph in enumerate(phi):
        E = C1 * np.exp(1j * ph)
        for j, w in enumerate(omega):
            B = -1j * w * np.eye(2) - np.eye(2) + E
            c0 = B[0, 0] * B[1, 1] - B[0, 1] * B[1, 0]
            c1 = (B[0, 0] * C2[1, 1] + C2[0, 0] * B[1, 1]
                  - B[0, 1] * C2[1, 0] - C2[0, 1] * B[1, 0])
            if abs(c2) > 1e-12 * (abs(c1) + abs(c0) + 1e-300):
                rts = np.roots([c2, c1, c0])
                z[i, j] = rts[np.argmin(np.abs(rts))]
            elif abs(c1) > 1e-14 * (abs(c0) + 1e-300):
                z[i, j] = -c0 / c1
            else:
                deg[i, j] = True
    with np.errstate(divide="ignore", invalid="ignore"):
        log_abs = np.log(np.abs(z))
        gamma = np.log(z.astype(complex)) - alpha * ws.tau_minus
    re_lambda = -alpha - log_abs / ws.tau_minus
    return AsymptoticSpectrum(omega=omega, phi=phi, z=z, re_lambda=re_lambda,
                              gamma=gamma, degenerate=deg)


# --------------------------------------------------------------------------
# eigenfunction boundary-condition error

def eigenfunction_bc_error(lam: complex, ws: WaveStructure, alpha: float,
                           source: str, sys=None, branch: str | None = None,
                           residual_gate: float = 1e-8) -> float:
    """|V1(0) + V1(1)| for the eigenfunction reconstructed at ``lam``.

    The continuous-space characteristic ansatz is evaluated at the model's
    eigenvalue: V(x) = T_P diag(exp((lam+alpha) tau_- x),
    exp((lam+alpha) tau_+ x)) T_P^{-1} V(0), so the metric measures how far
    ``lam`` is from an exact eigenvalue of the continuous model.

    * ``source='exact'`` or ``'disc_pde'``: V(0) is the pure branch
      eigenvector ([w, 1] for the given ``branch``).
    * ``source='moc'`` or ``'mz'``: V(0) is the null vector of the delay
      system's characteristic matrix at ``lam`` (``sys`` required); ``lam``
      must actually be a root (|det| below ``residual_gate``).
    """
    if source in ("exact", "disc_pde"):
        if branch not in ("plus", "minus"):
            raise ValueError(f"source {source!r} needs branch 'plus' or 'minus'")
        wslope = ws.w_plus if branch == "plus" else ws.w_minus
        V0 = np.array([wslope, 1.0], dtype=complex)
    elif source in ("moc", "mz"):
        if sys is None:
            raise ValueError(f"source {source!r} needs the delay system")
        D = char_matrix(sys, lam)
        det = D[0, 0] * D[1, 1] - D[0, 1] * D[1, 0]
        scale = np.abs(D).max()
        if abs(det) > residual_gate * max(scale**2, 1e-300):
            raise ValueError(
                f"lambda={lam:g} is not a characteristic root of the "
                f"{sys.variant} system (|det|={abs(det):.3g})"
            )
        # columns of the adjugate span the null space of a singular 2x2
        adj = np.array([[D[1, 1], -D[0, 1]], [-D[1, 0], D[0, 0]]])
        norms = np.abs(adj).sum(axis=0)
        V0 = adj[:, int(np.argmax(norms))]
        if np.abs(V0).max() <= 1e-300:
            raise ValueError("characteristic matrix vanished; no usable null vector")
    else:
        raise ValueError(f"unknown source {source!r}")

    if abs(V0[0]) <= 1e-300:
        raise ValueError("cannot normalize: V1(0) = 0 for this mode")
    V0 = V0 / V0[0]
    V1 = _propagate_eigenfunction(V0, lam, ws, alpha, np.array([1.0]))[:, 0]
    return float(abs(V0[0] + V1[0]))


def eigenfunction_record(lam: complex, ws: WaveStructure, alpha: float,
                         source: str, sys=None, branch: str | None = None) -> EigenfunctionRecord:
    """Normalized eigenfunction record for plotting/export."""
    if source in ("exact", "disc_pde"):
        if branch not in ("plus", "minus"):
            raise ValueError("need branch 'plus' or 'minus'")
        wslope = ws.w_plus if branch == "plus" else ws.w_minus
        V0 = np.array([wslope, 1.0], dtype=complex)
    else:
        D = char_matrix(sys, lam)
        adj = np.array([[D[1, 1], -D[0, 1]], [-D[1, 0], D[0, 0]]])
        V0 = adj[:, int(np.argmax(np.abs(adj).sum(axis=0)))]
    V0 = V0 / V0[0]
    return EigenfunctionRecord(lam=lam, branch=branch or "", source=source,
                               _V0=V0, _ws=ws, _alpha=alpha)
