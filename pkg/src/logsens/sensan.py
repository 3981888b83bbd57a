"""Error-signal traces, log-sensitivity, and asymptotic divergence analysis.

Given an error signal ``e(t) = c @ expm(A0*t) @ v`` with the uncertain
parameter entering as ``A0 + (xi - xi0)*S``, the log-sensitivity is

    s(xi0, t) = xi0 * (c @ D_S(t, A0) @ v) / e(t).

``classify`` predicts how ``|s|`` diverges as the error decays, from the
modal data alone: linearly (simple or repeated-diagonalizable dominant real
eigenvalue), with periodic unbounded local maxima (dominant complex pair,
possibly sharing the axis with further commensurate modes), or polynomially
(dominant nontrivial Jordan block).  Empirical validation of those
predictions lives in ``fit_slope`` / ``detect_spikes`` /
``fit_polynomial_degree`` and never feeds back into the prediction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm
from scipy.signal import find_peaks

from .matexp import (
    Couplings,
    Spectrum,
    couplings,
    dderiv_diag,
    dderiv_jordan,
    dderiv_oracle_blockaug,
    dderiv_oracle_fd,
    dderiv_oracle_quadrature,
    eig_decompose,
    phi_matrix,
)

__all__ = [
    "ErrorSystem",
    "SensitivityTrace",
    "DivergenceClassification",
    "error_signal",
    "error_derivative",
    "log_sensitivity",
    "trace",
    "classify",
    "spike_schedule",
    "fit_slope",
    "detect_spikes",
    "fit_polynomial_degree",
]

SPIKE_FLOOR_REL = 1e-12
STABILITY_TOL = 1e-9
DERIVATIVE_METHODS = ("analytic", "quadrature", "blockaug", "fd")


@dataclass(frozen=True)
class ErrorSystem:
    """Error signal data: e(t) = c @ expm(A0*t) @ v, parameter direction S.

    ``v`` already folds any reference gain (tracking: v = -k0*beta) or is the
    initial state (free response).  ``xi0`` is the nominal parameter value.
    All eigenvalues of ``A0`` must satisfy Re <= 0 (marginal stability).
    """

    A0: np.ndarray
    S: np.ndarray
    c: np.ndarray
    v: np.ndarray
    xi0: float

    def __post_init__(self):
        A0 = np.asarray(self.A0, dtype=float)
        S = np.asarray(self.S, dtype=float)
        c = np.asarray(self.c, dtype=float).reshape(-1)
        v = np.asarray(self.v, dtype=float).reshape(-1)
        n = A0.shape[0]
        if A0.shape != (n, n) or S.shape != (n, n) or c.size != n or v.size != n:
            raise ValueError("inconsistent dimensions in ErrorSystem")
        lam = np.linalg.eigvals(A0)
        rad = 1.0 + float(np.max(np.abs(lam)))
        if np.max(lam.real) > STABILITY_TOL * rad:
            raise ValueError(
                f"A0 must be marginally stable (max Re eig = {np.max(lam.real):.3e})"
            )
        object.__setattr__(self, "A0", A0)
        object.__setattr__(self, "S", S)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "xi0", float(self.xi0))

    @property
    def n(self) -> int:
        return self.A0.shape[0]

    def spectrum(self, cluster_tol: float = 1e-8) -> Spectrum:
        return eig_decompose(self.A0, cluster_tol)

    def couplings(self, spec: Spectrum, vec=None) -> Couplings:
        """Modal couplings; ``vec`` defaults to v (free response convention)."""
        return couplings(spec, self.S, self.c, self.v if vec is None else vec)


@dataclass(frozen=True)
class SensitivityTrace:
    """Sampled error, parametric derivative and log-sensitivity on a grid.

    ``spike_mask[i]`` is True where ``|error[i]|`` sits below the spike floor
    (1e-12 of the max); there ``logsens[i]`` is NaN rather than +-inf.
    """

    times: np.ndarray
    error: np.ndarray
    derror: np.ndarray
    logsens: np.ndarray
    spike_mask: np.ndarray

    def __len__(self):
        return len(self.times)


@dataclass(frozen=True)
class DivergenceClassification:
    """Predicted asymptotic behavior of |s(xi0, t)|.

    ``kind`` names the asymptotic law.  For the periodic kind the fields
    satisfy period = pi/omega and t0 = (pi + phi01)/(2*omega); when extra
    modes share the dominant axis (spin chains) the reported omega is the
    spike frequency pi/period rather than the modal frequency, which is kept
    in ``constants["omega_modal"]``.
    """

    kind: str
    slope: float | None = None
    sigma: float | None = None
    omega: float | None = None
    phi01: float | None = None
    t0: float | None = None
    period: float | None = None
    degree: int | None = None
    pruned_modes: tuple = ()
    constants: dict = field(default_factory=dict)
    diagnostic: str = ""

    KINDS = ("LinearReal", "LinearRepeatedReal", "PeriodicComplex",
             "PolynomialJordan", "Inconclusive")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown classification kind {self.kind!r}")


def error_signal(sys: ErrorSystem, t: float) -> float:
    """Error at a single time via the spectral path."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    spec = sys.spectrum()
    zt = sys.c @ spec.M
    wt = spec.Minv @ sys.v
    val = np.sum(zt * wt * np.exp(spec.eigenvalues * t))
    return float(val.real)


def error_derivative(sys: ErrorSystem, t: float, method: str = "analytic") -> float:
    """d e(t) / d xi at the nominal parameter, by the selected path."""
    if method == "analytic":
        spec = sys.spectrum()
        D = dderiv_diag(spec, sys.couplings(spec), t)
    elif method == "quadrature":
        D = dderiv_oracle_quadrature(sys.A0, sys.S, t)
    elif method == "blockaug":
        D = dderiv_oracle_blockaug(sys.A0, sys.S, t)
    elif method == "fd":
        D = dderiv_oracle_fd(sys.A0, sys.S, t)
    else:
        raise ValueError(f"unknown method {method!r}")
    return float(sys.c @ D @ sys.v)


def log_sensitivity(sys: ErrorSystem, t: float) -> float:
    """xi0 * (de/dxi) / e at time t; non-finite near zeros of e."""
    e = error_signal(sys, t)
    de = error_derivative(sys, t)
    with np.errstate(divide="ignore", invalid="ignore"):
        return float(sys.xi0 * de / e)


def _phi_tensor(spec: Spectrum, times: np.ndarray) -> np.ndarray:
    """phi_{mn}(t) over a whole grid, shape (n, n, T)."""
    lam = spec.cluster_means()
    E = np.exp(np.outer(lam, times))  # (n, T)
    same = spec.same_cluster_mask()
    den = lam[:, None] - lam[None, :]
    den = np.where(same, 1.0, den)
    num = E[:, None, :] - E[None, :, :]
    phi = num / den[:, :, None]
    rep = times[None, None, :] * E[:, None, :] * np.ones((1, spec.n, 1))
    return np.where(same[:, :, None], rep, phi)


def trace(sys: ErrorSystem, grid, method: str = "analytic",
          spectrum: Spectrum | None = None) -> SensitivityTrace:
    """Sample e, de/dxi and s(xi0, t) on a time grid.

    ``method`` selects the derivative path.  ``spectrum`` overrides the
    computed eigendecomposition; supply a ``Spectrum.from_jordan`` result to
    drive the analytic path on a known-defective generator.
    """
    times = np.asarray(grid, dtype=float).reshape(-1)
    if len(times) == 0:
        z = np.zeros(0)
        return SensitivityTrace(times, z, z.copy(), z.copy(), np.zeros(0, dtype=bool))
    if np.any(times < 0) or np.any(np.diff(times) <= 0):
        raise ValueError("grid must be strictly increasing and nonnegative")
    if method not in DERIVATIVE_METHODS:
        raise ValueError(f"method must be one of {DERIVATIVE_METHODS}")

    if method == "analytic":
        spec = spectrum if spectrum is not None else sys.spectrum()
        if spec.is_defective:
            Sbar = spec.Minv @ sys.S @ spec.M
            error = np.empty(len(times))
            derror = np.empty(len(times))
            zt = sys.c @ spec.M
            wt = spec.Minv @ sys.v
            for i, t in enumerate(times):
                error[i] = _error_jordan(spec, zt, wt, t)
                derror[i] = float(sys.c @ dderiv_jordan(spec, Sbar, t) @ sys.v)
        else:
            if spec.near_defective:
                raise ValueError(
                    "spectrum is near-defective; use method='blockaug', "
                    "'quadrature' or 'fd', or supply Jordan structure"
                )
            coup = sys.couplings(spec)
            E = np.exp(np.outer(spec.eigenvalues, times))
            error = np.real((coup.z * coup.w) @ E)
            W = coup.Sbar * np.outer(coup.z, coup.w)
            phi = _phi_tensor(spec, times)
            derror = np.real(np.einsum("mn,mnt->t", W, phi))
    else:
        error = np.empty(len(times))
        derror = np.empty(len(times))
        oracle = {
            "quadrature": dderiv_oracle_quadrature,
            "blockaug": dderiv_oracle_blockaug,
            "fd": dderiv_oracle_fd,
        }[method]
        for i, t in enumerate(times):
            error[i] = float(sys.c @ expm(sys.A0 * t) @ sys.v)
            derror[i] = float(sys.c @ oracle(sys.A0, sys.S, t) @ sys.v)

    floor = SPIKE_FLOOR_REL * max(np.max(np.abs(error)), 1e-300)
    mask = np.abs(error) <= floor
    logsens = np.full(len(times), np.nan)
    np.divide(sys.xi0 * derror, error, out=logsens, where=~mask)
    return SensitivityTrace(times, error, derror, logsens, mask)


def _error_jordan(spec: Spectrum, zt, wt, t) -> float:
    """e(t) for a spectrum with one nontrivial Jordan block."""
    lam = spec.eigenvalues
    val = np.sum(zt * wt * np.exp(lam * t))
    for start, size in spec.jordan_blocks:
        if size > 1:
            lam1 = lam[start]
            for p in range(start, start + size - 1):
                for q in range(p + 1, start + size):
                    val += zt[p] * wt[q] * np.exp(lam1 * t) * t ** (q - p) / math.factorial(q - p)
    return float(val.real)


def _rational_fundamental(freqs, max_den: int = 64, rtol: float = 1e-9):
    """Fundamental omega0 with every frequency an integer multiple, or None.

    Each ratio to the smallest frequency is replaced by a continued-fraction
    rational approximation with denominator <= max_den; incommensurate sets
    (no approximation within rtol) return None.
    """
    freqs = sorted(freqs)
    base = freqs[0]
    from fractions import Fraction

    dens = []
    nums = []
    for f in freqs:
        r = f / base
        frac = Fraction(r).limit_denominator(max_den)
        if frac.numerator == 0 or abs(float(frac) - r) > rtol * r:
            return None
        nums.append(frac.numerator)
        dens.append(frac.denominator)
    L = 1
    for d in dens:
        L = L * d // math.gcd(L, d)
    # omega0 = base / L * gcd of the integer multipliers
    mult = [n * (L // d) for n, d in zip(nums, dens)]
    g = 0
    for m in mult:
        g = math.gcd(g, m)
    return base * g / L


def _dominant_pair_timing(z1w1, z2w2, omega):
    """First asymptotic |D| minimum and spacing for a lone dominant pair.

    The quadrant convention: phi = arctan(-Im P / Re P) in the first or
    fourth quadrant, shifted by pi when Re P < 0, with P = z1w1 * conj(z2w2)
    and the +i*omega member of the pair listed first.
    """
    P = z1w1 * np.conj(z2w2)
    if P.real > 0:
        phi01 = math.atan(-P.imag / P.real)
    elif P.real < 0:
        phi01 = math.atan(-P.imag / P.real) + np.pi
    else:
        phi01 = np.pi / 2 if -P.imag >= 0 else -np.pi / 2
    t0 = (np.pi + phi01) / (2 * omega)
    return t0, np.pi / omega, phi01, P


def _numeric_minima_timing(zw, omegas, omega0, samples: int = 8192):
    """Recurring deepest minima of |sum zw_m exp(i*omega_m*t)| over one period.

    Used when zero-frequency modes or several commensurate pairs share the
    dominant axis, where the single-pair phase formula does not apply.
    Returns (t0, spacing) or None if the minima do not recur evenly.
    """
    T = 2 * np.pi / omega0
    ts = np.linspace(0.0, T, samples, endpoint=False)
    h = np.abs(np.sum(zw[:, None] * np.exp(1j * np.outer(omegas, ts)), axis=0))
    # local minima with periodic wraparound
    left = np.roll(h, 1)
    right = np.roll(h, -1)
    is_min = (h <= left) & (h <= right) & ((h < left) | (h < right))
    idx = np.nonzero(is_min)[0]
    if len(idx) == 0:
        return None
    depth = h[idx]
    keep = idx[depth <= depth.min() + 1e-6 * (h.max() - depth.min() + 1e-300)]
    # parabolic refinement of each kept minimum
    times = []
    for i in keep:
        y0, y1, y2 = h[(i - 1) % samples], h[i], h[(i + 1) % samples]
        denom = y0 - 2 * y1 + y2
        shift = 0.5 * (y0 - y2) / denom if abs(denom) > 0 else 0.0
        times.append((ts[i] + shift * (T / samples)) % T)
    times = np.sort(np.array(times))
    if len(times) > 1:
        gaps = np.diff(np.concatenate([times, [times[0] + T]]))
        if np.max(gaps) - np.min(gaps) > 1e-3 * T:
            return None
    spacing = T / len(times)
    t0 = times[0] if times[0] > 1e-9 * T else times[0] + spacing
    return t0, spacing


def classify(spec: Spectrum, coup: Couplings, xi0: float,
             prune_tol: float = 1e-10) -> DivergenceClassification:
    """Predict the divergence mode of the log-sensitivity from modal data.

    Modes whose structure couplings all vanish, or whose z_m*w_m product is
    negligible (readout or initial state annihilates them, as for the
    steady-state mode of the open two-qubit system), are pruned before the
    dominant eigenvalue is identified.
    """
    lam = spec.eigenvalues
    n = spec.n

    dom_jordan = [b for b in spec.jordan_blocks if b[0] == 0 and b[1] > 1]
    if dom_jordan:
        return DivergenceClassification(
            kind="PolynomialJordan",
            degree=int(dom_jordan[0][1]),
            sigma=float(max(0.0, -lam[0].real)),
        )

    zw = coup.z * coup.w
    absS = np.abs(coup.Sbar)
    zw_scale = float(np.max(np.abs(zw)))
    s_scale = float(np.max(absS))
    pruned = []
    for m in range(n):
        coupling_m = max(absS[m, :].max(), absS[:, m].max())
        if abs(zw[m]) <= prune_tol * zw_scale or coupling_m <= prune_tol * s_scale:
            pruned.append(m)
    kept = [m for m in range(n) if m not in pruned]
    if not kept:
        return DivergenceClassification(
            kind="Inconclusive", pruned_modes=tuple(pruned),
            diagnostic="all modes pruned",
        )

    rad = 1.0 + float(np.max(np.abs(lam)))
    tol_dom = 1e-8 * rad
    re_max = max(lam[m].real for m in kept)
    dom = [m for m in kept if lam[m].real >= re_max - tol_dom]
    sigma = float(max(0.0, -re_max))
    freqs = sorted({abs(lam[m].imag) for m in dom if abs(lam[m].imag) > tol_dom})

    # Modes the readout/state still weight (zw above tolerance) shape the
    # denominator even when their structure couplings vanish.  One strictly
    # above the kept dominant axis means the error outlives the numerator
    # growth and the log-sensitivity can stay bounded.
    zw_active = [m for m in range(n) if abs(zw[m]) > prune_tol * zw_scale]
    if any(lam[m].real > re_max + tol_dom for m in zw_active):
        return DivergenceClassification(
            kind="Inconclusive", sigma=sigma, pruned_modes=tuple(pruned),
            diagnostic="a structurally uncoupled mode dominates the error "
                       "decay; log-sensitivity need not diverge",
        )
    axis = [m for m in zw_active if lam[m].real >= re_max - tol_dom]
    axis_freqs = sorted({abs(lam[m].imag) for m in axis if abs(lam[m].imag) > tol_dom})

    if not freqs and not axis_freqs:
        # dominant modes are one (possibly repeated, diagonalizable) real eigenvalue
        if len(dom) == 1:
            m = dom[0]
            s11 = complex(coup.Sbar[m, m])
            g0 = complex(0.0)
            for k in kept:
                if k == m:
                    continue
                g0 += coup.z[m] * coup.w[k] * coup.Sbar[m, k] / (lam[m] - lam[k])
                g0 -= coup.z[k] * coup.w[m] * coup.Sbar[k, m] / (lam[k] - lam[m])
            return DivergenceClassification(
                kind="LinearReal",
                slope=float(xi0 * s11.real),
                sigma=sigma,
                pruned_modes=tuple(pruned),
                constants={"sbar_dom": s11.real, "g0": g0,
                           "offset": xi0 * g0 / zw[m]},
            )
        a0 = complex(0.0)
        b0 = complex(0.0)
        for m_i in dom:
            b0 += zw[m_i]
            for n_i in dom:
                a0 += coup.z[m_i] * coup.w[n_i] * coup.Sbar[m_i, n_i]
        if abs(b0) <= prune_tol * max(zw_scale, 1e-300):
            return DivergenceClassification(
                kind="Inconclusive", pruned_modes=tuple(pruned),
                diagnostic="dominant cluster has vanishing denominator weight b0",
            )
        return DivergenceClassification(
            kind="LinearRepeatedReal",
            slope=float(xi0 * (a0 / b0).real),
            sigma=sigma,
            pruned_modes=tuple(pruned),
            constants={"a0": a0, "b0": b0},
        )

    all_freqs = sorted(set(freqs) | set(axis_freqs))
    omega0 = all_freqs[0] if len(all_freqs) == 1 else _rational_fundamental(all_freqs)
    if omega0 is None:
        return DivergenceClassification(
            kind="Inconclusive", sigma=sigma, pruned_modes=tuple(pruned),
            diagnostic="incommensurate dominant frequencies: spike schedule "
                       "prediction unsupported (detection still applies)",
        )

    axis_zero = [m for m in axis if abs(lam[m].imag) <= tol_dom]
    constants = {"omega_modal": float(omega0)}
    if len(axis) == 2 and not axis_zero and len(axis_freqs) == 1:
        plus = [m for m in axis if lam[m].imag > 0][0]
        minus = [m for m in axis if lam[m].imag < 0][0]
        t0, period, phi01, P = _dominant_pair_timing(zw[plus], zw[minus], omega0)
        constants["re_z1w1z2w2"] = float(P.real)
        constants["im_z1w1z2w2"] = float(P.imag)
    else:
        omegas = np.array([lam[m].imag for m in axis])
        timing = _numeric_minima_timing(np.array([zw[m] for m in axis]), omegas, omega0)
        if timing is None:
            return DivergenceClassification(
                kind="Inconclusive", sigma=sigma, pruned_modes=tuple(pruned),
                diagnostic="dominant oscillation has unevenly spaced minima",
            )
        t0, period = timing
        # anchor t0 in (period/4, 5*period/4] so phi01 lands in its
        # (-pi/2, 3*pi/2] range without breaking t0 = (pi+phi01)/(2*omega)
        while t0 <= period / 4:
            t0 += period
        phi01 = 2 * (np.pi / period) * t0 - np.pi
    omega = np.pi / period
    return DivergenceClassification(
        kind="PeriodicComplex",
        sigma=sigma,
        omega=float(omega),
        phi01=float(phi01),
        t0=float(t0),
        period=float(period),
        pruned_modes=tuple(pruned),
        constants=constants,
    )


def spike_schedule(cls: DivergenceClassification, n_max: int) -> np.ndarray:
    """Predicted spike times t0, t0 + period, ... (PeriodicComplex only)."""
    if cls.kind != "PeriodicComplex":
        raise ValueError(f"spike schedule undefined for kind {cls.kind!r}")
    return cls.t0 + cls.period * np.arange(n_max)


def _finite_window(tr: SensitivityTrace, window):
    t0, t1 = window
    sel = (tr.times >= t0) & (tr.times <= t1) & np.isfinite(tr.logsens)
    return tr.times[sel], tr.logsens[sel]


def fit_slope(tr: SensitivityTrace, window) -> float:
    """Least-squares slope of |logsens| against t over a window."""
    t, s = _finite_window(tr, window)
    if len(t) < 10:
        raise ValueError(f"only {len(t)} finite samples in window {window}")
    slope, _ = np.polyfit(t, np.abs(s), 1)
    return float(slope)


def fit_polynomial_degree(tr: SensitivityTrace, window) -> int:
    """Nearest-integer log-log slope of |logsens| against t over a window."""
    t, s = _finite_window(tr, window)
    good = (np.abs(s) > 0) & (t > 0)
    t, s = t[good], s[good]
    if len(t) < 10:
        raise ValueError(f"only {len(t)} usable samples in window {window}")
    slope, _ = np.polyfit(np.log(t), np.log(np.abs(s)), 1)
    return max(0, int(round(slope)))


def detect_spikes(tr: SensitivityTrace, prominence_decades: float = 0.5,
                  error_dip_frac: float = 0.05) -> np.ndarray:
    """Times of local maxima of |logsens| driven by near-zeros of the error.

    Spikes of the log-sensitivity live where the error dips toward zero, so
    candidates come from the error channel: sign changes and tangential local
    minima of |error| below ``error_dip_frac`` of its local scale.  Each
    candidate is then required to tower over the nearby finite |logsens|
    samples by ``prominence_decades`` (automatically satisfied where the
    sample is spike-masked, including exponentially decayed tails where every
    sample sits below the spike floor).  Returned times are interpolated:
    linearly at sign changes, parabolically at tangential minima.
    """
    if len(tr) < 3:
        return np.array([])
    t, e = tr.times, tr.error
    n = len(t)
    abse = np.abs(e)
    win = max(5, int(round(0.02 * n)))

    candidates = []
    sign = np.sign(e)
    flips = np.nonzero(sign[:-1] * sign[1:] < 0)[0]
    for k in flips:
        tstar = t[k] - e[k] * (t[k + 1] - t[k]) / (e[k + 1] - e[k])
        candidates.append((k if abse[k] <= abse[k + 1] else k + 1, float(tstar)))
    # tangential dips (covers masked samples, which are near-zeros of |e|)
    dip = np.nonzero(
        (abse[1:-1] <= abse[:-2]) & (abse[1:-1] <= abse[2:])
        & ((abse[1:-1] < abse[:-2]) | (abse[1:-1] < abse[2:]))
    )[0] + 1
    flip_idx = set(int(k) for k in flips) | set(int(k) + 1 for k in flips)
    for j in dip:
        if j in flip_idx or any(abs(j - k) <= 1 for k, _ in candidates):
            continue
        lo, hi = max(0, j - win), min(n, j + win + 1)
        if abse[j] > error_dip_frac * np.max(abse[lo:hi]):
            continue
        y0, y1, y2 = abse[j - 1], abse[j], abse[j + 1]
        denom = y0 - 2 * y1 + y2
        shift = 0.5 * (y0 - y2) / denom if denom > 0 else 0.0
        shift = min(1.0, max(-1.0, shift))
        candidates.append((j, float(t[j] + shift * (t[j + 1] - t[j]))))

    out = []
    logs = np.abs(tr.logsens)
    for j, tstar in sorted(candidates, key=lambda c: c[1]):
        lo, hi = max(0, j - win), min(n, j + win + 1)
        nearby = logs[max(0, j - 2):j + 3]
        nearby = nearby[np.isfinite(nearby) & (nearby > 0)]
        if len(nearby) == 0:
            out.append(tstar)  # spike-masked neighborhood
            continue
        peak = float(np.max(nearby))
        base = logs[lo:hi]
        base = base[np.isfinite(base) & (base > 0)]
        baseline = float(np.median(base)) if len(base) else 0.0
        if baseline <= 0 or np.log10(peak / baseline) >= prominence_decades:
            out.append(tstar)
    return np.array(out)
