"""Late-time power-law measurement and Price-law verdicts.

fit_power_law regresses log|phi| on log t over a window (at least a factor
5 wide), with bootstrap-over-subwindows error bars and an oscillatory-tail
gate: windows containing sign changes are shifted past the last crossing
or refused.  Because free-exponent amplitudes are poorly conditioned for
coefficient comparison, every fit also records the amplitude obtained with
the exponent pinned to its theoretical value; verdicts use the pinned one.

price_verdict compares a fit against the predicted late-time coefficient:
exponent within tol_e of (2 for cubic, 3 for quartic and higher), pinned
|amplitude| / |2 * coefficient| inside [1 - tol_a, 1 + tol_a], plus a sign
check of phi * t^exponent against the predicted tail at late times.

profile_check measures the shape of the field near timelike infinity
against the limit profile 2 c0 t^-2 * v/(v+2), v = t_*/r, using interior
probe series.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class OscillatoryTailError(RuntimeError):
    """The series keeps changing sign inside every admissible window."""


class CoverageError(ValueError):
    """Probe coverage is insufficient for the requested check."""


@dataclass
class TailFit:
    probe_r: float
    window: tuple
    exponent: float
    amplitude: float
    exponent_err: float
    amplitude_err: float
    goodness: float
    sign: int
    amplitude_pinned: float = None
    pinned_exponent: float = None
    n_points: int = 0
    shifted: bool = False

    def __post_init__(self):
        if self.window[1] / self.window[0] < 5.0:
            raise ValueError("fit window must span at least a factor of 5")
        if self.exponent_err < 0 or self.amplitude_err < 0:
            raise ValueError("error estimates must be nonnegative")


@dataclass
class Verdict:
    passed: bool
    indeterminate: bool
    exponent_ok: bool
    amplitude_ok: bool
    sign_ok: bool
    ratio: float
    tolerances: dict
    notes: str = ""


@dataclass
class AsymptoticReport:
    """Bundle of everything a tail-verification run produced."""

    run_hash: str
    power: int
    coefficient: float            # c0 (p=3) or d_X (p>=4)
    coefficient_err: float
    coefficient_name: str
    predicted_tail: float         # coefficient of t^-(tail exponent) in phi
    fits: list = field(default_factory=list)
    verdicts: list = field(default_factory=list)
    profile_sup_error: float = None
    cutoff_values: dict = field(default_factory=dict)
    cutoff_spread: float = None
    monitor_ratio: float = None
    height: str = ""
    out_of_hypothesis: bool = False
    extras: dict = field(default_factory=dict)

    def all_passed(self):
        return all(v.passed for v in self.verdicts) if self.verdicts else False


def _auto_window(t, y, window):
    """Shift the window start past the last interior zero crossing."""
    t_a, t_b = window
    sel = (t >= t_a) & (t <= t_b)
    if np.count_nonzero(sel) < 8:
        raise ValueError("window contains too few samples")
    ts, ys = t[sel], y[sel]
    signs = np.sign(ys)
    crossings = np.nonzero(signs[1:] * signs[:-1] < 0)[0]
    zero_vals = np.nonzero(signs == 0)[0]
    shifted = False
    if crossings.size or zero_vals.size:
        last = max(crossings.max() + 1 if crossings.size else 0,
                   zero_vals.max() + 1 if zero_vals.size else 0)
        if last >= ts.size - 8:
            raise OscillatoryTailError(
                f"sign changes persist to the end of the window "
                f"[{t_a:g}, {t_b:g}] (last crossing at t ~ {ts[min(last, ts.size-1)]:g})")
        t_a_new = ts[last]
        if t_b / t_a_new < 5.0:
            raise OscillatoryTailError(
                f"after shifting past the last zero crossing (t ~ {t_a_new:g}) "
                f"the window [{t_a_new:g}, {t_b:g}] is narrower than a factor 5")
        ts, ys = ts[last:], ys[last:]
        shifted = True
    return ts, ys, shifted


def fit_power_law(t, y, window, pinned_exponent=None, n_boot=24, probe_r=0.0):
    """Weighted log-log regression of |y| ~ amplitude * t^-exponent.

    ``window`` = (t_a, t_b) with t_b/t_a >= 5.  Errors are the spread of
    the fit over random subwindows.  When ``pinned_exponent`` is given the
    amplitude with that exponent frozen is recorded as well.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if window[1] / window[0] < 5.0:
        raise ValueError(f"fit window [{window[0]:g}, {window[1]:g}] must "
                         "span at least a factor of 5")
    ts, ys, shifted = _auto_window(t, y, window)
    sign = int(np.sign(np.median(ys)))
    lt = np.log(ts)
    ly = np.log(np.abs(ys))
    slope, inter = np.polyfit(lt, ly, 1)
    pred = slope * lt + inter
    goodness = float(np.sqrt(np.mean((ly - pred) ** 2)))
    rng = np.random.default_rng(1234)
    n = ts.size
    slopes, amps = [], []
    for _ in range(n_boot):
        i0 = rng.integers(0, n // 3)
        i1 = rng.integers(2 * n // 3, n) + 1
        if ts[i1 - 1] / ts[i0] < 3.0:
            continue
        s, a = np.polyfit(lt[i0:i1], ly[i0:i1], 1)
        slopes.append(-s)
        amps.append(math.exp(a))
    exp_err = float(np.std(slopes)) if slopes else 0.0
    amp_err = float(np.std(amps)) if amps else 0.0
    amp_pinned = None
    if pinned_exponent is not None:
        amp_pinned = float(math.exp(np.mean(ly + pinned_exponent * lt)))
    return TailFit(
        probe_r=probe_r, window=(float(ts[0]), float(ts[-1])),
        exponent=float(-slope), amplitude=float(math.exp(inter)),
        exponent_err=exp_err, amplitude_err=amp_err, goodness=goodness,
        sign=sign, amplitude_pinned=amp_pinned,
        pinned_exponent=pinned_exponent, n_points=n, shifted=shifted)


def price_verdict(fit, predicted_coefficient, p, tol_e=0.1, tol_a=0.25):
    """Pass iff the measured tail matches the predicted power and coefficient.

    The theoretical exponent is 2 for p = 3 and 3 for p >= 4; the amplitude
    test uses the pinned-exponent amplitude against |2 * coefficient| and
    checks the sign of the tail against the predicted coefficient.
    """
    theo = 2.0 if p == 3 else 3.0
    if predicted_coefficient == 0.0:
        return Verdict(False, True, False, False, False, math.inf,
                       {"tol_e": tol_e, "tol_a": tol_a},
                       notes="indeterminate: predicted coefficient is zero "
                             "with a measured nonzero amplitude")
    exponent_ok = abs(fit.exponent - theo) <= tol_e
    amp = fit.amplitude_pinned if fit.amplitude_pinned is not None else fit.amplitude
    ratio = amp / abs(2.0 * predicted_coefficient)
    amplitude_ok = (1.0 - tol_a) <= ratio <= (1.0 + tol_a)
    sign_ok = fit.sign == int(np.sign(predicted_coefficient)) or fit.sign == 0
    return Verdict(bool(exponent_ok and amplitude_ok and sign_ok), False,
                   bool(exponent_ok), bool(amplitude_ok), bool(sign_ok),
                   float(ratio), {"tol_e": tol_e, "tol_a": tol_a,
                                  "theoretical_exponent": theo})


def profile_check(traj, c0, t_min=100.0, v_range=(0.5, 5.0)):
    """sup over samples of |phi t^2 / (2 c0) - v/(v+2)|, v = t/r.

    Uses the interior probes of the trajectory; the probes must cover the
    requested v-range for t >= t_min (radii spanning t_min/v_max up to
    t_max/v_min), otherwise CoverageError.
    """
    if c0 == 0.0:
        raise ValueError("c0 must be nonzero for the profile check")
    t = traj.times
    t_max = t[-1]
    v_lo, v_hi = v_range
    covered = np.zeros(0)
    sup_err = 0.0
    n_used = 0
    vs_seen = []
    for p in traj.probes:
        v = t / p.r
        sel = (t >= t_min) & (v >= v_lo) & (v <= v_hi)
        if not np.any(sel):
            continue
        model = v[sel] / (v[sel] + 2.0)
        scaled = p.phi[sel] * t[sel] ** 2 / (2.0 * c0)
        sup_err = max(sup_err, float(np.max(np.abs(scaled - model))))
        n_used += int(np.count_nonzero(sel))
        vs_seen.append((v[sel].min(), v[sel].max()))
    if n_used < 20 or not vs_seen:
        raise CoverageError(
            f"probes cover too little of v in [{v_lo}, {v_hi}] at t >= {t_min}; "
            f"radii from ~{t_min / v_hi:.3g} to ~{t_max / v_lo:.3g} are needed")
    lo = min(a for a, _ in vs_seen)
    hi = max(b for _, b in vs_seen)
    if lo > v_lo * 1.5 or hi < v_hi / 1.5:
        raise CoverageError(
            f"probe radii only reach v in [{lo:.2g}, {hi:.2g}], "
            f"requested [{v_lo}, {v_hi}]")
    return sup_err
