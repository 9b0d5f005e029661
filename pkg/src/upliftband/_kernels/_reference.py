"""Pure-numpy implementation of the hot resampling kernel.

``curve_gains_from_counts`` evaluates top-k gains for pseudo-populations
encoded as multiplicity vectors over the sample members. The compiled
backend mirrors this routine operation-for-operation so both produce
identical floating-point results; keep the accumulation order in sync when
editing either.
"""

from __future__ import annotations

import numpy as np


def curve_gains_from_counts(
    counts: np.ndarray,
    orders: np.ndarray,
    treatment: np.ndarray,
    outcome: np.ndarray,
    ks: np.ndarray,
) -> np.ndarray:
    """Gains at each selection size for every (resample, model) pair.

    counts:    (D, n) int64, copies of each member per pseudo-population;
               selection sizes beyond a row's total come back missing.
    orders:    (S, n) int64, member positions in rank order per model.
    treatment: (n,) int8 arm indicators.
    outcome:   (n,) float64 outcomes.
    ks:        (G,) int64 ascending selection sizes.

    Returns (D, S, G) float64; points with an empty arm are nan.
    """
    counts = np.ascontiguousarray(counts, dtype=np.int64)
    orders = np.atleast_2d(np.asarray(orders, dtype=np.int64))
    treatment = np.asarray(treatment, dtype=np.int8)
    outcome = np.asarray(outcome, dtype=np.float64)
    ks = np.asarray(ks, dtype=np.int64)
    n_resamples, n_members = counts.shape
    n_models = orders.shape[0]
    out = np.empty((n_resamples, n_models, ks.shape[0]), dtype=np.float64)

    for s in range(n_models):
        o = orders[s]
        t = treatment[o] == 1
        y = outcome[o]
        cts = counts[:, o]
        wy = cts * y
        cum = np.cumsum(cts, axis=1)
        cum_nt = np.cumsum(np.where(t, cts, 0), axis=1)
        cum_ty = np.cumsum(np.where(t, wy, 0.0), axis=1)
        cum_nc = np.cumsum(np.where(t, 0, cts), axis=1)
        cum_cy = np.cumsum(np.where(t, 0.0, wy), axis=1)
        for d in range(n_resamples):
            idx = np.searchsorted(cum[d], ks, side="left")
            reachable = idx < n_members  # ks beyond the row total stay missing
            idx = np.minimum(idx, n_members - 1)
            has_prev = idx > 0
            prev = np.where(has_prev, idx - 1, 0)
            base_cum = np.where(has_prev, cum[d][prev], 0)
            base_nt = np.where(has_prev, cum_nt[d][prev], 0)
            base_ty = np.where(has_prev, cum_ty[d][prev], 0.0)
            base_nc = np.where(has_prev, cum_nc[d][prev], 0)
            base_cy = np.where(has_prev, cum_cy[d][prev], 0.0)
            partial = ks - base_cum
            ti = t[idx]
            pyi = partial * y[idx]
            n_t = base_nt + np.where(ti, partial, 0)
            s_t = base_ty + np.where(ti, pyi, 0.0)
            n_c = base_nc + np.where(ti, 0, partial)
            s_c = base_cy + np.where(ti, 0.0, pyi)
            with np.errstate(invalid="ignore", divide="ignore"):
                gain = (s_t / n_t - s_c / n_c) * ks
            gain[(n_t == 0) | (n_c == 0) | ~reachable] = np.nan
            out[d, s] = gain
    return out
