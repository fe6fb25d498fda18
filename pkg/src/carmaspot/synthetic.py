"""Synthetic spot and futures markets with known parameters.

Spot S(t) = Lambda(t) + Z(t) + Y(t) on the mode's day index, with Z a NIG Levy
process (one increment per index unit) and Y a stable CARMA process.  Monthly
futures are priced exactly from the true Z(t) and X(t) under the given
measure change.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .carma import CarmaParams, simulate_carma
from .market import MarketData, day_index
from .nig import NigParams, esscher_shift_nig, nig_mean, sample_nig, zero_mean_location
from .pricing import MeasureChange, _Spectral, carma_swap_term, gamma_q
from .seasonality import SeasonalityParams, seasonal_average
from .stable import StableParams, tempered_mean_shift

__all__ = [
    "SyntheticTruth",
    "SyntheticMarket",
    "monthly_contracts",
    "generate_synthetic_market",
    "default_truth",
    "truth_to_dict",
    "truth_from_dict",
]


@dataclass(frozen=True)
class SyntheticTruth:
    mode: str
    seasonality: SeasonalityParams
    carma: CarmaParams
    driver: StableParams
    nig: NigParams
    theta_Z: float
    theta_L: float

    def measure_change(self) -> MeasureChange:
        eq_z = nig_mean(esscher_shift_nig(self.nig, self.theta_Z))
        eq_l = self.driver.mu + (tempered_mean_shift(self.driver, self.theta_L) if self.theta_L < 0 else 0.0)
        return MeasureChange.assemble(self.carma, self.theta_Z, self.theta_L, eq_z, eq_l)


@dataclass
class SyntheticMarket:
    market: MarketData
    truth: SyntheticTruth
    z: np.ndarray
    states: np.ndarray
    y: np.ndarray


def _month_starts(first, last):
    first = np.datetime64(first, "M")
    last = np.datetime64(last, "M")
    return np.arange(first, last + 1).astype("datetime64[D]")


def monthly_contracts(trade_dates, origin, mode: str, max_u: float):
    """All (trade_date, month start, month end) with delivery starting after the trade
    date and time to mid-delivery at most ``max_u`` index units."""
    trade_dates = np.asarray(trade_dates, dtype="datetime64[D]")
    if trade_dates.size == 0:
        return (np.array([], dtype="datetime64[D]"),) * 3
    horizon = trade_dates[-1] + np.timedelta64(int(2 * max_u) + 62, "D")
    starts = _month_starts(trade_dates[0], horizon)
    ends = (starts.astype("datetime64[M]") + 1).astype("datetime64[D]") - np.timedelta64(1, "D")
    t = day_index(trade_dates, origin, mode)
    T1 = day_index(starts, origin, mode)
    T2 = day_index(ends + np.timedelta64(1, "D"), origin, mode)
    mid = 0.5 * (T1 + T2)
    u = mid[None, :] - t[:, None]
    ok = (starts[None, :] > trade_dates[:, None]) & (u <= max_u)
    i, j = np.nonzero(ok)
    return trade_dates[i], starts[j], ends[j]


def generate_synthetic_market(truth: SyntheticTruth, start_date, n_days: int, rng: np.random.Generator,
                              max_u: float = 200.0, fine_step: float = 0.01,
                              noiseless: bool = False) -> SyntheticMarket:
    """Simulate ``n_days`` index units of spot prices and the matching futures quotes.

    ``noiseless`` switches both drivers off (Z = 0, Y = 0 from a zero start).
    """
    start = np.datetime64(start_date, "D")
    if truth.mode == "peak":
        start = np.busday_offset(start, 0, roll="forward")
        dates = np.busday_offset(start, np.arange(n_days), roll="forward")
    else:
        dates = start + np.arange(n_days).astype("timedelta64[D]")
    t = day_index(dates, start, truth.mode)
    if noiseless:
        z = np.zeros(n_days)
        states = np.zeros((n_days, truth.carma.p))
    else:
        z = np.concatenate([[0.0], np.cumsum(sample_nig(truth.nig, rng, n_days - 1))])
        path = simulate_carma(truth.carma, truth.driver, n_days - 1, fine_step, 1.0, rng)
        states = path.states
    y = states @ truth.carma.b_vec
    spot = truth.seasonality(t) + z + y

    trade_dates = dates[np.is_busday(dates)]
    td, ds, de = monthly_contracts(trade_dates, start, truth.mode, max_u)
    ti = day_index(td, start, truth.mode)
    T1 = day_index(ds, start, truth.mode)
    T2 = day_index(de + np.timedelta64(1, "D"), start, truth.mode)
    mc = truth.measure_change()
    sp = _Spectral(truth.carma)
    price = (seasonal_average(truth.seasonality, T1, T2) + z[ti]
             + carma_swap_term(truth.carma, states[ti], ti, T1, T2, _sp=sp)
             + gamma_q(truth.carma, ti, T1, T2, mc.eq_Z1, mc.eq_L1, _sp=sp))
    market = MarketData(truth.mode, dates, spot, td, ds, de, price)
    return SyntheticMarket(market, truth, z, states, y)


SEASONALITY_DEFAULTS = {
    "base": (19.4859, 0.0217, -2.8588, 0.6386, -6.7867, 2.8051),
    "peak": (30.7642, 0.0349, -2.5748, 1.5762),
}


def default_truth(mode: str = "base") -> SyntheticTruth:
    """Reference design for synthetic experiments.

    Fitted seasonality levels with a CARMA(2,1) whose eigenvalues are (-0.2, -1),
    a light-tailed skewed driver and a strongly tilted pricing measure, so the
    risk premium is large compared with its sampling noise.
    """
    if mode not in SEASONALITY_DEFAULTS:
        raise ValueError(f"mode must be 'base' or 'peak', got {mode!r}")
    alpha_Z, beta_Z, delta_Z = 10.0, 1.0, 0.1
    return SyntheticTruth(
        mode=mode,
        seasonality=SeasonalityParams(mode, SEASONALITY_DEFAULTS[mode]),
        carma=CarmaParams((1.2, 0.2), (0.5, 1.0)),
        driver=StableParams(1.8, 0.8, 0.3, 0.0),
        nig=NigParams(alpha_Z, beta_Z, delta_Z, zero_mean_location(alpha_Z, beta_Z, delta_Z)),
        theta_Z=-5.0,
        theta_L=-10.0,
    )


def truth_to_dict(truth: SyntheticTruth) -> dict:
    return {
        "mode": truth.mode,
        "seasonality": list(truth.seasonality.c),
        "carma": {"a": list(truth.carma.a), "b": list(truth.carma.b)},
        "driver": {k: getattr(truth.driver, k) for k in ("alpha", "beta", "gamma", "mu")},
        "nig": {k: getattr(truth.nig, k) for k in ("alpha_Z", "beta_Z", "delta_Z", "mu_Z")},
        "theta_Z": truth.theta_Z,
        "theta_L": truth.theta_L,
    }


def truth_from_dict(d: dict) -> SyntheticTruth:
    mode = d["mode"]
    return SyntheticTruth(
        mode=mode,
        seasonality=SeasonalityParams(mode, tuple(d["seasonality"])),
        carma=CarmaParams(tuple(d["carma"]["a"]), tuple(d["carma"]["b"])),
        driver=StableParams(**d["driver"]),
        nig=NigParams(**d["nig"]),
        theta_Z=float(d["theta_Z"]),
        theta_L=float(d["theta_L"]),
    )
