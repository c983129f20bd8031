"""Net-consumption energies and money costs under the three billing mechanisms.

For a billing period, a household or coalition with per-interval consumption
q(t) and generation g(t) is billed lambda*Q - mu*G where Q and G depend on the
mechanism:

* feed-in tariff:        Q = sum q,  G = sum g   (no netting)
* net metering:          Q = (sum q - sum g)_+,  G = (sum g - sum q)_+
* net purchase and sale: Q = sum (q - g)_+,      G = sum (g - q)_+  per interval

All money values are cents; all energies kWh.  Every function here is pure
over immutable inputs, so callers may evaluate coalitions and periods
concurrently without coordination.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable

import numpy as np

from .errors import EmptyCoalition
from .meterdata import BillingPeriod, CommunityDataset, MeterSeries


class Mechanism(str, Enum):
    FIT = "fit"
    NM = "nm"
    NPS = "nps"


@dataclass(frozen=True)
class PriceSchedule:
    """Retail price ``lam`` and sell-back price ``mu``, cents per kWh.

    Both constant within one billing period.  ``lam >= mu`` is the price
    order under which cooperation is guaranteed to help; schedules with
    ``lam < mu`` are legal inputs so that the unfavorable regime can be
    demonstrated.
    """

    lam: float
    mu: float

    def __post_init__(self):
        if not (np.isfinite(self.lam) and np.isfinite(self.mu)):
            raise ValueError("prices must be finite")
        if self.lam < 0 or self.mu < 0:
            raise ValueError("prices must be non-negative")

    @property
    def favorable(self) -> bool:
        return self.lam >= self.mu


@dataclass(frozen=True)
class EnergyTotals:
    """Billed energy pair (Q, G) for one entity under one mechanism."""

    q_total: float
    g_total: float
    mechanism: Mechanism

    @property
    def net(self) -> float:
        """Net consumption Q - G; identical across mechanisms for fixed data."""
        return self.q_total - self.g_total


def resolve_coalition(dataset: CommunityDataset, members: Iterable[str] | None) -> tuple[str, ...]:
    """Validated, ascending-id member tuple; None means every household."""
    if members is None:
        ids = sorted(dataset.ids)
    else:
        ids = sorted(set(members))
        for hid in ids:
            dataset.series(hid)  # raises UnknownHousehold
    if not ids:
        raise EmptyCoalition("a coalition needs at least one household")
    return tuple(ids)


def aggregate_series(dataset: CommunityDataset, members: Iterable[str] | None = None) -> MeterSeries:
    """Pool the members behind one virtual meter: per-interval sums of q and g."""
    ids = resolve_coalition(dataset, members)
    cons = np.zeros(dataset.grid.length)
    gen = np.zeros(dataset.grid.length)
    for hid in ids:
        s = dataset.series(hid)
        cons += s.consumption
        gen += s.generation
    return MeterSeries("+".join(ids), dataset.grid, cons, gen)


def energy_totals(
    series: MeterSeries,
    mechanism: Mechanism,
    period: BillingPeriod | None = None,
) -> EnergyTotals:
    if period is not None:
        series = series.slice(period)
    q, g = series.consumption, series.generation
    if mechanism is Mechanism.FIT:
        return EnergyTotals(float(q.sum()), float(g.sum()), mechanism)
    if mechanism is Mechanism.NM:
        net = float(q.sum() - g.sum())
        return EnergyTotals(max(net, 0.0), max(-net, 0.0), mechanism)
    if mechanism is Mechanism.NPS:
        d = q - g
        return EnergyTotals(
            float(np.maximum(d, 0.0).sum()),
            float(np.maximum(-d, 0.0).sum()),
            mechanism,
        )
    raise ValueError(f"unknown mechanism: {mechanism!r}")


def cost_of(
    series: MeterSeries,
    mechanism: Mechanism,
    prices: PriceSchedule,
    period: BillingPeriod | None = None,
) -> float:
    """Net electricity consumption cost in cents: lam*Q - mu*G."""
    totals = energy_totals(series, mechanism, period)
    return prices.lam * totals.q_total - prices.mu * totals.g_total


def net_profile(series: MeterSeries, period: BillingPeriod | None = None) -> np.ndarray:
    """Signed per-interval net consumption D(t) = q(t) - g(t)."""
    if period is not None:
        series = series.slice(period)
    return series.consumption - series.generation


# --- money rendering ----------------------------------------------------------

def to_integer_cents(cents: float) -> int:
    """Whole cents, half-even; the fixed JSON serialization of money."""
    return round(cents)


def format_dollars(cents: float) -> str:
    """Dollars with two decimals, half-even."""
    return f"{cents / 100:.2f}"
