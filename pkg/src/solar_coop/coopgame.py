"""Coalition cost games: exhaustive enumeration, subadditivity, core, Shapley.

Coalitions are bitmasks over the ascending-id player order, so a game on N
households is a dense table of 2^N costs (entry 0 is the empty coalition at
cost 0).  Enumeration is single-threaded and fixed-order, which makes every
verdict and every witness deterministic; the cost table is write-once and
read-only afterwards, so checks over it can be fanned out freely.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .billing import Mechanism, PriceSchedule, to_integer_cents
from .errors import DimensionMismatch, TooManyPlayers
from .meterdata import BillingPeriod, CommunityDataset, slice_period

MAX_PLAYERS = 20
MAX_SHAPLEY_PLAYERS = 12
TOL_CENTS = 1e-6

# recompute the running profile from scratch this often during the Gray-code
# walk, to keep float drift orders of magnitude below TOL_CENTS
_REFRESH_EVERY = 1024


@dataclass(frozen=True)
class CostGame:
    """Complete coalition -> cost table for one mechanism and period."""

    players: tuple[str, ...]
    mechanism: Mechanism
    costs: np.ndarray
    period: BillingPeriod | None = None

    def __post_init__(self):
        costs = np.asarray(self.costs, dtype=np.float64)
        if costs.shape != (1 << len(self.players),):
            raise ValueError(f"cost table must have 2^{len(self.players)} entries")
        if costs[0] != 0.0:
            raise ValueError("empty coalition must cost 0")
        costs.flags.writeable = False
        object.__setattr__(self, "costs", costs)

    @property
    def n(self) -> int:
        return len(self.players)

    @property
    def grand_mask(self) -> int:
        return (1 << self.n) - 1

    def mask_of(self, members) -> int:
        index = {hid: j for j, hid in enumerate(self.players)}
        mask = 0
        for hid in members:
            try:
                mask |= 1 << index[hid]
            except KeyError:
                raise DimensionMismatch(f"{hid!r} is not a player of this game")
        return mask

    def members_of(self, mask: int) -> tuple[str, ...]:
        return tuple(hid for j, hid in enumerate(self.players) if mask >> j & 1)

    def cost(self, members) -> float:
        return float(self.costs[self.mask_of(members)])


def _subset_sums(values: np.ndarray) -> np.ndarray:
    """sums[mask] = sum of values[j] over set bits j, for every mask."""
    out = np.zeros(1)
    for v in values:
        out = np.concatenate([out, out + v])
    return out


def _abs_subset_sums(profiles: np.ndarray) -> np.ndarray:
    """p[mask] = sum_t |sum_{j in mask} profiles[j, t]| via a Gray-code walk.

    One vector add per coalition instead of |mask| of them; the running
    profile is refreshed from scratch periodically so accumulated rounding
    stays negligible.
    """
    n, t = profiles.shape
    p = np.empty(1 << n)
    p[0] = 0.0
    d = np.zeros(t)
    g = 0
    for k in range(1, 1 << n):
        b = (k & -k).bit_length() - 1
        g ^= 1 << b
        if k % _REFRESH_EVERY == 0:
            d = profiles[[j for j in range(n) if g >> j & 1]].sum(axis=0)
        elif g >> b & 1:
            d = d + profiles[b]
        else:
            d = d - profiles[b]
        p[g] = np.abs(d).sum()
    return p


def build_cost_game(
    dataset: CommunityDataset,
    mechanism: Mechanism,
    prices: PriceSchedule,
    period: BillingPeriod | None = None,
) -> CostGame:
    """Billing cost of every nonempty coalition of the dataset's households."""
    players = tuple(sorted(dataset.ids))
    n = len(players)
    if n > MAX_PLAYERS:
        raise TooManyPlayers(f"{n} households would need a 2^{n}-entry cost table")
    if period is not None:
        dataset = slice_period(dataset, period)
    else:
        period = dataset.span()

    q_tot = np.array([dataset.series(h).consumption.sum() for h in players])
    g_tot = np.array([dataset.series(h).generation.sum() for h in players])

    if mechanism is Mechanism.FIT:
        costs = prices.lam * _subset_sums(q_tot) - prices.mu * _subset_sums(g_tot)
    elif mechanism is Mechanism.NM:
        net = _subset_sums(q_tot - g_tot)
        costs = prices.lam * np.maximum(net, 0.0) - prices.mu * np.maximum(-net, 0.0)
    elif mechanism is Mechanism.NPS:
        profiles = np.stack(
            [dataset.series(h).consumption - dataset.series(h).generation for h in players]
        )
        s = _subset_sums(q_tot - g_tot)
        p = _abs_subset_sums(profiles)
        q = (p + s) / 2.0
        g = (p - s) / 2.0
        costs = prices.lam * q - prices.mu * g
    else:
        raise ValueError(f"unknown mechanism: {mechanism!r}")

    costs[0] = 0.0
    return CostGame(players, mechanism, costs, period)


# --- subadditivity --------------------------------------------------------

@dataclass(frozen=True)
class SubadditivityWitness:
    left: tuple[str, ...]
    right: tuple[str, ...]
    left_cost: float
    right_cost: float
    union_cost: float


@dataclass(frozen=True)
class SubadditivityReport:
    holds: bool
    witness: SubadditivityWitness | None


def check_subadditivity(game: CostGame, tol: float = TOL_CENTS) -> SubadditivityReport:
    """Exhaustively check C(S) + C(T) >= C(S u T) over all disjoint pairs.

    Walks unions in ascending mask order, carrying each union's submask array
    built by doubling, so the whole 3^N sweep is vectorized.  On violation the
    witness is the lowest union mask, then the lowest submask within it; ties
    (equality within tol) count as satisfied.

    A violation whose parts partition the full player set also certifies an
    empty core: any budget-balanced allocation sums to C(N) over the two
    parts, so it cannot respect both coalition bounds.  Core emptiness is not
    decided in general here; violations are reported as evidence.
    """
    C = game.costs
    n = game.n
    # stack entries: (next bit to decide, mask so far, submasks of mask);
    # pushing the include branch first makes pops visit masks ascending
    stack: list[tuple[int, int, np.ndarray]] = [(n - 1, 0, np.zeros(1, dtype=np.int64))]
    while stack:
        bit, mask, subs = stack.pop()
        if bit >= 0:
            b = 1 << bit
            stack.append((bit - 1, mask | b, np.concatenate([subs, subs | b])))
            stack.append((bit - 1, mask, subs))
            continue
        if mask == 0 or mask & (mask - 1) == 0:
            continue  # needs two nonempty parts
        # the array reads [P, P | lowbit] with P the submasks avoiding the
        # lowest set bit, so its first half covers each unordered split once
        half = subs[: len(subs) // 2]
        vals = C[half] + C[mask ^ half]
        cu = C[mask]
        if cu > vals.min() + tol:
            bad = half[np.flatnonzero(vals < cu - tol)]
            s_mask = int(bad.min())
            t_mask = mask ^ s_mask
            s_mask, t_mask = sorted((s_mask, t_mask))
            return SubadditivityReport(
                holds=False,
                witness=SubadditivityWitness(
                    left=game.members_of(s_mask),
                    right=game.members_of(t_mask),
                    left_cost=float(C[s_mask]),
                    right_cost=float(C[t_mask]),
                    union_cost=float(cu),
                ),
            )
    return SubadditivityReport(holds=True, witness=None)


# --- core membership -------------------------------------------------------

@dataclass(frozen=True)
class CoreViolation:
    members: tuple[str, ...]
    allocated: float
    coalition_cost: float


@dataclass(frozen=True)
class CoreReport:
    in_core: bool
    budget_balanced: bool
    budget_gap: float
    violations: tuple[CoreViolation, ...]


def allocation_entries(allocation) -> dict[str, float]:
    """Accept an AllocationVector or a plain id -> cents mapping."""
    entries = getattr(allocation, "entries", allocation)
    return dict(entries)


def check_core_membership(game: CostGame, allocation, tol: float = TOL_CENTS) -> CoreReport:
    """Budget balance plus x(S) <= C(S) for every nonempty coalition."""
    entries = allocation_entries(allocation)
    if set(entries) != set(game.players):
        raise DimensionMismatch(
            f"allocation households {sorted(entries)} != game players {sorted(game.players)}"
        )
    x = np.array([entries[h] for h in game.players])
    xs = _subset_sums(x)
    budget_gap = float(xs[game.grand_mask] - game.costs[game.grand_mask])
    budget_balanced = abs(budget_gap) <= tol
    excess = xs - game.costs
    bad = np.flatnonzero(excess > tol)
    violations = tuple(
        CoreViolation(game.members_of(int(m)), float(xs[m]), float(game.costs[m]))
        for m in bad
        if m != 0
    )
    return CoreReport(
        in_core=budget_balanced and not violations,
        budget_balanced=budget_balanced,
        budget_gap=budget_gap,
        violations=violations,
    )


# --- Shapley value ----------------------------------------------------------

def shapley_value(game: CostGame):
    """Exact Shapley value, used as a comparison point for the closed-form rules.

    Subset-weighted marginal contributions; O(N * 2^N), capped at N = 12.
    """
    n = game.n
    if n > MAX_SHAPLEY_PLAYERS:
        raise TooManyPlayers(f"exact Shapley value is capped at {MAX_SHAPLEY_PLAYERS} players")
    C = game.costs
    masks = np.arange(1 << n)
    sizes = np.bitwise_count(masks)
    fact = [math.factorial(k) for k in range(n + 1)]
    weight = np.array([fact[s] * fact[n - s - 1] / fact[n] for s in range(n)])
    entries: dict[str, float] = {}
    for j, hid in enumerate(game.players):
        bit = 1 << j
        without = masks[(masks & bit) == 0]
        marginal = C[without | bit] - C[without]
        entries[hid] = float((weight[sizes[without]] * marginal).sum())

    from .allocation import AllocationVector

    return AllocationVector(
        entries=entries,
        mechanism=game.mechanism,
        period=game.period,
        coalition_cost=float(C[game.grand_mask]),
    )


def game_to_json(game: CostGame) -> str:
    """Export for external verification: {mask (decimal string) -> integer cents}."""
    doc = {
        "schema_version": "v1",
        "mechanism": game.mechanism.value,
        "players": list(game.players),
        "costs_cents": {
            str(mask): to_integer_cents(float(game.costs[mask]))
            for mask in range(1, 1 << game.n)
        },
    }
    return json.dumps(doc, sort_keys=True)
