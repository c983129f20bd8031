"""Cost-sharing rules, the cost-causation axiom audit, and savings reports.

Both closed-form rules price each member's net consumption at the retail
price when the sharing group is a net consumer and at the sell-back price
when it is a net generator.  The net-metering rule applies this once per
billing period; the net-purchase-and-sale rule applies it interval by
interval and sums.  Both are budget balanced by construction, and under the
favorable price order they land in the core of the matching cost game.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .billing import (
    Mechanism,
    PriceSchedule,
    aggregate_series,
    cost_of,
    energy_totals,
    net_profile,
    resolve_coalition,
)
from .coopgame import CostGame, check_core_membership
from .errors import DimensionMismatch, PriceOrderViolated
from .meterdata import BillingPeriod, CommunityDataset, slice_period

KWH_TOL = 1e-9
CENTS_TOL = 1e-6


@dataclass(frozen=True)
class AllocationVector:
    """Per-household money allocation (cents) for one sharing group.

    ``per_interval`` carries the interval-by-interval allocation matrix
    (intervals x members, member columns in ``members`` order) when the rule
    has one; the period-level rules and the Shapley value leave it None.
    """

    entries: dict[str, float]
    mechanism: Mechanism
    period: BillingPeriod | None
    coalition_cost: float
    per_interval: np.ndarray | None = None

    @property
    def members(self) -> tuple[str, ...]:
        return tuple(self.entries)

    @property
    def total(self) -> float:
        return float(sum(self.entries.values()))


def _prepare(dataset, prices, period, members):
    ids = resolve_coalition(dataset, members)
    sub = slice_period(dataset, period) if period is not None else dataset
    if period is None:
        period = dataset.span()
    if not prices.favorable:
        warnings.warn(
            "sell-back price exceeds retail price; individual rationality and "
            "standalone cost are not guaranteed",
            PriceOrderViolated,
            stacklevel=3,
        )
    return ids, sub, period


def allocate_nm(
    dataset: CommunityDataset,
    prices: PriceSchedule,
    period: BillingPeriod | None = None,
    members: Iterable[str] | None = None,
) -> AllocationVector:
    """Net-metering rule: x_i = lam * D_i if the group net D is >= 0, else mu * D_i."""
    ids, sub, period = _prepare(dataset, prices, period, members)
    nets = np.array([net_profile(sub.series(h)).sum() for h in ids])
    price = prices.lam if nets.sum() >= 0 else prices.mu
    x = price * nets
    agg = aggregate_series(sub, ids)
    return AllocationVector(
        entries={h: float(v) for h, v in zip(ids, x)},
        mechanism=Mechanism.NM,
        period=period,
        coalition_cost=cost_of(agg, Mechanism.NM, prices),
    )


def allocate_nps(
    dataset: CommunityDataset,
    prices: PriceSchedule,
    period: BillingPeriod | None = None,
    members: Iterable[str] | None = None,
) -> AllocationVector:
    """Net-purchase-and-sale rule: the net-metering rule applied per interval.

    x_i(t) = lam * D_i(t) when the group's net at t is >= 0, else mu * D_i(t);
    x_i sums x_i(t) over the period.  Budget balance holds per interval and
    in total.  The boundary D(t) = 0 takes the retail branch, mirroring the
    period-level rule; either branch balances there, but individual entries
    differ, so the convention is normative.
    """
    ids, sub, period = _prepare(dataset, prices, period, members)
    profiles = np.column_stack([net_profile(sub.series(h)) for h in ids])
    group = profiles.sum(axis=1)
    price = np.where(group >= 0, prices.lam, prices.mu)
    per_interval = price[:, None] * profiles
    x = per_interval.sum(axis=0)
    agg = aggregate_series(sub, ids)
    return AllocationVector(
        entries={h: float(v) for h, v in zip(ids, x)},
        mechanism=Mechanism.NPS,
        period=period,
        coalition_cost=cost_of(agg, Mechanism.NPS, prices),
        per_interval=per_interval,
    )


# --- axiom audit -------------------------------------------------------------

PASS = "pass"
FAIL = "fail"
VACUOUS = "vacuous"


@dataclass(frozen=True)
class AxiomCheck:
    status: str
    witness: dict | None = None

    @property
    def ok(self) -> bool:
        return self.status != FAIL


@dataclass(frozen=True)
class AxiomReport:
    """Status of the seven cost-causation axioms for one allocation."""

    equity: AxiomCheck
    monotonicity: AxiomCheck
    individual_rationality: AxiomCheck
    budget_balance: AxiomCheck
    standalone_cost: AxiomCheck
    penalty_for_causing: AxiomCheck
    reward_for_mitigating: AxiomCheck
    notes: tuple[str, ...] = ()

    def checks(self) -> dict[str, AxiomCheck]:
        return {
            "equity": self.equity,
            "monotonicity": self.monotonicity,
            "individual_rationality": self.individual_rationality,
            "budget_balance": self.budget_balance,
            "standalone_cost": self.standalone_cost,
            "penalty_for_causing": self.penalty_for_causing,
            "reward_for_mitigating": self.reward_for_mitigating,
        }

    @property
    def all_ok(self) -> bool:
        return all(check.ok for check in self.checks().values())


def _sign(value: float, tol: float) -> int:
    if value > tol:
        return 1
    if value < -tol:
        return -1
    return 0


def _check_equity(nets, x, label=""):
    hit = False
    for i in range(len(nets)):
        for j in range(i + 1, len(nets)):
            if abs(nets[i] - nets[j]) <= KWH_TOL:
                hit = True
                if abs(x[i] - x[j]) > CENTS_TOL:
                    return False, {"pair": (i, j), "where": label,
                                   "net": float(nets[i]), "x": (float(x[i]), float(x[j]))}
    return hit, None


def _check_monotonicity(nets, x, label=""):
    hit = False
    for i in range(len(nets)):
        for j in range(len(nets)):
            if i == j:
                continue
            same_sign = _sign(nets[i], KWH_TOL) * _sign(nets[j], KWH_TOL) >= 0
            if same_sign and abs(nets[i]) >= abs(nets[j]) - KWH_TOL:
                hit = True
                if abs(x[i]) < abs(x[j]) - CENTS_TOL:
                    return False, {"pair": (i, j), "where": label,
                                   "net": (float(nets[i]), float(nets[j])),
                                   "x": (float(x[i]), float(x[j]))}
    return hit, None


def _check_signs(nets, x, want_positive, label=""):
    hit = False
    for i in range(len(nets)):
        causing = nets[i] > KWH_TOL if want_positive else nets[i] < -KWH_TOL
        if causing:
            hit = True
            ok = x[i] > 0 if want_positive else x[i] < 0
            if not ok:
                return False, {"household_index": i, "where": label,
                               "net": float(nets[i]), "x": float(x[i])}
    return hit, None


def _pairwise_status(found_fail, witness, any_hit) -> AxiomCheck:
    if found_fail:
        return AxiomCheck(FAIL, witness)
    return AxiomCheck(PASS if any_hit else VACUOUS)


def audit_axioms(
    allocation: AllocationVector,
    dataset: CommunityDataset,
    prices: PriceSchedule,
    period: BillingPeriod | None,
    game: CostGame,
) -> AxiomReport:
    """Check the allocation literally against the seven axioms.

    Equity, monotonicity, penalty, and reward are judged on period nets for
    period-level vectors; for an interval-level vector (net purchase and
    sale) they are judged interval by interval, since that mechanism's game
    is the per-interval one, and reported aggregated.  Individual
    rationality, budget balance, and standalone cost are always
    period-level.  Net comparisons use a 1e-9 kWh tolerance and money
    comparisons 1e-6 cents; equalities satisfy the weak axioms.
    """
    ids = allocation.members
    if set(ids) != set(game.players):
        raise DimensionMismatch(
            f"allocation households {sorted(ids)} != game players {sorted(game.players)}"
        )
    sub = slice_period(dataset, period) if period is not None else dataset
    nets = np.array([net_profile(sub.series(h)).sum() for h in ids])
    x = np.array([allocation.entries[h] for h in ids])

    notes = []
    if not prices.favorable:
        notes.append(
            "sell-back price exceeds retail price: individual rationality and "
            "standalone cost are not guaranteed by the price order"
        )
    for i, hid in enumerate(ids):
        if abs(nets[i]) <= KWH_TOL and abs(x[i]) > CENTS_TOL:
            notes.append(
                f"allocation charges or rewards zero-net household {hid} "
                f"({x[i]:+.6f} cents)"
            )

    if allocation.per_interval is not None:
        # per-interval audit of the causation axioms, aggregated over t
        d_matrix = np.column_stack([net_profile(sub.series(h)) for h in ids])
        checks = {}
        for name, checker in (
            ("equity", _check_equity),
            ("monotonicity", _check_monotonicity),
            ("penalty", lambda dd, xx, label: _check_signs(dd, xx, True, label)),
            ("reward", lambda dd, xx, label: _check_signs(dd, xx, False, label)),
        ):
            any_hit, failure = False, None
            for t in range(d_matrix.shape[0]):
                hit, witness = checker(d_matrix[t], allocation.per_interval[t], f"interval {t}")
                any_hit = any_hit or hit
                if witness is not None:
                    failure = witness
                    break
            checks[name] = _pairwise_status(failure is not None, failure, any_hit)
        equity, monotonicity = checks["equity"], checks["monotonicity"]
        penalty, reward = checks["penalty"], checks["reward"]
    else:
        hit, w = _check_equity(nets, x)
        equity = _pairwise_status(w is not None, w, hit)
        hit, w = _check_monotonicity(nets, x)
        monotonicity = _pairwise_status(w is not None, w, hit)
        hit, w = _check_signs(nets, x, True)
        penalty = _pairwise_status(w is not None, w, hit)
        hit, w = _check_signs(nets, x, False)
        reward = _pairwise_status(w is not None, w, hit)

    standalone_costs = np.array([game.cost([h]) for h in ids])
    ir_bad = np.flatnonzero(x > standalone_costs + CENTS_TOL)
    if len(ir_bad):
        i = int(ir_bad[0])
        individual_rationality = AxiomCheck(FAIL, {
            "household": ids[i], "allocated": float(x[i]), "standalone": float(standalone_costs[i]),
        })
    else:
        individual_rationality = AxiomCheck(PASS)

    c_all = game.cost(ids)
    gap = float(x.sum() - c_all)
    if abs(gap) > CENTS_TOL:
        budget_balance = AxiomCheck(FAIL, {"allocated_sum": float(x.sum()),
                                           "coalition_cost": c_all, "gap": gap})
    else:
        budget_balance = AxiomCheck(PASS)

    core = check_core_membership(game, allocation, tol=CENTS_TOL)
    if core.in_core:
        standalone_cost = AxiomCheck(PASS)
    else:
        first = core.violations[0] if core.violations else None
        standalone_cost = AxiomCheck(FAIL, {
            "budget_gap": core.budget_gap,
            "violation": None if first is None else {
                "members": first.members,
                "allocated": first.allocated,
                "coalition_cost": first.coalition_cost,
            },
        })

    return AxiomReport(
        equity=equity,
        monotonicity=monotonicity,
        individual_rationality=individual_rationality,
        budget_balance=budget_balance,
        standalone_cost=standalone_cost,
        penalty_for_causing=penalty,
        reward_for_mitigating=reward,
        notes=tuple(notes),
    )


# --- savings -----------------------------------------------------------------

@dataclass(frozen=True)
class SavingRow:
    household_id: str
    standalone_cost: float
    allocated: float
    saving: float
    closed_form: float
    diverges: bool


@dataclass(frozen=True)
class SavingsReport:
    """Per-household sharing benefit for one mechanism and period.

    ``saving`` is the definitional standalone-minus-allocated value; the
    piecewise formula is evaluated alongside as a diagnostic, and rows where
    the two differ are flagged.  They can only differ when the group's net
    is exactly zero (for some interval, under net purchase and sale) while
    the household's is not; those intervals are listed.
    """

    mechanism: Mechanism
    period: BillingPeriod
    rows: tuple[SavingRow, ...]
    boundary_intervals: tuple[int, ...] = ()
    period_on_boundary: bool = False

    @property
    def total_saving(self) -> float:
        return float(sum(r.saving for r in self.rows))


def savings(
    dataset: CommunityDataset,
    prices: PriceSchedule,
    period: BillingPeriod | None = None,
    members: Iterable[str] | None = None,
    mechanism: Mechanism = Mechanism.NM,
) -> SavingsReport:
    if mechanism is Mechanism.NM:
        allocation = allocate_nm(dataset, prices, period, members)
    elif mechanism is Mechanism.NPS:
        allocation = allocate_nps(dataset, prices, period, members)
    else:
        raise ValueError("savings are defined for the netting mechanisms (nm, nps)")
    ids = allocation.members
    sub = slice_period(dataset, period) if period is not None else dataset

    spread = prices.lam - prices.mu
    rows = []
    boundary: tuple[int, ...] = ()
    period_boundary = False
    if mechanism is Mechanism.NM:
        nets = np.array([net_profile(sub.series(h)).sum() for h in ids])
        group_net = nets.sum()
        period_boundary = abs(group_net) <= KWH_TOL and bool((np.abs(nets) > KWH_TOL).any())
        for i, hid in enumerate(ids):
            standalone = cost_of(sub.series(hid), mechanism, prices)
            allocated = allocation.entries[hid]
            direct = standalone - allocated
            closed = spread * abs(nets[i]) if nets[i] * group_net < 0 else 0.0
            rows.append(SavingRow(hid, standalone, allocated, direct, closed,
                                  abs(closed - direct) > CENTS_TOL))
    else:
        d_matrix = np.column_stack([net_profile(sub.series(h)) for h in ids])
        group = d_matrix.sum(axis=1)
        on_edge = np.abs(group) <= KWH_TOL
        boundary = tuple(
            int(t) for t in np.flatnonzero(on_edge & (np.abs(d_matrix) > KWH_TOL).any(axis=1))
        )
        for i, hid in enumerate(ids):
            standalone = cost_of(sub.series(hid), mechanism, prices)
            allocated = allocation.entries[hid]
            direct = standalone - allocated
            opposite = d_matrix[:, i] * group < 0
            closed = spread * float(np.abs(d_matrix[opposite, i]).sum())
            rows.append(SavingRow(hid, standalone, allocated, direct, closed,
                                  abs(closed - direct) > CENTS_TOL))
    return SavingsReport(
        mechanism=mechanism,
        period=allocation.period,
        rows=tuple(rows),
        boundary_intervals=boundary,
        period_on_boundary=period_boundary,
    )


@dataclass(frozen=True)
class SavingsComparison:
    household_id: str
    saving_nm: float
    saving_nps: float
    difference: float  # nps minus nm


def compare_savings(
    dataset: CommunityDataset,
    prices: PriceSchedule,
    period: BillingPeriod | None = None,
    members: Iterable[str] | None = None,
) -> tuple[SavingsComparison, ...]:
    """Side-by-side per-household sharing benefit under the two netting mechanisms."""
    nm = {r.household_id: r.saving for r in savings(dataset, prices, period, members, Mechanism.NM).rows}
    nps = {r.household_id: r.saving for r in savings(dataset, prices, period, members, Mechanism.NPS).rows}
    return tuple(
        SavingsComparison(h, nm[h], nps[h], nps[h] - nm[h]) for h in sorted(nm)
    )


def mechanism_cost_gap(
    dataset: CommunityDataset,
    prices: PriceSchedule,
    period: BillingPeriod | None = None,
    members: Iterable[str] | None = None,
) -> float:
    """Coalition cost difference NPS minus NM, in cents.

    For lam >= mu the gap is verified against its closed form,
    (lam - mu) * G_nps when the coalition net is >= 0 and
    (lam - mu) * Q_nps otherwise; for lam < mu the identity does not apply
    and the raw gap is returned with a warning.
    """
    ids = resolve_coalition(dataset, members)
    sub = slice_period(dataset, period) if period is not None else dataset
    agg = aggregate_series(sub, ids)
    gap = cost_of(agg, Mechanism.NPS, prices) - cost_of(agg, Mechanism.NM, prices)
    if not prices.favorable:
        warnings.warn("gap identity is not asserted for lam < mu", PriceOrderViolated,
                      stacklevel=2)
        return gap
    totals = energy_totals(agg, Mechanism.NPS)
    expected = (prices.lam - prices.mu) * (
        totals.g_total if totals.net >= 0 else totals.q_total
    )
    if abs(gap - expected) > CENTS_TOL:
        raise RuntimeError(
            f"internal inconsistency: cost gap {gap} != closed form {expected}"
        )
    return gap


def search_shapley_axiom_violation(
    trials: int = 200,
    seed: int = 0,
    prices: PriceSchedule = PriceSchedule(2.0, 1.0),
    max_players: int = 4,
    max_intervals: int = 8,
):
    """Randomized hunt for an instance where the Shapley value breaks a
    cost-causation axiom; returns a description of the first hit or None.
    """
    from .coopgame import build_cost_game, shapley_value
    from .meterdata import synth_community

    rng = np.random.default_rng(seed)
    for trial in range(trials):
        n = int(rng.integers(2, max_players + 1))
        t = int(rng.integers(1, max_intervals + 1))
        instance_seed = int(rng.integers(2**31))
        data = synth_community(n, t, seed=instance_seed)
        for mechanism in (Mechanism.NM, Mechanism.NPS):
            game = build_cost_game(data, mechanism, prices)
            phi = shapley_value(game)
            report = audit_axioms(phi, data, prices, None, game)
            failed = [name for name, check in report.checks().items() if not check.ok]
            if failed:
                return {
                    "trial": trial,
                    "seed": instance_seed,
                    "households": n,
                    "intervals": t,
                    "mechanism": mechanism.value,
                    "failed_axioms": failed,
                    "shapley_cents": dict(phi.entries),
                    "notes": report.notes,
                }
    return None
