"""Acceptance suite: one pass/fail line per criterion.

Run `pytest tests/test_acceptance.py -s` to see the verdict lines.  Criterion 9
needs the real 2016 community dataset (not redistributable) and is skipped
unless SOLAR_COOP_PECAN2016 points at its interval CSV.
"""

import os
import time

from contextlib import contextmanager
from datetime import datetime, timezone, timedelta

import numpy as np
import pytest

import oracle
from solar_coop import (
    Mechanism,
    MeterSeries,
    PriceSchedule,
    TimeGrid,
    aggregate_series,
    allocate_nm,
    allocate_nps,
    audit_axioms,
    build_cost_game,
    check_core_membership,
    check_subadditivity,
    community_dataset,
    cost_of,
    energy_totals,
    month_periods,
    parse_csv,
    savings,
    shapley_value,
    synth_community,
)

TOL_CENTS = 1e-6
UTC = timezone.utc


def _line(num, name, verdict):
    print(f"\n[criterion {num:02d}] {name}: {verdict}")


@contextmanager
def criterion(num, name):
    try:
        yield
    except pytest.skip.Exception:
        _line(num, name, "SKIP")
        raise
    except BaseException:
        _line(num, name, "FAIL")
        raise
    _line(num, name, "PASS")


def random_instances(count, seed, price_mode):
    """Deterministic desk-scale communities with priced schedules."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        n = int(rng.integers(2, 7))  # <= 6 households
        t = int(rng.integers(1, 97))  # <= 96 intervals
        lam = float(rng.uniform(0.5, 20.0))
        if price_mode == "equal":
            mu = lam
        elif price_mode == "strict":
            mu = float(rng.uniform(0.0, lam * 0.95))
        else:
            raise ValueError(price_mode)
        data = synth_community(n, t, seed=int(rng.integers(2**31)))
        out.append((data, PriceSchedule(lam, mu)))
    return out


@pytest.fixture(scope="module")
def equal_price_instances():
    return random_instances(100, seed=20160101, price_mode="equal")


@pytest.fixture(scope="module")
def strict_price_instances():
    instances = random_instances(100, seed=20160202, price_mode="strict")
    data0, _ = instances[0]
    instances[0] = (data0, PriceSchedule(2.0, 1.0))  # the canonical strict pair
    return instances


def test_criterion_01_mechanism_collapse_at_equal_prices(equal_price_instances):
    with criterion(1, "equal prices collapse the three mechanisms"):
        started = time.perf_counter()
        for data, prices in equal_price_instances:
            games = [build_cost_game(data, m, prices) for m in Mechanism]
            for mask in range(1, 1 << len(games[0].players)):
                costs = [float(g.costs[mask]) for g in games]
                assert max(costs) - min(costs) <= TOL_CENTS
        elapsed = time.perf_counter() - started
        assert elapsed < 5.0, f"took {elapsed:.2f}s"


def test_criterion_02_fit_additivity(equal_price_instances):
    with criterion(2, "feed-in tariff cost is exactly additive"):
        for data, prices in equal_price_instances:
            game = build_cost_game(data, Mechanism.FIT, prices)
            c = game.costs
            for union in range(1, 1 << len(game.players)):
                part = (union - 1) & union
                while part:
                    assert abs(c[union] - c[part] - c[union ^ part]) <= 1e-9
                    part = (part - 1) & union


def test_criterion_03_subadditivity_forward(strict_price_instances):
    with criterion(3, "netting games are subadditive when retail >= sell-back"):
        started = time.perf_counter()
        for data, prices in strict_price_instances:
            for mechanism in (Mechanism.NM, Mechanism.NPS):
                game = build_cost_game(data, mechanism, prices)
                assert check_subadditivity(game).holds
        elapsed = time.perf_counter() - started
        assert elapsed < 20.0, f"took {elapsed:.2f}s"


def test_criterion_04_subadditivity_converse_witness():
    with criterion(4, "sell-back above retail reproduces the violation witness"):
        grid = TimeGrid(datetime(2016, 1, 1, tzinfo=UTC), timedelta(minutes=15), 1)
        data = community_dataset([
            MeterSeries("A", grid, np.array([1.0]), np.array([0.0])),
            MeterSeries("B", grid, np.array([0.0]), np.array([1.0])),
        ])
        prices = PriceSchedule(1.0, 2.0)
        profiles = {"A": ([1.0], [0.0]), "B": ([0.0], [1.0])}

        def by_hand(members):
            if not members:
                return 0.0
            return oracle.coalition_cost(profiles, members, "nm", 1.0, 2.0)

        assert by_hand({"A"}) == 1.0
        assert by_hand({"B"}) == -2.0
        assert by_hand({"A", "B"}) == 0.0
        assert oracle.subadditivity_violations(["A", "B"], by_hand)

        for mechanism in (Mechanism.NM, Mechanism.NPS):
            game = build_cost_game(data, mechanism, prices)
            assert float(game.costs[1]) == 1.0
            assert float(game.costs[2]) == -2.0
            assert float(game.costs[3]) == 0.0
            report = check_subadditivity(game)
            assert not report.holds
            w = report.witness
            assert (w.left_cost, w.right_cost, w.union_cost) == (1.0, -2.0, 0.0)


def test_criterion_05_core_membership(strict_price_instances, equal_price_instances):
    with criterion(5, "both closed-form rules land in the core"):
        for data, prices in strict_price_instances + equal_price_instances:
            for mechanism, rule in (
                (Mechanism.NM, allocate_nm),
                (Mechanism.NPS, allocate_nps),
            ):
                game = build_cost_game(data, mechanism, prices)
                report = check_core_membership(game, rule(data, prices), tol=TOL_CENTS)
                assert report.in_core


def test_criterion_06_cost_gap_identity(strict_price_instances, equal_price_instances):
    with criterion(6, "nps-minus-nm gap equals its closed form per coalition"):
        for data, prices in strict_price_instances + equal_price_instances:
            nm = build_cost_game(data, Mechanism.NM, prices)
            nps = build_cost_game(data, Mechanism.NPS, prices)
            spread = prices.lam - prices.mu
            for mask in range(1, 1 << len(nm.players)):
                agg = aggregate_series(data, nm.members_of(mask))
                totals = energy_totals(agg, Mechanism.NPS)
                side = totals.g_total if totals.net >= 0 else totals.q_total
                gap = float(nps.costs[mask] - nm.costs[mask])
                assert abs(gap - spread * side) <= TOL_CENTS


def _twin_extended(data):
    src = data.households[0]
    twin = MeterSeries("zz-twin", src.grid, src.consumption, src.generation)
    return community_dataset(list(data.households) + [twin]), src.household_id


def test_criterion_07_axiom_audit(strict_price_instances, equal_price_instances):
    with criterion(7, "seven-axiom audit passes and Shapley balances"):
        instances = strict_price_instances + equal_price_instances
        for k, (data, prices) in enumerate(instances):
            for mechanism, rule in (
                (Mechanism.NM, allocate_nm),
                (Mechanism.NPS, allocate_nps),
            ):
                game = build_cost_game(data, mechanism, prices)
                vector = rule(data, prices)
                assert abs(vector.total - float(game.costs[game.grand_mask])) <= TOL_CENTS
                report = audit_axioms(vector, data, prices, None, game)
                assert report.all_ok, (k, mechanism, report)

                phi = shapley_value(game)
                assert abs(phi.total - float(game.costs[game.grand_mask])) <= TOL_CENTS

            if k % 5 == 0:  # symmetric-player equality on twin-extended variants
                widened, original = _twin_extended(data)
                for mechanism in (Mechanism.NM, Mechanism.NPS):
                    game = build_cost_game(widened, mechanism, prices)
                    phi = shapley_value(game)
                    assert abs(phi.entries["zz-twin"] - phi.entries[original]) <= TOL_CENTS


# pinned two-household regression values, recomputed by the oracle first
FIX_A_EXPECTED = {
    ("cost", "A"): {"fit": 5.0, "nm": 2.0, "nps": 3.0},
    ("cost", "B"): {"fit": 2.0, "nm": 0.0, "nps": 2.0},
    ("cost", "AB"): {"fit": 7.0, "nm": 2.0, "nps": 2.0},
    "allocation_nm": {"A": 2.0, "B": 0.0},
    "allocation_nps": {"A": 2.0, "B": 0.0},
    "savings_nm": {"A": 0.0, "B": 0.0},
    "savings_nps": {"A": 1.0, "B": 2.0},
    "shapley_nps": {"A": 1.5, "B": 0.5},
    "gap": {"A": 1.0, "B": 2.0, "AB": 0.0},
}


def test_criterion_08_fixture_regression(fix_a, prices21):
    with criterion(8, "two-household fixture matches the brute-force oracle"):
        from conftest import FIX_A_PROFILES

        lam, mu = prices21.lam, prices21.mu
        groups = {"A": ["A"], "B": ["B"], "AB": ["A", "B"]}

        # oracle first: recompute every pinned value from raw per-interval data
        for label, members in groups.items():
            for mech, pinned in FIX_A_EXPECTED[("cost", label)].items():
                assert oracle.coalition_cost(FIX_A_PROFILES, members, mech, lam, mu) == pinned
        assert oracle.nm_allocation(FIX_A_PROFILES, lam, mu) == FIX_A_EXPECTED["allocation_nm"]
        assert oracle.nps_allocation(FIX_A_PROFILES, lam, mu) == FIX_A_EXPECTED["allocation_nps"]
        oracle_nps_alloc = oracle.nps_allocation(FIX_A_PROFILES, lam, mu)
        for hid in ("A", "B"):
            q, g = FIX_A_PROFILES[hid]
            standalone_nm = oracle.nm_cost(q, g, lam, mu)
            standalone_nps = oracle.nps_cost(q, g, lam, mu)
            nm_alloc = oracle.nm_allocation(FIX_A_PROFILES, lam, mu)[hid]
            assert standalone_nm - nm_alloc == FIX_A_EXPECTED["savings_nm"][hid]
            assert standalone_nps - oracle_nps_alloc[hid] == FIX_A_EXPECTED["savings_nps"][hid]

        def nps_cost_fn(members):
            if not members:
                return 0.0
            return oracle.coalition_cost(FIX_A_PROFILES, members, "nps", lam, mu)

        assert oracle.shapley_by_permutations(["A", "B"], nps_cost_fn) == FIX_A_EXPECTED["shapley_nps"]
        for label, members in groups.items():
            q, g = oracle.pool(FIX_A_PROFILES, members)
            gap = oracle.nps_cost(q, g, lam, mu) - oracle.nm_cost(q, g, lam, mu)
            assert gap == FIX_A_EXPECTED["gap"][label]
            # closed form of the gap, from raw profiles
            nps_g = sum(oracle.positive(gt - qt) for qt, gt in zip(q, g))
            nps_q = sum(oracle.positive(qt - gt) for qt, gt in zip(q, g))
            net = sum(q) - sum(g)
            assert gap == (lam - mu) * (nps_g if net >= 0 else nps_q)

        # engine second: pin the same values as regression checks
        for label, members in groups.items():
            agg = aggregate_series(fix_a, members)
            for mech_name, pinned in FIX_A_EXPECTED[("cost", label)].items():
                assert cost_of(agg, Mechanism(mech_name), prices21) == pinned
        assert allocate_nm(fix_a, prices21).entries == FIX_A_EXPECTED["allocation_nm"]
        assert allocate_nps(fix_a, prices21).entries == FIX_A_EXPECTED["allocation_nps"]
        for mech, key in ((Mechanism.NM, "savings_nm"), (Mechanism.NPS, "savings_nps")):
            rows = savings(fix_a, prices21, mechanism=mech).rows
            assert {r.household_id: r.saving for r in rows} == FIX_A_EXPECTED[key]
        game = build_cost_game(fix_a, Mechanism.NPS, prices21)
        assert shapley_value(game).entries == FIX_A_EXPECTED["shapley_nps"]
        from solar_coop import mechanism_cost_gap

        for label, members in groups.items():
            assert mechanism_cost_gap(fix_a, prices21, members=members) == FIX_A_EXPECTED["gap"][label]


# --- criterion 9: conditional on the real community dataset -------------------

PECAN_COMMUNITY_IDS = {
    "26", "77", "93", "171", "370", "379", "545", "585", "624", "744",
    "781", "890", "1283", "1415", "1697", "1792", "1800", "2072", "2094", "2129",
    "2199", "2233", "2557", "2818", "2925", "2945", "2980", "3044", "3310", "3367",
    "3456", "3482", "3538", "3649", "4154", "4352", "4373", "4447", "4767", "4874",
    "5035", "5129", "5218", "5357", "5403", "5658", "5738", "5785", "5874", "5892",
    "6061", "6063", "6578", "7024", "7030", "7429", "7627", "7719", "7793", "7940",
    "7965", "7989", "8046", "8059", "8086", "8156", "8243", "8419", "8645", "8829",
    "8995", "9001", "9134", "9235", "9248", "9647", "9729", "9937", "9971", "9982",
}

PECAN_MONTHLY_KWH = {
    "2016-01": (56807.87, 44503.73, 12304.14),
    "2016-02": (48200.62, 52105.83, -3905.21),
    "2016-03": (52714.26, 52944.47, -230.21),
    "2016-04": (60270.83, 51398.36, 8872.47),
    "2016-05": (77184.61, 48118.61, 29066.00),
    "2016-06": (113583.74, 61418.20, 52165.54),
    "2016-07": (134202.32, 66716.79, 67485.52),
    "2016-08": (119990.42, 54610.72, 65379.69),
    "2016-09": (109313.42, 54128.38, 55185.04),
    "2016-10": (83020.00, 53773.55, 29246.45),
    "2016-11": (55200.10, 33601.74, 21598.36),
    "2016-12": (61193.50, 25028.61, 36164.89),
}
PECAN_TOTAL_KWH = (971681.68, 598348.98, 373332.69)

# annual totals in dollars: (without sharing, with sharing, savings)
PECAN_NM_TOTALS_USD = (42973.74, 41337.22, 1636.52)
PECAN_NPS_TOTALS_USD = (55609.93, 42973.74, 12636.18)
PECAN_NPS_TOTAL_PCT = 22.72
# the printed summary percentage for the nm table divides by the with-sharing
# total, unlike its own column definition; both readings are checked
PECAN_NM_TOTAL_PCT_AS_PRINTED = 3.96


def test_criterion_09_community_2016_tables():
    path = os.environ.get("SOLAR_COOP_PECAN2016")
    if not path:
        _line(9, "2016 community dataset reproduction", "SKIP (set SOLAR_COOP_PECAN2016)")
        pytest.skip("conditional: real dataset not bundled")
    with criterion(9, "2016 community dataset reproduction"):
        dataset = parse_csv(path, fill_gaps=True)
        members = [h for h in dataset.ids if h in PECAN_COMMUNITY_IDS]
        assert len(members) == 80, f"expected the 80 study households, got {len(members)}"
        dataset = community_dataset([dataset.series(h) for h in members])
        prices = PriceSchedule(11.02, 0.57 * 11.02)

        agg = aggregate_series(dataset)
        periods = month_periods(dataset)
        total_q = total_g = 0.0
        for month, period in periods:
            expected = PECAN_MONTHLY_KWH.get(month)
            assert expected is not None, f"unexpected month {month}"
            totals = energy_totals(agg.slice(period), Mechanism.FIT)
            assert totals.q_total == pytest.approx(expected[0], abs=0.01)
            assert totals.g_total == pytest.approx(expected[1], abs=0.01)
            assert totals.net == pytest.approx(expected[2], abs=0.01)
            total_q += totals.q_total
            total_g += totals.g_total
        assert total_q == pytest.approx(PECAN_TOTAL_KWH[0], abs=0.01)
        assert total_g == pytest.approx(PECAN_TOTAL_KWH[1], abs=0.01)
        assert total_q - total_g == pytest.approx(PECAN_TOTAL_KWH[2], abs=0.01)

        for mechanism, (exp_a, exp_b, exp_c) in (
            (Mechanism.NM, PECAN_NM_TOTALS_USD),
            (Mechanism.NPS, PECAN_NPS_TOTALS_USD),
        ):
            a = b = 0.0
            for _, period in periods:
                report = savings(dataset, prices, period, None, mechanism)
                a += sum(r.standalone_cost for r in report.rows)
                b += sum(r.allocated for r in report.rows)
            assert a / 100 == pytest.approx(exp_a, abs=0.01)
            assert b / 100 == pytest.approx(exp_b, abs=0.01)
            assert (a - b) / 100 == pytest.approx(exp_c, abs=0.01)
            pct = 100.0 * (a - b) / abs(a)
            if mechanism is Mechanism.NPS:
                assert pct == pytest.approx(PECAN_NPS_TOTAL_PCT, abs=0.01)
            else:
                assert 100.0 * (a - b) / abs(b) == pytest.approx(
                    PECAN_NM_TOTAL_PCT_AS_PRINTED, abs=0.01
                )
                assert pct == pytest.approx(100.0 * 1636.52 / 42973.74, abs=0.02)


def test_criterion_10_performance_n16():
    with criterion(10, "n=16 month-long game builds and checks under 10s"):
        data = synth_community(16, 2976, seed=1600)
        prices = PriceSchedule(2.0, 1.0)
        started = time.perf_counter()
        game = build_cost_game(data, Mechanism.NPS, prices)
        report = check_subadditivity(game)
        elapsed = time.perf_counter() - started
        assert report.holds
        assert elapsed < 10.0, f"took {elapsed:.2f}s"

        # enumeration is exact: spot-check masks against direct aggregation
        rng = np.random.default_rng(7)
        for mask in rng.integers(1, 1 << 16, size=40):
            members = game.members_of(int(mask))
            direct = cost_of(aggregate_series(data, members), Mechanism.NPS, prices)
            assert abs(direct - float(game.costs[mask])) <= TOL_CENTS

        # and deterministic: a rebuild reproduces the table bit for bit
        rebuilt = build_cost_game(data, Mechanism.NPS, prices)
        assert np.array_equal(game.costs, rebuilt.costs)
