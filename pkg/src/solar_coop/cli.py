"""solar-coop command line: ingest, bill, allocate, compare, game-check, report.

Exit codes: 0 success, 1 theorem-check failure, 2 usage/data error,
3 player-count cap exceeded, 4 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import os
import re
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import allocation as alloc
from . import coopgame
from .billing import (
    Mechanism,
    PriceSchedule,
    aggregate_series,
    cost_of,
    energy_totals,
    to_integer_cents,
)
from .errors import EmptyCoalition, SolarCoopError, TooManyPlayers
from .meterdata import (
    BillingPeriod,
    CommunityDataset,
    community_dataset,
    month_periods,
    parse_csv,
    synth_community,
    validate_alignment,
    window_periods,
)
from .report import Column, Table, distribution_table, render_band_figure, summarize, write_table

DEFAULT_LAMBDA = 11.02  # cents/kWh
MU_FACTOR = 0.57  # default mu = 0.57 * lambda

_SYNTH_RE = re.compile(r"^synth:(\d+)x(\d+)$")
_MONTH_RE = re.compile(r"^\d{4}-\d{2}$")

_CONFIG_KEYS = {
    "input": "input",
    "mechanism": "mechanism",
    "lambda": "lam",
    "mu": "mu",
    "period": "period",
    "coalition": "coalition",
    "format": "format",
    "svg": "svg",
    "fill-gaps": "fill_gaps",
    "fill_gaps": "fill_gaps",
    "seed": "seed",
    "out": "out",
    "window": "window",
    "detail": "detail",
}


class UsageError(SolarCoopError):
    pass


@dataclass(frozen=True)
class RunConfig:
    input: str
    mechanism: Mechanism
    prices: PriceSchedule
    period: str  # "all" or YYYY-MM
    coalition: str  # "all" | "each" | comma-separated ids
    format: str  # csv | json | md
    svg: bool
    fill_gaps: bool
    seed: int
    out: Path
    window: int | None
    detail: bool


def _load_config_file(path: str) -> dict:
    values: dict[str, object] = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        dest = _CONFIG_KEYS.get(key)
        if dest is None:
            raise UsageError(f"{path}:{lineno}: unknown config key {key!r}")
        if dest in ("svg", "fill_gaps", "detail"):
            values[dest] = value.lower() in ("1", "true", "yes", "on")
        elif dest in ("lam", "mu"):
            values[dest] = float(value)
        elif dest == "seed":
            values[dest] = int(value)
        elif dest == "window":
            values[dest] = int(value) if value else None
        else:
            values[dest] = value
    return values


def _build_parser() -> argparse.ArgumentParser:
    # all defaults are None sentinels; _make_config resolves the precedence
    # flag > config file > environment/builtin
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--input", default=None,
                        help="CSV path or synth:NxT (default: $SOLAR_COOP_DATA)")
    common.add_argument("--mechanism", choices=["fit", "nm", "nps"], default=None,
                        help="billing mechanism (default nm)")
    common.add_argument("--lambda", dest="lam", type=float, default=None,
                        help=f"retail price, cents/kWh (default {DEFAULT_LAMBDA})")
    common.add_argument("--mu", type=float, default=None,
                        help=f"sell-back price, cents/kWh (default {MU_FACTOR}*lambda)")
    common.add_argument("--period", default=None, help="YYYY-MM or 'all' (default all)")
    common.add_argument("--coalition", default=None,
                        help="'all', 'each', or comma-separated household ids")
    common.add_argument("--format", choices=["csv", "json", "md"], default=None)
    common.add_argument("--svg", action="store_true", default=None,
                        help="also render SVG figures (report)")
    common.add_argument("--fill-gaps", dest="fill_gaps", action="store_true", default=None,
                        help="zero-fill gaps instead of rejecting them")
    common.add_argument("--seed", type=int, default=None, help="RNG seed for synth input")
    common.add_argument("--out", default=None, help="output directory (report)")
    common.add_argument("--window", type=int, default=None,
                        help="bill in fixed windows of N intervals instead of months")
    common.add_argument("--detail", action="store_true", default=None,
                        help="per-household table instead of monthly (allocate, compare)")
    common.add_argument("--config", default=None, help="key=value config file; flags override")

    parser = argparse.ArgumentParser(
        prog="solar-coop",
        description="Billing and cooperative-game cost sharing for rooftop-PV communities.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("ingest", parents=[common], help="parse and validate a dataset")
    sub.add_parser("bill", parents=[common], help="monthly energy and cost per entity")
    sub.add_parser("allocate", parents=[common], help="sharing savings under nm or nps")
    sub.add_parser("compare", parents=[common], help="net-metering vs net-purchase-and-sale")
    sub.add_parser("game-check", parents=[common],
                   help="subadditivity, core membership, and Shapley verdict (JSON)")
    sub.add_parser("report", parents=[common], help="write tables and figures to files")
    return parser


def _make_config(args: argparse.Namespace, file_values: dict) -> RunConfig:
    def pick(dest, fallback):
        flag = getattr(args, dest)
        if flag is not None:
            return flag
        return file_values.get(dest, fallback)

    lam = pick("lam", DEFAULT_LAMBDA)
    mu = pick("mu", MU_FACTOR * lam)
    source = pick("input", os.environ.get("SOLAR_COOP_DATA"))
    if source is None:
        raise UsageError("no input: pass --input PATH, synth:NxT, or set $SOLAR_COOP_DATA")
    return RunConfig(
        input=source,
        mechanism=Mechanism(pick("mechanism", "nm")),
        prices=PriceSchedule(lam, mu),
        period=pick("period", "all"),
        coalition=pick("coalition", "all"),
        format=pick("format", "csv"),
        svg=bool(pick("svg", False)),
        fill_gaps=bool(pick("fill_gaps", False)),
        seed=int(pick("seed", 0)),
        out=Path(pick("out", "solar-coop-report")),
        window=pick("window", None),
        detail=bool(pick("detail", False)),
    )


def _load_dataset(cfg: RunConfig) -> CommunityDataset:
    match = _SYNTH_RE.match(cfg.input)
    if match:
        n, t = int(match.group(1)), int(match.group(2))
        return synth_community(n, t, seed=cfg.seed)
    return parse_csv(cfg.input, fill_gaps=cfg.fill_gaps)


def _coalition_ids(cfg: RunConfig, dataset: CommunityDataset) -> list[str] | None:
    """None means all households; 'each' is handled by the caller."""
    spec = cfg.coalition.strip()
    if spec == "all":
        return None
    raw = spec[4:] if spec.startswith("ids:") else spec
    ids = [token.strip() for token in raw.split(",") if token.strip()]
    if not ids:
        raise EmptyCoalition(f"empty coalition spec: {cfg.coalition!r}")
    for hid in ids:
        dataset.series(hid)
    return ids


def _periods(cfg: RunConfig, dataset: CommunityDataset) -> list[tuple[str, BillingPeriod]]:
    if cfg.window is not None:
        periods = window_periods(dataset, cfg.window)
    else:
        periods = month_periods(dataset)
    if cfg.period == "all":
        return periods
    selected = [(label, p) for label, p in periods if label == cfg.period]
    if selected:
        return selected
    if not _MONTH_RE.match(cfg.period) and cfg.window is None:
        raise UsageError(f"--period must be YYYY-MM or 'all', got {cfg.period!r}")
    raise UsageError(f"period {cfg.period} does not intersect the dataset span")


def _emit(table: Table, cfg: RunConfig) -> None:
    text = table.render(cfg.format)
    sys.stdout.write(text if text.endswith("\n") else text + "\n")


# --- commands ------------------------------------------------------------

def cmd_ingest(cfg: RunConfig) -> int:
    dataset = _load_dataset(cfg)
    violations = validate_alignment(dataset)
    agg = aggregate_series(dataset)
    grid = dataset.grid
    summary = {
        "households": len(dataset.ids),
        "intervals": grid.length,
        "resolution_minutes": grid.resolution.total_seconds() / 60,
        "span_start": grid.start.isoformat(),
        "span_end": grid.end.isoformat(),
        "total_consumption_kwh": round(float(agg.consumption.sum()), 6),
        "total_generation_kwh": round(float(agg.generation.sum()), 6),
        "alignment_violations": [str(v) for v in violations],
    }
    if cfg.format == "json":
        print(json.dumps({"schema_version": "v1", **summary}, sort_keys=True))
    else:
        for key, value in summary.items():
            print(f"{key}: {value}")
    return 0


def _bill_entities(cfg: RunConfig, dataset: CommunityDataset) -> list[tuple[str, list[str] | None]]:
    if cfg.coalition.strip() == "each":
        return [(hid, [hid]) for hid in sorted(dataset.ids)]
    ids = _coalition_ids(cfg, dataset)
    label = "community" if ids is None else "+".join(sorted(ids))
    return [(label, ids)]


def cmd_bill(cfg: RunConfig) -> int:
    dataset = _load_dataset(cfg)
    periods = _periods(cfg, dataset)
    columns = (
        Column("entity"), Column("month"),
        Column("consumption", "kwh"), Column("generation", "kwh"),
        Column("net", "kwh"), Column("cost", "money"),
    )
    rows = []
    for label, ids in _bill_entities(cfg, dataset):
        agg = aggregate_series(dataset, ids)
        total_q = total_g = total_cost = 0.0
        for month, period in periods:
            totals = energy_totals(agg.slice(period), Mechanism.FIT)
            cost = cost_of(agg, cfg.mechanism, cfg.prices, period)
            rows.append((label, month, totals.q_total, totals.g_total, totals.net, cost))
            total_q += totals.q_total
            total_g += totals.g_total
            total_cost += cost
        rows.append((label, "total", total_q, total_g, total_q - total_g, total_cost))
    _emit(Table("bill_monthly", columns, tuple(rows)), cfg)
    return 0


def _savings_tables(cfg: RunConfig, dataset: CommunityDataset) -> tuple[Table, Table]:
    """Monthly and per-household savings tables for the configured mechanism."""
    if cfg.mechanism not in (Mechanism.NM, Mechanism.NPS):
        raise UsageError("allocate requires --mechanism nm or nps")
    if cfg.coalition.strip() == "each":
        raise UsageError("allocate requires a sharing group; 'each' is only valid for bill")
    ids = _coalition_ids(cfg, dataset)
    periods = _periods(cfg, dataset)
    mech = cfg.mechanism.value

    monthly_rows = []
    by_household: dict[str, list[float]] = {}
    tot_a = tot_b = 0.0
    for month, period in periods:
        rep = alloc.savings(dataset, cfg.prices, period, ids, cfg.mechanism)
        a = sum(r.standalone_cost for r in rep.rows)
        b = sum(r.allocated for r in rep.rows)
        monthly_rows.append((month, a, b, a - b, _pct(a - b, a)))
        tot_a += a
        tot_b += b
        for r in rep.rows:
            cell = by_household.setdefault(r.household_id, [0.0, 0.0])
            cell[0] += r.standalone_cost
            cell[1] += r.allocated
    monthly = Table(
        f"savings_monthly_{mech}",
        (Column("month"), Column("cost_without_sharing", "money"),
         Column("cost_with_sharing", "money"), Column("savings", "money"),
         Column("savings", "pct")),
        tuple(monthly_rows),
        totals=("total", tot_a, tot_b, tot_a - tot_b, _pct(tot_a - tot_b, tot_a)),
    )

    detail_rows = []
    for hid, (a, b) in by_household.items():
        detail_rows.append((hid, a, b, a - b, _pct(a - b, a)))
    detail_rows.sort(key=lambda r: (-(r[4] if r[4] is not None else float("-inf")), r[0]))
    households = Table(
        f"savings_households_{mech}",
        (Column("household"), Column("cost_without_sharing", "money"),
         Column("cost_with_sharing", "money"), Column("savings", "money"),
         Column("savings", "pct")),
        tuple(detail_rows),
        totals=("total", tot_a, tot_b, tot_a - tot_b, _pct(tot_a - tot_b, tot_a)),
    )
    return monthly, households


def _pct(saving: float, baseline: float) -> float | None:
    if baseline == 0:
        return None
    return 100.0 * saving / abs(baseline)


def cmd_allocate(cfg: RunConfig) -> int:
    dataset = _load_dataset(cfg)
    monthly, households = _savings_tables(cfg, dataset)
    _emit(households if cfg.detail else monthly, cfg)
    return 0


def cmd_compare(cfg: RunConfig) -> int:
    dataset = _load_dataset(cfg)
    if cfg.coalition.strip() == "each":
        raise UsageError("compare requires a sharing group; 'each' is only valid for bill")
    ids = _coalition_ids(cfg, dataset)
    periods = _periods(cfg, dataset)

    if cfg.detail:
        acc: dict[str, list[float]] = {}
        for _, period in periods:
            for c in alloc.compare_savings(dataset, cfg.prices, period, ids):
                cell = acc.setdefault(c.household_id, [0.0, 0.0])
                cell[0] += c.saving_nm
                cell[1] += c.saving_nps
        rows = tuple(
            (hid, nm, nps, nps - nm) for hid, (nm, nps) in sorted(acc.items())
        )
        table = Table(
            "savings_comparison",
            (Column("household"), Column("saving_nm", "money"),
             Column("saving_nps", "money"), Column("nps_minus_nm", "money")),
            rows,
            totals=("total",
                    sum(r[1] for r in rows), sum(r[2] for r in rows), sum(r[3] for r in rows)),
        )
    else:
        rows = []
        agg = aggregate_series(dataset, ids)
        tot_nm = tot_nps = 0.0
        for month, period in periods:
            c_nm = cost_of(agg, Mechanism.NM, cfg.prices, period)
            c_nps = cost_of(agg, Mechanism.NPS, cfg.prices, period)
            gap = alloc.mechanism_cost_gap(dataset, cfg.prices, period, ids)
            rows.append((month, c_nm, c_nps, gap))
            tot_nm += c_nm
            tot_nps += c_nps
        table = Table(
            "mechanism_comparison",
            (Column("month"), Column("cost_nm", "money"),
             Column("cost_nps", "money"), Column("nps_minus_nm", "money")),
            tuple(rows),
            totals=("total", tot_nm, tot_nps, tot_nps - tot_nm),
        )
    _emit(table, cfg)
    return 0


def _single_period(cfg: RunConfig, dataset: CommunityDataset) -> BillingPeriod:
    if cfg.period == "all":
        return dataset.span()
    selected = _periods(cfg, dataset)
    return selected[0][1]


def cmd_game_check(cfg: RunConfig) -> int:
    dataset = _load_dataset(cfg)
    if cfg.coalition.strip() == "each":
        raise UsageError("game-check requires a player set; 'each' is only valid for bill")
    ids = _coalition_ids(cfg, dataset)
    if ids is not None:
        dataset = community_dataset([dataset.series(h) for h in ids])
    period = _single_period(cfg, dataset)

    verdict: dict = {
        "schema_version": "v1",
        "players": sorted(dataset.ids),
        "lambda_cents_per_kwh": cfg.prices.lam,
        "mu_cents_per_kwh": cfg.prices.mu,
        "price_order_favorable": cfg.prices.favorable,
        "period": {"start": period.t0.isoformat(), "end": period.tf.isoformat()},
        "mechanisms": {},
        "shapley": None,
    }
    ok = True
    games = {}
    for mechanism, rule in ((Mechanism.NM, alloc.allocate_nm), (Mechanism.NPS, alloc.allocate_nps)):
        game = coopgame.build_cost_game(dataset, mechanism, cfg.prices, period)
        games[mechanism] = game
        sub = coopgame.check_subadditivity(game)
        vector = rule(dataset, cfg.prices, period)
        core = coopgame.check_core_membership(game, vector)
        ok = ok and sub.holds and core.in_core
        witness = None
        if sub.witness is not None:
            witness = {
                "left": list(sub.witness.left),
                "right": list(sub.witness.right),
                "left_cost_cents": to_integer_cents(sub.witness.left_cost),
                "right_cost_cents": to_integer_cents(sub.witness.right_cost),
                "union_cost_cents": to_integer_cents(sub.witness.union_cost),
            }
        verdict["mechanisms"][mechanism.value] = {
            "subadditive": sub.holds,
            "subadditivity_witness": witness,
            "allocation_in_core": core.in_core,
            "allocation_budget_gap_cents": to_integer_cents(core.budget_gap),
            "core_violations": [
                {
                    "members": list(v.members),
                    "allocated_cents": to_integer_cents(v.allocated),
                    "coalition_cost_cents": to_integer_cents(v.coalition_cost),
                }
                for v in core.violations[:20]
            ],
        }

    if len(dataset.ids) <= coopgame.MAX_SHAPLEY_PLAYERS:
        shapley_doc = {}
        for mechanism, game in games.items():
            phi = coopgame.shapley_value(game)
            gap = phi.total - float(game.costs[game.grand_mask])
            balanced = abs(gap) <= coopgame.TOL_CENTS
            ok = ok and balanced
            shapley_doc[mechanism.value] = {
                "values_cents": {h: to_integer_cents(v) for h, v in phi.entries.items()},
                "budget_balanced": balanced,
            }
        verdict["shapley"] = shapley_doc

    verdict["checks_passed"] = ok
    print(json.dumps(verdict, sort_keys=True))
    return 0 if ok else 1


def cmd_report(cfg: RunConfig) -> int:
    dataset = _load_dataset(cfg)
    if cfg.mechanism not in (Mechanism.NM, Mechanism.NPS):
        raise UsageError("report requires --mechanism nm or nps")
    if cfg.coalition.strip() == "each":
        raise UsageError("report requires a sharing group; 'each' is only valid for bill")
    ids = _coalition_ids(cfg, dataset)
    periods = _periods(cfg, dataset)
    mech = cfg.mechanism.value
    cfg.out.mkdir(parents=True, exist_ok=True)
    written = []

    agg = aggregate_series(dataset, ids)
    energy_rows = []
    tot_q = tot_g = 0.0
    for month, period in periods:
        totals = energy_totals(agg.slice(period), Mechanism.FIT)
        energy_rows.append((month, totals.q_total, totals.g_total, totals.net))
        tot_q += totals.q_total
        tot_g += totals.g_total
    energy = Table(
        "energy_monthly",
        (Column("month"), Column("consumption", "kwh"),
         Column("generation", "kwh"), Column("net", "kwh")),
        tuple(energy_rows),
        totals=("total", tot_q, tot_g, tot_q - tot_g),
    )
    written.append(write_table(energy, cfg.out, cfg.format))

    monthly, households = _savings_tables(cfg, dataset)
    written.append(write_table(monthly, cfg.out, cfg.format))
    written.append(write_table(households, cfg.out, cfg.format))

    # month x household matrices of allocated cost and saving
    member_ids = sorted(dataset.ids) if ids is None else sorted(ids)
    labels = [month for month, _ in periods]
    cost_matrix = np.zeros((len(periods), len(member_ids)))
    saving_matrix = np.zeros_like(cost_matrix)
    for k, (_, period) in enumerate(periods):
        rep = alloc.savings(dataset, cfg.prices, period, ids, cfg.mechanism)
        for r in rep.rows:
            j = member_ids.index(r.household_id)
            cost_matrix[k, j] = r.allocated
            saving_matrix[k, j] = r.saving

    for stem, matrix in (("cost", cost_matrix), ("savings", saving_matrix)):
        per_prosumer = [summarize(hid, matrix[:, j]) for j, hid in enumerate(member_ids)]
        per_month = [summarize(label, matrix[k, :]) for k, label in enumerate(labels)]
        written.append(write_table(
            distribution_table(f"{stem}_per_prosumer_{mech}", per_prosumer), cfg.out, cfg.format))
        written.append(write_table(
            distribution_table(f"{stem}_per_month_{mech}", per_month), cfg.out, cfg.format))
        if cfg.svg:
            title = ("Monthly cost with sharing" if stem == "cost"
                     else "Monthly savings from sharing")
            written.append(render_band_figure(
                cfg.out / f"{stem}_distribution_{mech}.svg",
                [(f"{title} per prosumer", per_prosumer),
                 (f"{title} per month", per_month)],
                ylabel="USD",
                title=f"{title} ({mech})",
            ))

    for path in written:
        print(path)
    return 0


_COMMANDS = {
    "ingest": cmd_ingest,
    "bill": cmd_bill,
    "allocate": cmd_allocate,
    "compare": cmd_compare,
    "game-check": cmd_game_check,
    "report": cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = _build_parser()
    try:
        try:
            args = parser.parse_args(argv)
        except SystemExit as exc:
            return int(exc.code or 0)
        file_values = _load_config_file(args.config) if args.config else {}
        cfg = _make_config(args, file_values)
        return _COMMANDS[args.command](cfg)
    except TooManyPlayers as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except (SolarCoopError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
