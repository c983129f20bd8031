"""Billing and cooperative-game cost sharing for rooftop-PV communities."""

from .billing import (
    EnergyTotals,
    Mechanism,
    PriceSchedule,
    aggregate_series,
    cost_of,
    energy_totals,
    format_dollars,
    net_profile,
    to_integer_cents,
)
from .allocation import (
    AllocationVector,
    AxiomReport,
    SavingsReport,
    allocate_nm,
    allocate_nps,
    audit_axioms,
    compare_savings,
    mechanism_cost_gap,
    savings,
    search_shapley_axiom_violation,
)
from .coopgame import (
    CoreReport,
    CostGame,
    SubadditivityReport,
    build_cost_game,
    check_core_membership,
    check_subadditivity,
    game_to_json,
    shapley_value,
)
from .meterdata import (
    BillingPeriod,
    CommunityDataset,
    CsvSchema,
    MeterInterval,
    MeterSeries,
    SynthProfile,
    TimeGrid,
    community_dataset,
    month_periods,
    parse_csv,
    render_csv,
    slice_period,
    synth_community,
    validate_alignment,
    window_periods,
)
from . import errors

__version__ = "1.0.0"

__all__ = [
    "AllocationVector",
    "AxiomReport",
    "BillingPeriod",
    "CommunityDataset",
    "CoreReport",
    "CostGame",
    "CsvSchema",
    "EnergyTotals",
    "Mechanism",
    "MeterInterval",
    "MeterSeries",
    "PriceSchedule",
    "SavingsReport",
    "SubadditivityReport",
    "SynthProfile",
    "TimeGrid",
    "aggregate_series",
    "allocate_nm",
    "allocate_nps",
    "audit_axioms",
    "build_cost_game",
    "check_core_membership",
    "check_subadditivity",
    "community_dataset",
    "compare_savings",
    "cost_of",
    "energy_totals",
    "errors",
    "format_dollars",
    "game_to_json",
    "mechanism_cost_gap",
    "month_periods",
    "net_profile",
    "parse_csv",
    "render_csv",
    "savings",
    "search_shapley_axiom_violation",
    "shapley_value",
    "slice_period",
    "synth_community",
    "to_integer_cents",
    "validate_alignment",
    "window_periods",
]
