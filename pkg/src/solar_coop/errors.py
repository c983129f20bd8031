"""Exception types shared across the package."""


class SolarCoopError(Exception):
    """Base class for all data and engine errors."""


class MalformedRow(SolarCoopError):
    """A CSV row (or header) could not be interpreted."""


class NegativeEnergy(SolarCoopError):
    """A consumption or generation reading is negative."""


class MixedResolution(SolarCoopError):
    """Interval timestamps of one household do not form a constant-step grid."""


class AlignmentError(SolarCoopError):
    """Households in one file do not share a common time grid."""

    def __init__(self, violations):
        self.violations = list(violations)
        detail = "; ".join(str(v) for v in self.violations)
        super().__init__(f"misaligned households: {detail}")


class PeriodOutOfRange(SolarCoopError):
    """A billing period is empty or extends outside the dataset span."""


class UnalignedBoundary(SolarCoopError):
    """A billing-period boundary does not fall on a grid boundary."""


class UnknownHousehold(SolarCoopError):
    """A coalition references a household id absent from the dataset."""


class EmptyCoalition(SolarCoopError):
    """A coalition must contain at least one household."""


class TooManyPlayers(SolarCoopError):
    """The requested computation is exponential and the player cap was exceeded."""


class DimensionMismatch(SolarCoopError):
    """An allocation vector is not indexed by the game's players."""


class PriceOrderViolated(UserWarning):
    """Sell-back price exceeds the retail price; guarantees tied to the
    favorable price order do not apply."""
