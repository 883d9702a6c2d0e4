"""Exception and warning types shared across the package."""


class WinpropError(Exception):
    """Base class for data and runtime errors raised by winprop."""


class SchemaError(WinpropError):
    pass


class SchemaMismatchError(WinpropError):
    def __init__(self, attribute, message):
        self.attribute = attribute
        super().__init__(f"attribute {attribute!r}: {message}")


class RowError(WinpropError):
    def __init__(self, line, message):
        self.line = line
        super().__init__(f"line {line}: {message}")


class DuplicateSnapshotError(WinpropError):
    def __init__(self, key, lines):
        self.key = key
        self.lines = tuple(lines)
        lead_id, quarter, week = key
        super().__init__(
            f"duplicate snapshot ({lead_id}, {quarter}, week {week}) "
            f"on lines {', '.join(str(n) for n in self.lines)}"
        )


class ConfigurationError(WinpropError):
    pass


class PolicyError(WinpropError):
    pass


class MissingQuarterError(WinpropError):
    def __init__(self, quarter, what="data"):
        self.quarter = quarter
        super().__init__(f"no {what} for quarter {quarter}")


class DegenerateLabelsError(WinpropError):
    pass


class NumericalError(WinpropError):
    def __init__(self, iteration, message="non-finite loss"):
        self.iteration = iteration
        super().__init__(f"{message} at iteration {iteration}")


class ModelFormatError(WinpropError):
    pass


class UnsupportedVersionError(ModelFormatError):
    pass


class UndefinedMetricError(WinpropError):
    pass


class MissingRatingError(WinpropError):
    def __init__(self, lead_ids):
        self.lead_ids = sorted(set(lead_ids))
        super().__init__("missing seller_rating for leads: " + ", ".join(self.lead_ids))


class UnmatchedLeadsWarning(UserWarning):
    """Snapshots whose lead has no outcome record were dropped."""


class SchemaMismatchWarning(UserWarning):
    """Score-time data does not match the vocabulary the model was fitted on."""


class RareCategoryWarning(UserWarning):
    pass


class ConvergenceWarning(UserWarning):
    pass
