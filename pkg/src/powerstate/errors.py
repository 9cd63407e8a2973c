"""Exception hierarchy.

Every error raised by the library derives from :class:`PowerStateError`. The
three intermediate classes map onto CLI exit codes: configuration problems
exit 2, data problems exit 3, numerical failures exit 4.
"""


class PowerStateError(Exception):
    exit_code = 1


class ConfigError(PowerStateError):
    exit_code = 2


class DataError(PowerStateError):
    exit_code = 3


class NumericalError(PowerStateError):
    exit_code = 4


class MissingColumn(DataError):
    def __init__(self, name):
        super().__init__(f"required column missing: {name!r}")
        self.name = name


class TimestampParse(DataError):
    def __init__(self, row, text=None):
        msg = f"unreadable timestamp at data row {row}"
        if text is not None:
            msg += f": {text!r}"
        super().__init__(msg)
        self.row = row
        self.text = text


class EmptyFile(DataError):
    pass


class InvalidRange(DataError):
    pass


class UnfillableGap(DataError):
    """No donor and no usable fallback for some grid cells.

    ``timestamps`` lists the affected grid points; ``partial`` holds the frame
    as far as it could be filled (NaN where nothing was found).
    """

    def __init__(self, timestamps, partial=None):
        ts = list(timestamps)
        super().__init__(f"{len(ts)} grid points could not be filled")
        self.timestamps = ts
        self.partial = partial


class EmptyWindowSpan(DataError):
    pass


class FeatureMismatch(DataError):
    def __init__(self, expected, got):
        super().__init__(f"feature mismatch: expected {list(expected)}, got {list(got)}")
        self.expected = list(expected)
        self.got = list(got)


class LengthMismatch(DataError):
    pass


class TooFewSamples(DataError):
    pass


class InvalidProfile(ConfigError):
    pass


class SingleCluster(NumericalError):
    pass


class SingleClass(NumericalError):
    pass


class RankDeficient(NumericalError):
    """Raised only on request; by default PCA warns and pads instead."""
