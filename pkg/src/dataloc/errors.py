"""Exception hierarchy shared by all modules."""


class DataLocError(Exception):
    """Base class for every domain error raised by the package."""


# ingest

class MalformedLine(DataLocError):
    def __init__(self, line_no: int, reason: str):
        self.line_no = line_no
        self.reason = reason
        super().__init__(f"line {line_no}: {reason}")


class BandChannelMismatch(MalformedLine):
    def __init__(self, line_no: int, channel: int = 0, band: str = ""):
        super().__init__(line_no, f"channel {channel} is not in band {band}")


class EmptySession(DataLocError):
    def __init__(self, position_id: str):
        self.position_id = position_id
        super().__init__(f"session {position_id!r} has no records")


class DuplicatePosition(DataLocError):
    def __init__(self, position_id: str, labels=()):
        self.position_id = position_id
        super().__init__(
            f"position {position_id!r} mapped to conflicting zones {sorted(labels)}"
        )


class EmptyReadings(DataLocError):
    pass


# augment

class InvalidRange(DataLocError):
    pass


class EmptyWindow(DataLocError):
    pass


# features

class EmptyInput(DataLocError):
    pass


class EmptyUniverse(DataLocError):
    pass


class ClassTooSmall(DataLocError):
    def __init__(self, label: str):
        self.label = label
        super().__init__(f"class {label!r} has fewer than 2 rows")


class MissingPosition(DataLocError):
    pass


# forest

class InvalidConfig(DataLocError):
    pass


class SingleClass(DataLocError):
    pass


class EmptyMatrix(DataLocError):
    pass


class DimensionMismatch(DataLocError):
    pass


class VersionMismatch(DataLocError):
    pass


class CorruptModel(DataLocError):
    pass


# harness / sim

class LabelSetMismatch(DataLocError):
    pass


class SampleCountUnreachable(DataLocError):
    pass


class UnknownPosition(DataLocError):
    pass
