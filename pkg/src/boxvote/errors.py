"""Exception hierarchy shared across the toolkit.

Grouped into families so the CLI can map each family to a distinct exit code.
"""

from __future__ import annotations


class BoxvoteError(Exception):
    """Base class for all toolkit errors."""


class DataError(BoxvoteError):
    """Malformed or out-of-range input data (parse family)."""


class ParseError(DataError):
    """Structurally malformed input; carries the offending line number."""

    def __init__(self, message: str, *, line: int | None = None, path: str | None = None):
        self.line = line
        self.path = path
        prefix = ""
        if path is not None:
            prefix += f"{path}:"
        if line is not None:
            prefix += f"line {line}: "
        super().__init__(prefix + message)


class RangeError(ParseError):
    """Well-formed value outside its documented range (confidence, F1, box order)."""


class IncompleteProfile(DataError):
    """Skill profile is missing (model, class) entries."""

    def __init__(self, missing: list[tuple[str, int]]):
        self.missing = list(missing)
        pairs = ", ".join(f"({m}, class {c})" for m, c in self.missing)
        super().__init__(f"skill profile incomplete; missing entries: {pairs}")


class MissingImageSize(DataError):
    """Normalized-coordinate ingestion requires image dimensions that were not supplied."""


class ValidationError(BoxvoteError):
    """Inputs violate a documented contract (validation family)."""


class UnknownClass(ValidationError):
    """A detection references a class the skill profile does not cover."""


class ZeroWeight(ValidationError):
    """Both fusion scores are zero; a weighted box average is undefined."""


class MissingSource(ValidationError):
    """Requested detection source is absent from the dataset."""


class PackingInfeasible(ValidationError):
    """Scenario generation could not place the requested boxes within bounds."""


class GridTooLarge(BoxvoteError):
    """Sweep grid exceeds the configured point cap."""
