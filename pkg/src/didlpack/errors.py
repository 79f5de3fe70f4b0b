"""Exception hierarchy shared by every didlpack module."""

from __future__ import annotations


class DidlError(Exception):
    """Base class for all didlpack errors."""


# -- model -------------------------------------------------------------------

class NotXml(DidlError):
    """Statement is not XML-typed or carries no element."""


class MissingIdentifier(DidlError):
    pass


class EmptyIdentifier(DidlError):
    pass


class DuplicateIdentifierWarning(UserWarning):
    """More than one DII identifier was found; the first one wins."""


# -- xmlio -------------------------------------------------------------------

class MalformedXml(DidlError):
    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(f"{message}{where}")


class NotDidl(MalformedXml):
    """Root element is not urn:mpeg:mpeg21:2002:02-DIDL-NS DIDL."""


class ProfileShape(DidlError):
    """Document is well formed DIDL but outside the shape the profile models."""


class InvariantViolation(DidlError):
    def __init__(self, invariant: str, location: str = "/"):
        self.invariant = invariant
        self.location = location
        super().__init__(f"{location}: {invariant}")


# -- resources ---------------------------------------------------------------

class InvalidBase64(DidlError):
    pass


class FetchFailed(DidlError):
    def __init__(self, uri: str, cause: object):
        self.uri = uri
        self.cause = cause
        super().__init__(f"cannot fetch {uri}: {cause}")


class SchemeUnsupported(DidlError):
    def __init__(self, uri: str):
        self.uri = uri
        super().__init__(f"unsupported or missing URI scheme: {uri!r}")


class WriteFailed(DidlError):
    pass


class UnsupportedEncoding(DidlError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"unsupported content encoding: {name!r}")


class CorruptStream(DidlError):
    def __init__(self, codec: str, cause: object = None):
        self.codec = codec
        super().__init__(f"corrupt {codec} stream: {cause}")


# -- fixity ------------------------------------------------------------------

class UnsupportedAlgorithm(DidlError):
    def __init__(self, uri: str, reason: str = "not in the algorithm registry"):
        self.uri = uri
        super().__init__(f"{uri}: {reason}")


class EmptyRecordList(DidlError):
    pass


class MalformedFixity(DidlError):
    pass


# -- assembler ---------------------------------------------------------------

class ManifestSyntax(DidlError):
    def __init__(self, message: str, line: int | None = None, pointer: str | None = None):
        self.line = line
        self.pointer = pointer
        where = f"line {line}" if line is not None else (pointer or "")
        super().__init__(f"{where}: {message}" if where else message)


class ManifestSemantics(DidlError):
    def __init__(self, invariant: str):
        self.invariant = invariant
        super().__init__(invariant)


class BuildFailed(DidlError):
    def __init__(self, index: int, cause: Exception):
        self.index = index
        self.cause = cause
        super().__init__(f"resources[{index}]: {cause}")


class ProfileBlocked(DidlError):
    def __init__(self, report):
        self.report = report
        n = sum(1 for f in report.findings if f.severity == "error")
        super().__init__(f"profile validation failed with {n} error(s)")
