"""Exception hierarchy shared across the package.

Two branches matter for the CLI: InputError maps to exit code 1 (bad or
unusable input), InvariantError maps to exit code 2 (session state that
breaks a documented invariant).
"""


class SourcererError(Exception):
    """Base class for every error raised by this package."""


class InputError(SourcererError):
    """The caller supplied input we cannot work with."""


class InvariantError(SourcererError):
    """A documented invariant does not hold."""


class UnknownTool(InputError):
    """Tool id has no adapter and is not 'generic'."""


class UnsupportedReport(InputError):
    """Payload is not parseable as the adapter's interchange format."""


class MalformedManifest(InputError):
    """Not well-formed XML, or the root element is not <manifest>."""


class MalformedProfile(InputError):
    """App profile file is missing required fields or is not valid JSON."""


class MalformedDataFile(InputError):
    """Taxonomy, lexicon, catalog, category map, rules or weights file is invalid."""


class MalformedKB(InputError):
    """Mitigation KB file is invalid."""


class DanglingCategory(MalformedKB):
    """A KB entry's applies_to references a category absent from the taxonomy."""


class DuplicateTool(InputError):
    """Two finding lists (or report payloads) claim the same tool id."""


class ConfigInvalid(InputError):
    """Session configuration is unusable (e.g. threshold exceeds tool count)."""


class CorruptSession(InputError):
    """Session file failed its schema or checksum check."""


class EmptyCorpus(InputError):
    """Corpus statistics need at least one session."""


class UnknownEntity(InputError):
    """An event or request references an id that does not exist."""


class BindFailure(SourcererError):
    """The triage service could not bind its address."""


class IllegalTransition(InvariantError):
    """The requested state change would break a session invariant."""


class InvalidSession(InvariantError):
    """validate_session reported violations."""

    def __init__(self, violations: list[str]):
        self.violations = violations
        super().__init__("; ".join(violations))
