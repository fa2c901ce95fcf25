"""Exception types shared across the package."""


class ContactGraspError(Exception):
    """Base class for all library errors."""


class DegenerateCloud(ContactGraspError):
    """Point cloud is too small or has no usable spatial extent."""


class NoGraspSurface(ContactGraspError):
    """No opposing contact surfaces could be found on the object.

    May carry a best-effort contact set / closure report so batch callers
    can record the attempt instead of dropping the object.
    """

    def __init__(self, msg, best_contacts=None, best_report=None):
        super().__init__(msg)
        self.best_contacts = best_contacts
        self.best_report = best_report


class InvalidContacts(ContactGraspError):
    """Contact set violates its structural invariants."""


class DegenerateContacts(ContactGraspError):
    """Contact layout does not define a usable palm frame."""


class ConfigError(ContactGraspError):
    """Bad configuration value. Carries the offending field path."""

    def __init__(self, field, msg):
        super().__init__(f"{field}: {msg}")
        self.field = field


class SchemaError(ContactGraspError):
    """Record file violates the schema. Carries the 1-based line number."""

    def __init__(self, line, msg):
        super().__init__(f"line {line}: {msg}")
        self.line = line


class MissingCloud(ContactGraspError):
    """A record references a cloud file that cannot be resolved."""


class NonFinite(ContactGraspError):
    """A numeric quantity became NaN or infinite."""


class NonConverged(ContactGraspError):
    """An iterative routine hit its budget without settling."""


class InvalidK(ContactGraspError):
    """Cluster count is out of range for the data."""


class TooShort(ContactGraspError):
    """A trajectory has too few frames for the requested metric."""
