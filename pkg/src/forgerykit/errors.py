"""Exception hierarchy shared across the toolkit."""


class ForgeryKitError(Exception):
    """Base class for all toolkit errors."""


class ParameterError(ForgeryKitError, ValueError):
    """An argument is outside the operation's contract."""


class NumericError(ForgeryKitError, ArithmeticError):
    """Non-finite values reached a numeric routine."""


class RecipeInapplicable(ForgeryKitError):
    """A generation recipe cannot be applied to this particular source."""


class InputError(ForgeryKitError):
    """User-supplied file or table is unusable (maps to CLI exit code 1)."""


# landmark sidecars

class LandmarkError(InputError):
    pass


class LandmarkFileMissing(LandmarkError, FileNotFoundError):
    pass


class LandmarkParseError(LandmarkError):
    pass


class LandmarkCountError(LandmarkError):
    pass


class DegenerateBoxError(ForgeryKitError):
    """A region box has zero area after clamping to the image."""


# cascade files

class CascadeError(InputError):
    pass


class CascadeParseError(CascadeError):
    pass


class UnsupportedCascadeError(CascadeError):
    pass


class CascadeGeometryError(CascadeError):
    pass


# batch layer

class PlanError(InputError):
    pass


class UnfulfillableEntry(PlanError):
    pass
