"""Exception hierarchy shared by every stage of the pipeline."""


class PatentKGError(Exception):
    """Base class; ``module`` names the stage that raised it."""

    module = "patentkg"

    def __str__(self):
        return f"[{self.module}] {super().__str__()}"


class ParseError(PatentKGError, ValueError):
    module = "corpus"


class DuplicateIdError(PatentKGError, ValueError):
    module = "corpus"


class FormatError(PatentKGError, ValueError):
    module = "io"


class RangeError(PatentKGError, ValueError):
    module = "kg"


class EntityLookupError(PatentKGError, KeyError):
    module = "kg"


class ShapeError(PatentKGError, ValueError):
    module = "numcore"


class NumericError(PatentKGError, ArithmeticError):
    module = "numcore"


class InputError(PatentKGError, ValueError):
    module = "linkpred"


class SamplingError(PatentKGError, ValueError):
    module = "linkpred"


class TruncationError(PatentKGError, RuntimeError):
    module = "patents"


class ConfigError(PatentKGError, ValueError):
    module = "config"
