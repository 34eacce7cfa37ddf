"""Exception classes. Every error carries a stable ``code`` string."""


class NehariError(Exception):
    code = "ERROR"


class OrderWindowError(NehariError, ValueError):
    code = "ORDER_WINDOW"


class BadBoundsError(NehariError, ValueError):
    code = "BAD_BOUNDS"


class ParseError(NehariError, ValueError):
    code = "PARSE_ERROR"

    def __init__(self, message, position):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class EvalError(NehariError, ValueError):
    code = "EVAL_ERROR"


class NonConvergedError(NehariError, RuntimeError):
    code = "NONCONVERGED"


class InfeasibleError(NehariError, ValueError):
    code = "INFEASIBLE"


class WrongRegimeError(NehariError, ValueError):
    code = "WRONG_REGIME"


class RegimeMismatchError(NehariError, KeyError):
    code = "REGIME_MISMATCH"

    def __str__(self):
        return str(self.args[0]) if self.args else self.code


class ZeroFunctionError(NehariError, ValueError):
    code = "ZERO_FUNCTION"


class WrongClassError(NehariError, ValueError):
    code = "WRONG_CLASS"


class NoRootError(NehariError, ValueError):
    code = "NO_ROOT"


class ThresholdExceededError(NehariError, ValueError):
    code = "THRESHOLD_EXCEEDED"

    def __init__(self, message, threshold=None):
        super().__init__(message)
        self.threshold = threshold


class NotAdmissibleError(NehariError, ValueError):
    code = "NOT_ADMISSIBLE"


class NoAdmissibleStartError(NehariError, RuntimeError):
    code = "NO_ADMISSIBLE_START"


class EnergyIncreasedError(NehariError, RuntimeError):
    code = "ENERGY_INCREASED"


class BoundViolationError(NehariError, RuntimeError):
    code = "BOUND_VIOLATED"


class ValidationError(NehariError, ValueError):
    """Collects every violation instead of stopping at the first one."""

    code = "VALIDATION_ERROR"

    def __init__(self, messages):
        if isinstance(messages, str):
            messages = [messages]
        self.messages = list(messages)
        super().__init__("; ".join(self.messages))


class ConfigIOError(NehariError, OSError):
    code = "IO_ERROR"


class InvariantViolationError(NehariError, RuntimeError):
    code = "INVARIANT_VIOLATED"


# process exit status per error class; 1 is reserved for unexpected failures
EXIT_CODES = {
    "VALIDATION_ERROR": 2,
    "IO_ERROR": 3,
    "ORDER_WINDOW": 4,
    "BAD_BOUNDS": 4,
    "PARSE_ERROR": 5,
    "EVAL_ERROR": 5,
    "NONCONVERGED": 6,
    "INFEASIBLE": 7,
    "NO_ADMISSIBLE_START": 7,
    "WRONG_REGIME": 8,
    "REGIME_MISMATCH": 8,
    "THRESHOLD_EXCEEDED": 9,
    "NO_ROOT": 10,
    "NOT_ADMISSIBLE": 10,
    "WRONG_CLASS": 10,
    "ZERO_FUNCTION": 10,
    "ENERGY_INCREASED": 11,
    "BOUND_VIOLATED": 11,
    "INVARIANT_VIOLATED": 12,
}


def exit_code_for(exc):
    return EXIT_CODES.get(getattr(exc, "code", None), 1)
