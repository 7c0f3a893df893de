"""Exception hierarchy.

The CLI maps :class:`DataError` to exit code 2 and
:class:`NumericalDegeneracyError` to exit code 3.
"""


class SmiselectError(Exception):
    pass


class DataError(SmiselectError, ValueError):
    """Malformed or inconsistent input data."""


class AudioDecodeError(DataError):
    pass


class UnsupportedEncodingError(AudioDecodeError):
    pass


class EmptyAudioError(AudioDecodeError):
    pass


class ClipTooShortError(DataError):
    pass


class ManifestError(DataError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class FeaturizationError(DataError):
    def __init__(self, failures):
        self.failures = dict(failures)
        lines = [f"  {rid}: {err}" for rid, err in self.failures.items()]
        super().__init__(
            f"{len(self.failures)} record(s) failed featurization:\n" + "\n".join(lines))


class NumericalDegeneracyError(SmiselectError, ArithmeticError):
    """A factorization hit a nonpositive pivot or a bandwidth collapsed."""
