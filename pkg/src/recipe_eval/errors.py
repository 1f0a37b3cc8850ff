"""Exception hierarchy.

Everything raised on bad input derives from ``ValidationError`` (CLI exit
code 1); everything raised while talking to a remote endpoint derives from
``EndpointError`` (CLI exit code 2).
"""

from __future__ import annotations


class RecipeEvalError(Exception):
    pass


class ValidationError(RecipeEvalError, ValueError):
    pass


class EndpointError(RecipeEvalError):
    pass


# recipe-core
class NoContentTokens(ValidationError):
    pass


# corpus
class MissingColumn(ValidationError):
    pass


class TooFewRecipes(ValidationError):
    pass


# metrics
class EmptyReference(ValidationError):
    pass


class EmptyInput(ValidationError):
    pass


class EmptyTrace(ValidationError):
    pass


class EmptyIngredientList(ValidationError):
    pass


class EmptySteps(ValidationError):
    pass


# allergen knowledge base
class SchemaViolation(ValidationError):
    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


class DuplicateAllergen(ValidationError):
    pass


class InvalidChunkParams(ValidationError):
    pass


class EmptyIndex(ValidationError):
    pass


# prompting / judge
class EmptyField(ValidationError):
    def __init__(self, field: str):
        super().__init__(f"field {field!r} must not be empty")
        self.field = field


class EmptyRecipe(ValidationError):
    pass


class InvalidScorecard(ValidationError):
    pass


class IdMismatch(ValidationError):
    def __init__(self, missing_generated: list[str], missing_references: list[str]):
        super().__init__(
            f"ids without a generated recipe: {missing_generated}; "
            f"ids without a reference: {missing_references}"
        )
        self.missing_generated = missing_generated
        self.missing_references = missing_references


class EndpointUnreachable(EndpointError):
    pass


class AuthFailure(EndpointError):
    pass


class MalformedResponse(EndpointError):
    pass


class UnparseableAfterRetries(EndpointError):
    def __init__(self, attempts: int, last_response: str):
        super().__init__(f"judge output unparseable after {attempts} attempts")
        self.attempts = attempts
        self.last_response = last_response


class RequestRejected(EndpointError):
    """The endpoint refused the request itself (4xx other than auth)."""
