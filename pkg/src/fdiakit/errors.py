"""Exception types shared across the toolkit."""


class FdiakitError(Exception):
    """Base class for all toolkit errors."""


# --- network / grid model ---

class BadBusIndex(FdiakitError):
    pass


class NonpositiveReactance(FdiakitError):
    pass


class DisconnectedGraph(FdiakitError):
    pass


class SingularSystem(FdiakitError):
    pass


class UnbalancedInjections(FdiakitError):
    pass


# --- generic numerics ---

class DimensionMismatch(FdiakitError):
    pass


class ShapeMismatch(FdiakitError):
    pass


# --- estimation / detection ---

class InsufficientSamples(FdiakitError):
    pass


class EmptyValidationSet(FdiakitError):
    pass


class UncalibratedDetector(FdiakitError):
    pass


class EmptySet(FdiakitError):
    pass


class NonFiniteActivation(FdiakitError):
    pass


# --- attacks ---

class TargetNotFound(FdiakitError):
    pass


class EmptyTargets(FdiakitError):
    pass


# --- file formats ---

class ParseError(FdiakitError):
    pass


class MissingData(FdiakitError):
    pass


class NonnegativityViolation(FdiakitError):
    pass


class FormatVersionMismatch(FdiakitError):
    pass


class ChecksumMismatch(FdiakitError):
    pass
