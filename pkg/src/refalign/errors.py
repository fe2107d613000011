"""Exception hierarchy. All errors derive from ``RefAlignError`` (a ValueError)."""


class RefAlignError(ValueError):
    pass


class PointAtInfinityError(RefAlignError):
    pass


class SingularHomographyError(RefAlignError):
    pass


class DegeneratePlaneError(RefAlignError):
    """The query camera centre lies on the scene plane."""


class DegenerateConfigurationError(RefAlignError):
    """Point set cannot determine a homography (collinear or duplicate points)."""


class InsufficientMatchesError(RefAlignError):
    pass


class NoModelError(RefAlignError):
    """Every sampled minimal set was degenerate."""


class ImageTooSmallError(RefAlignError):
    pass


class EmptyFeatureSetError(RefAlignError):
    pass


class ShapeMismatchError(RefAlignError):
    pass


class UnknownLabelError(RefAlignError):
    pass


class MissingAnnotationError(RefAlignError):
    def __init__(self, pair_ids):
        self.pair_ids = sorted(pair_ids)
        super().__init__("missing annotations for pairs: " + ", ".join(self.pair_ids))


class InfeasibleConfigError(RefAlignError):
    pass


class ParseError(RefAlignError):
    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)


class NonMonotonicTimestampError(ParseError):
    pass


class BadQuaternionError(ParseError):
    pass
