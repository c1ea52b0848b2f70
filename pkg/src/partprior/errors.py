"""Exception types shared across the package."""


class PartPriorError(Exception):
    pass


class DegenerateSegment(PartPriorError, ValueError):
    """Two keypoints coincide, so no shape can be oriented between them."""


class InsufficientKeypoints(PartPriorError, ValueError):
    pass


class EmptySupervision(PartPriorError, ValueError):
    """The supervision map has no confident (F or B) pixels."""


class DimensionMismatch(PartPriorError, ValueError):
    pass


class ShapeMismatch(DimensionMismatch):
    pass


class ParseError(PartPriorError, ValueError):
    pass


class SchemaError(PartPriorError, ValueError):
    pass


class InvalidConfig(PartPriorError, ValueError):
    pass
