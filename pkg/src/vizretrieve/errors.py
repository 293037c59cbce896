"""Exception types raised across the package.

Every error that callers are expected to catch derives from VizRetrieveError,
so CLI entry points can map any of them to a nonzero exit in one place.
"""


class VizRetrieveError(Exception):
    pass


class MalformedXml(VizRetrieveError):
    """Input is not well-formed XML."""


class MissingRoot(VizRetrieveError):
    """Document root is not an <svg> element."""


class UnresolvableSize(VizRetrieveError):
    """Canvas size cannot be determined from width/height or viewBox."""


class BadPathData(VizRetrieveError):
    """Path d attribute does not follow the path grammar."""


class BadColor(VizRetrieveError):
    """Color string is not in a supported format."""


class DegenerateInput(VizRetrieveError):
    """Numeric input too degenerate to fit (e.g. fewer than 2 distinct x)."""


class EmptyGraph(VizRetrieveError):
    """No visible elements survive filtering and pruning."""


class ShapeMismatch(VizRetrieveError):
    """Tensor operands have incompatible shapes."""


class DimMismatch(VizRetrieveError):
    """Array dimensionality differs from what a consumer expects."""


class BatchTooSmall(VizRetrieveError):
    """A contrastive batch needs more items than it got."""


class EmptyCorpus(VizRetrieveError):
    """Training or indexing was asked to run over too few items."""


class ZeroVector(VizRetrieveError):
    """A vector that must be normalized has zero norm."""


class UnknownId(VizRetrieveError):
    """Identifier not present in the index or manifest."""


class UnknownMode(VizRetrieveError):
    """Retrieval mode outside the supported set."""


class EmptyRetrieval(VizRetrieveError):
    """Query ran against an index with no eligible items."""


class BadCount(VizRetrieveError):
    """Element count outside its valid range."""


class MissingBitmap(VizRetrieveError):
    """A bitmap file required for rendering or embedding is absent."""


class NoValidPairs(VizRetrieveError):
    """Ingest found no usable svg/png pairs."""


class TypeTooSmall(VizRetrieveError):
    """A chart type has too few items to split."""


class BadGeometry(VizRetrieveError):
    """Image geometry incompatible with the requested operation."""
