"""Exception types raised across the package."""


class TPRecogError(Exception):
    """Base class for all package errors."""


class DegenerateTriple(TPRecogError):
    """Three points are coincident or collinear."""


class OutOfNeighborhood(TPRecogError):
    """Mean distance of a triple reaches the neighborhood radius."""


class NonWatertightMesh(TPRecogError):
    """Mesh has open or non-manifold edges, so volume membership is undefined."""


class EmptyView(TPRecogError):
    """No visible surface point survived synthesis."""


class EmptyClass(TPRecogError):
    """A shape class has no training samples."""


class UnknownClass(TPRecogError):
    """Shape class is not represented in the model."""


class InsufficientSupport(TPRecogError):
    """Too few points for a local fit."""


class DegenerateFit(TPRecogError):
    """Least-squares normal equations are rank deficient."""


class FormatError(TPRecogError):
    """A text file does not follow its documented format."""

    def __init__(self, message, path=None, line=None):
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)
        self.path = path
        self.line = line
