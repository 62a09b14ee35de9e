"""Exception hierarchy. Every error raised by the package derives from TrilqgError."""


class TrilqgError(Exception):
    pass


class DimensionMismatch(TrilqgError, ValueError):
    pass


class IndexOutOfBounds(TrilqgError, IndexError):
    pass


# -- dense solvers -----------------------------------------------------------

class RiccatiError(TrilqgError):
    """Base for Riccati failures; ``stage`` is set when raised inside the coupled pipeline."""

    stage: int | None = None
    side: str | None = None

    def annotate(self, side: str, stage: int) -> "RiccatiError":
        self.side = side
        self.stage = stage
        self.args = (f"[{side} stage {stage}] {self.args[0] if self.args else ''}",)
        return self


class SingularPsi(RiccatiError):
    pass


class SingularPhi(RiccatiError):
    pass


class ImaginaryAxisEigs(RiccatiError):
    def __init__(self, msg: str, distance: float = 0.0):
        super().__init__(msg)
        self.distance = distance


class NoStableSubspace(RiccatiError):
    pass


class RiccatiResidualError(RiccatiError):
    pass


class UnstableA(TrilqgError):
    pass


class SpectraOverlap(TrilqgError):
    pass


class NonzeroD(TrilqgError):
    pass


class ResonantFrequency(TrilqgError):
    pass


# -- plant documents ---------------------------------------------------------

class ParseError(TrilqgError):
    pass


class SchemaError(TrilqgError):
    pass


class StructureError(TrilqgError):
    pass


# -- coupled pipeline --------------------------------------------------------

class SingularStep2System(TrilqgError):
    def __init__(self, msg: str, condition: float):
        super().__init__(msg)
        self.condition = condition


class UnstableDiagonalBlock(TrilqgError):
    pass


class PSDViolation(TrilqgError):
    def __init__(self, msg: str, index: int, min_eig: float):
        super().__init__(msg)
        self.index = index
        self.min_eig = min_eig


# -- synthesis / certification -----------------------------------------------

class UnstableClosedLoop(TrilqgError):
    def __init__(self, msg: str, eigenvalues=None):
        super().__init__(msg)
        self.eigenvalues = eigenvalues


class SingularPsiBlock(TrilqgError):
    pass


class SingularPhiBlock(TrilqgError):
    pass


class UnstableFactor(TrilqgError):
    pass


class IndexOutOfDiagram(TrilqgError, IndexError):
    pass


class PerturbationDestabilized(TrilqgError):
    pass
