"""Error hierarchy. `exit_code` is the process status the commands exit with."""


class ReduktorError(Exception):
    exit_code = 3


class ConfigParseError(ReduktorError):
    exit_code = 1


class InvalidInputError(ReduktorError):
    exit_code = 2


class NumericalError(ReduktorError):
    exit_code = 3


# doubly stochastic validation

class NotSquareError(InvalidInputError):
    def __init__(self, shape):
        self.shape = tuple(shape)
        super().__init__(f"matrix is not square: shape {self.shape}")


class RowSumViolationError(InvalidInputError):
    def __init__(self, row, magnitude):
        self.row = row
        self.magnitude = magnitude
        super().__init__(f"row {row} sums to {magnitude!r}, expected 1")


class ColSumViolationError(InvalidInputError):
    def __init__(self, col, magnitude):
        self.col = col
        self.magnitude = magnitude
        super().__init__(f"column {col} sums to {magnitude!r}, expected 1")


class NegativeEntryError(InvalidInputError):
    def __init__(self, index, magnitude):
        self.index = tuple(index)
        self.magnitude = magnitude
        super().__init__(f"entry {self.index} is {magnitude!r}, below zero")


class InvalidPartitionError(InvalidInputError):
    pass


class EmptySampleListError(InvalidInputError):
    pass


class DimensionTooLargeForExhaustiveError(InvalidInputError):
    def __init__(self, n, cap):
        self.n = n
        self.cap = cap
        super().__init__(f"exhaustive permutation search refused for n={n} (cap {cap})")


# bath models

class NonHermitianModelError(InvalidInputError):
    def __init__(self, a, b, residual):
        self.block = (a, b)
        self.residual = residual
        super().__init__(f"B[{a}][{b}] differs from B[{b}][{a}]^dagger by {residual:.3e}")


class NonUnitaryBasisError(InvalidInputError):
    def __init__(self, residual):
        self.residual = residual
        super().__init__(f"measurement basis is not unitary (residual {residual:.3e})")


class BlockIndexOutOfRangeError(InvalidInputError):
    pass


# integral equation

class KernelNormalizationViolationError(InvalidInputError):
    def __init__(self, T, residual):
        self.T = T
        self.residual = residual
        super().__init__(f"kernel normalization fails at T={T}: residual {residual:.3e}")


class UnsupportedOrderError(InvalidInputError):
    pass


class GridAlignmentError(InvalidInputError):
    pass


class GridTooCoarseError(NumericalError):
    def __init__(self, h_nu, limit):
        self.h_nu = h_nu
        self.limit = limit
        super().__init__(
            f"grid too coarse: h*nu = {h_nu:.4g} exceeds {limit}; increase steps"
        )


class TailBoundExceedsTolError(NumericalError):
    def __init__(self, tail, tol, n_max):
        self.tail = tail
        self.tol = tol
        self.n_max = n_max
        super().__init__(f"Poisson tail {tail:.3e} beyond N_max={n_max} exceeds {tol:.1e}")


class ValidationFailureError(NumericalError):
    def __init__(self, node, residual, cause=None):
        self.node = node
        self.residual = residual
        super().__init__(f"node {node} is not doubly stochastic (residual {residual:.3e}): {cause}")


# scalar reduction

class ValueEscapeError(NumericalError):
    def __init__(self, node, value):
        self.node = node
        self.value = value
        super().__init__(f"beta left [0, 1] at node {node}: {value!r}")


class NonRealReconstructionError(NumericalError):
    def __init__(self, residue):
        self.residue = residue
        super().__init__(f"reconstructed beta has imaginary residue {residue:.3e}")


# asymptotics

class NotCyclicOfOrderKError(InvalidInputError):
    pass


class PeriodMismatchError(InvalidInputError):
    def __init__(self, residual):
        self.residual = residual
        super().__init__(f"source is not 2*pi periodic (residual {residual:.3e})")
