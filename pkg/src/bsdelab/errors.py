"""Exception types raised across bsdelab."""


class BsdeLabError(Exception):
    """Base class for library errors."""


class ModulusDegeneracyError(BsdeLabError, ValueError):
    """A modulus vanishes at a strictly positive argument."""


class DivergentEnvelopeError(BsdeLabError, ValueError):
    """Pasch-Hausdorff regularization requested with k <= growth constant."""


class NonLipschitzDriverError(BsdeLabError, ValueError):
    """A solver that needs a Lipschitz driver was handed one without a constant."""


class WindowContractError(BsdeLabError, RuntimeError):
    """A Girsanov window invariant is broken inside the window."""


class StageError(BsdeLabError, RuntimeError):
    """A stage of the convergence experiment violated its contract."""

    def __init__(self, stage, message):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
