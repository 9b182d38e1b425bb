"""Exception types raised by the package."""


class ParameterError(ValueError):
    """Invalid ensemble, channel or control parameters."""


class GraphSamplingError(RuntimeError):
    """The socket sampler could not complete a graph within its retry budget."""
