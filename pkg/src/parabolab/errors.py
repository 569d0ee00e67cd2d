"""Exception hierarchy shared across the package."""


class ParabolabError(Exception):
    """Base class for all package errors."""


class UnderResolvedCylinderError(ParabolabError):
    """A parabolic cylinder intersects too few grid nodes to be averaged."""


class DegenerateInputError(ParabolabError):
    """An estimate ratio was requested for data that makes it 0/0."""


class EllipticityError(ParabolabError):
    """A solve was refused because the requested ellipticity check failed."""


class CertificateError(ParabolabError):
    """A weighted-diagonal energy certificate could not be produced."""


class NonPeriodicAxisError(ParabolabError):
    """A spectral operation was requested along a non-periodic axis."""


class NumericsError(ParabolabError):
    """A numerical kernel (matrix exponential, factorization) failed."""


class ConfigError(ParabolabError):
    """An experiment configuration is invalid."""
