"""Exception types shared across the package."""


class TCDriveError(Exception):
    """Base class for package-specific failures."""


class ConfigError(TCDriveError):
    """Invalid experiment configuration (unknown key, bad value, bad file)."""


class NormDriftError(TCDriveError):
    """State norm left its tolerance band during propagation (step size too coarse)."""


class DivergedRootError(TCDriveError):
    """A rapidity set with non-finite roots was passed where finite roots are required."""


class CollisionError(TCDriveError):
    """Two rapidities (or mirror x-variables) are closer than the collision tolerance."""


class ZeroRapidityError(TCDriveError):
    """A rapidity sits at the origin, where the flow equations are singular."""


class ConvergenceError(TCDriveError):
    """An iterative solver failed to reach its tolerance."""
