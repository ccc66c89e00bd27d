"""Equal-order stabilized virtual element solver for coupled Stokes-temperature flow."""

__version__ = "0.1.0"
