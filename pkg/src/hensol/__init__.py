"""Numerical toolkit for complex Henon maps: escape-time potentials,
Boettcher-type coordinates, solenoid codings, saddle continuation and
external rays, with desk-scale verification suites."""

__version__ = "0.1.0"
