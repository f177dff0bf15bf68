"""hklab: a numerical laboratory for Gibbons-Hawking metrics, glued
hyperkahler triples on collapsing spaces, and their lattice topology."""

__version__ = "0.1.0"
