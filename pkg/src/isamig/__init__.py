"""Seeded simulator and toolkit for fleet-wide x86 -> Arm ISA migration."""

__version__ = "0.1.0"
