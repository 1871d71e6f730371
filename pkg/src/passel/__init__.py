"""Sequence-selection shaping over a nonlinear WDM fiber link.

The package covers the full batch pipeline: information bits through
sphere-shaped or Maxwell-Boltzmann amplitude shaping, transmit sequence
selection (bit-scrambling or symbol-interleaving), split-step Manakov
propagation over an amplified multi-span link, a coherent receiver chain,
and bit-metric achievable-rate / spectral-efficiency estimation.
"""

__version__ = "0.1.0"
