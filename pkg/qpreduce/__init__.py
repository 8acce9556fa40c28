"""
qpreduce: reducibility of quasi-periodic SL(2,R) skew-product flows.

Formal series for the conjugation and counterterm, their tree expansion,
the renormalized self-energy, numerical verification and the lambda0 scan.
"""

__version__ = '0.1.0'
