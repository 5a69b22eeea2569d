"""
OTA-DSGD - decentralized SGD over noisy wireless links with P2P and over-the-air MAC consensus.
"""

__version__ = "1.0.0"
