"""TDS-OFDM link simulator with prior-aided sparse channel estimation."""
__version__ = "0.1.0"
