"""Secrecy energy efficiency power allocation for AN-aided OFDM cognitive radio."""
