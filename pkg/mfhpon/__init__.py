"""
mfhpon - upstream DWBA simulator for mobile fronthaul over TWDM-EPON
"""

__version__ = "0.1.0"
