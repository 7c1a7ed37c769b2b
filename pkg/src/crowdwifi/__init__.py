"""crowdwifi: equilibrium engine for crowdsourced Wi-Fi community networks."""

__version__ = "0.1.0"
