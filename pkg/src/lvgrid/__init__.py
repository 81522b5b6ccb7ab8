"""Tariff, curtailment and resource-sharing simulator for radial LV networks."""

__version__ = "0.1.0"
