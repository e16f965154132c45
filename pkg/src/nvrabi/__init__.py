"""Rate-equation simulation of pulsed ODMR on NV centers under widefield
detection, with fitting and field-mapping tools for the resulting Rabi curves."""

__version__ = "0.1.0"
