"""edgetalk: natural-language control of MQTT smart devices through an LLM pipeline."""

__version__ = "0.1.0"
