"""Drive a recommendation feed toward a <topic, sentiment> goal and record the pathway."""

__version__ = "0.1.0"
