"""Open-economy monetary transmission block: equations, perfect-foresight
solver, impulse responses, Monte Carlo moments and calibration presets."""

__version__ = "0.1.0"
