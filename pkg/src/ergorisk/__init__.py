"""Multi-modal ergonomic risk scoring: RULA, HAL and BACH time series from
synchronized body pose, hand pose, goniometer and tactile glove streams."""

__version__ = "0.1.0"
