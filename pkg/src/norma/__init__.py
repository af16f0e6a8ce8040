"""Reference intervals for longitudinal blood biomarkers.

Population table intervals, personalized GMM-setpoint intervals, and
model-derived conditional prediction intervals, plus the evaluation and
synthetic-cohort machinery to compare them.
"""

__version__ = "0.1.0"
