"""Two-step literary translation evaluation: rubric scoring plus
verification-question grading, with the rater statistics to validate both."""

__version__ = "0.1.0"
