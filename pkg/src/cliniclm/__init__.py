"""Desk-scale clinical language-model laboratory.

Train a small decoder-only LM, generate synthetic clinical-style text
under a top-p + temperature sampling contract, adapt the frozen model to
relation extraction and question answering with soft prompts, de-identify
text with safe-harbor rules, and run blinded human review sessions whose
statistics (percent agreement, Gwet's AC1, Welch and exact binomial
tests) come out as publication-style tables.
"""

__version__ = "0.1.0"
