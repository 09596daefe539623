"""Lexical simplification without parallel corpora.

An edit predictor learns per-token keep/mask decisions against a frozen
style discriminator, guided by confusion, invariance, and distilled
pseudo-label losses; masked positions are then filled by a cloze model
that sees the original sentence next to the masked one.
"""

__version__ = "0.1.0"
