"""Adapting a multilingual masked language model to a low-resource language.

Language-adaptive pretraining, vocabulary augmentation through the reserved
unused slots, and evaluation with a biaffine dependency parser.
"""

__version__ = "0.1.0"
