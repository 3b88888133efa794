"""tinyasr: a from-scratch end-to-end speech recognizer that trains a shared
BLSTM encoder under a weighted sum of a CTC loss and a location-aware
attention loss, emits byte-pair subword units, and decodes with beam search.
"""

__version__ = "0.1.0"
