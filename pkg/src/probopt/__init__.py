"""Subword encoding, cross-entropy tuning, positional biases, sparse attention
and staircase KV-cache quantization, with brute-force oracles for each."""

__version__ = "0.1.0"
