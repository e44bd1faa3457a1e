"""Hashing, base-62 encoding, key weights and signatures."""
