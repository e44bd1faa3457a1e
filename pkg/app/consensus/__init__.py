"""Validator selection: ranking, negotiation and genesis blocks."""
