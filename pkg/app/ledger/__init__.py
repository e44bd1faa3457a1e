"""Ledger forest, block verification and forest files."""
