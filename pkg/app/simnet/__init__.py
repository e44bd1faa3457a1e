"""Seeded discrete-event network built on simpy."""
