"""Simulated RFID package orientation and material sensing."""
