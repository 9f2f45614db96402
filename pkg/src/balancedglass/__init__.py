"""Numerics for balanced multi-species mean-field spin glasses."""
