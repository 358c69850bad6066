"""Smooth loss models for Lq-penalized problems."""
