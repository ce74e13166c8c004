"""Fragmented quantum simulation toolkit."""

