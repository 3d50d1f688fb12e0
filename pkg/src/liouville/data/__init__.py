"""Committed data resources: golden regression tables and their configs."""
