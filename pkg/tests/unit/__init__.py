"""Unit tests for the ALM dominance planner."""
