"""Test suite for the ALM dominance planner."""
