"""Tests for synthetic monitoring stations."""
