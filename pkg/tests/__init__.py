"""Tests for gle_homog."""
