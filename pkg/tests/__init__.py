"""Tests for flexclear."""
