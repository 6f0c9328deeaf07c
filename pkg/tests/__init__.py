"""Tests for the qotp package."""
