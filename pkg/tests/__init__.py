"""pyisac tests."""
