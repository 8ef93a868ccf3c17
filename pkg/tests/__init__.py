"""
Tests for the neuromorphic learning workbench
"""
