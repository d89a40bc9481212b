"""
Source-level and model-level mutation operators
"""
