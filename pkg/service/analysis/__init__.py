"""
Kill matrix, metrics and reports
"""
