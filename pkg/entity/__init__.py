"""
Entity package: model structures, datasets, operators and analysis results
"""
