"""
Service package: inference engine, training, datasets, mutation and analysis
"""
