"""
Dataset ingestion and controlled sampling
"""
