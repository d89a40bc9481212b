"""
Mini-batch SGD trainer
"""
