"""
Inference engine: layers, forward pass, model files
"""
