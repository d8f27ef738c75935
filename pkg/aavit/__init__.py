# Adaptive-average-pooling attention vision transformer for face anti-spoofing
__version__ = "0.1.0"
