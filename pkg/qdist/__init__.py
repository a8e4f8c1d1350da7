# qdist: regression and decomposition with distributional predictors
__version__ = "0.1.0"
