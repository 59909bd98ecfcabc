"""VarBPR - numerically stable sigmoid, softmax, entropy and KL primitives"""
