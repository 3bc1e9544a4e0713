"""Graph anomaly detection via a learnable graph metric and multi-scale KDE.

The package trains a graph convolutional encoder, a maximum-mean-discrepancy
distance over node embeddings, and a mixture-of-bandwidths kernel density
estimator end to end, by contrasting training graphs against spectrally and
feature-perturbed counterparts. Trained models score graphs by estimated
density; low-density graphs are flagged as anomalies.
"""

__version__ = "0.1.0"
