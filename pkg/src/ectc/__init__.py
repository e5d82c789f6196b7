"""Weakly supervised sequence labeling with a similarity-reweighted CTC lattice."""
