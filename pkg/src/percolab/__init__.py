"""Chemical distance in supercritical Bernoulli bond percolation on Z^d:
coupled samplers, multiscale good boxes, shells and bypasses, and the Monte
Carlo drivers built on them."""

__version__ = "0.1.0"
