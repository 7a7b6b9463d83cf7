# Engine Package - Bayesian exposure uncertainty propagation
