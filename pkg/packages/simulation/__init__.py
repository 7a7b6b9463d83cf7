# Simulation Package - synthetic study of exposure uncertainty propagation
