# Downscale Package - first-stage exposure model producing ensembles
