from .selectors import (
    BandwidthMatrix,
    UnivariateBandwidth,
    bandwidth_scott,
    bandwidth_scott_matrix,
    bandwidth_sheather_jones,
    bandwidth_silverman,
    regularized_covariance,
    select_row_bandwidths,
)

__all__ = [
    "UnivariateBandwidth",
    "BandwidthMatrix",
    "bandwidth_silverman",
    "bandwidth_scott",
    "bandwidth_sheather_jones",
    "bandwidth_scott_matrix",
    "regularized_covariance",
    "select_row_bandwidths",
]
