"""duocast: dual-stream multivariate time series forecasting.

A numerical stream tokenizes history with adaptive multi-scale patches;
a textual stream summarizes each channel's trend as a short structured
caption and turns it into a coarse forecast correction. A learnable
per-channel, per-step weight field blends the two streams.
"""

__version__ = "0.1.0"
