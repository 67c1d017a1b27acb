"""csipred: MIMO-OFDM channel sequence simulation, 3-D CNN next-step channel
prediction, and beamforming-oriented evaluation against a sample-and-hold
baseline."""

__version__ = "0.1.0"
