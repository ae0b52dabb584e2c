"""Broadband acoustic direction-of-arrival estimation toolkit.

Core modules:

* ``geometry``: array geometry, steering delays, alias-safe pair selection
* ``spectral``: STFT front end, cross-power spectra, PHAT prefilter
* ``subspace``: covariance, Hermitian eigendecomposition, wideband MUSIC
* ``mccphat``: GCC-PHAT correlation, TDOA estimation, MCC-PHAT spectrum
* ``metrics``: angular errors and cutoff-clamped RMSE trajectory scoring
* ``synth``: deterministic plane-wave scene generator for fixtures
* ``pipeline``: batch localization runs over WAV recordings
* ``service`` / ``cli``: FastAPI wrapper and its thin command-line client
"""

__version__ = "0.1.0"
